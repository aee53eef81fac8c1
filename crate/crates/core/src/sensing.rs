//! Point sensors: readings `u(x_k*, t)` and errors against the references `u_k*`.

use crate::grid::{sample_at, Field, Grid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    points: Vec<Vec<f64>>,
    references: Vec<f64>,
}

impl SensorArray {
    pub fn new(points: Vec<Vec<f64>>, references: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("at least one sensor is required".into()));
        }
        if points.len() != references.len() {
            return Err(Error::Config(format!(
                "{} sensor points but {} references",
                points.len(),
                references.len()
            )));
        }
        Ok(Self { points, references })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn references(&self) -> &[f64] {
        &self.references
    }

    pub fn validate(&self, grid: &Grid) -> Vec<String> {
        let mut errs = Vec::new();
        for (k, p) in self.points.iter().enumerate() {
            if !grid.is_interior(p) {
                errs.push(format!(
                    "sensor {} at {p:?} is not an interior point (needs more than one grid spacing to the boundary)",
                    k + 1
                ));
            }
        }
        for (k, r) in self.references.iter().enumerate() {
            if !r.is_finite() {
                errs.push(format!("sensor {} reference {r} is not finite", k + 1));
            }
        }
        errs
    }

    pub fn read(&self, field: &Field) -> Result<Vec<f64>> {
        self.points.iter().map(|p| sample_at(field, p)).collect()
    }

    pub fn error_signal(&self, readings: &[f64]) -> Result<Vec<f64>> {
        if readings.len() != self.references.len() {
            return Err(Error::Precondition(format!(
                "{} readings for {} sensors",
                readings.len(),
                self.references.len()
            )));
        }
        Ok(readings
            .iter()
            .zip(&self.references)
            .map(|(r, u)| r - u)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_and_linear_fields() {
        let grid = Grid::line(1.0, 41).unwrap();
        let sensors = SensorArray::new(vec![vec![0.25], vec![0.75]], vec![0.0, 0.0]).unwrap();
        assert_eq!(
            sensors.read(&Field::constant(&grid, 2.5)).unwrap(),
            vec![2.5, 2.5]
        );
        let r = sensors.read(&grid.field_from_fn(|x, _| x)).unwrap();
        assert!((r[0] - 0.25).abs() < 1e-15 && (r[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cosine_midpoint() {
        let grid = Grid::line(1.0, 129).unwrap();
        let sensors = SensorArray::new(vec![vec![0.5]], vec![0.0]).unwrap();
        let r = sensors
            .read(&grid.field_from_fn(|x, _| (PI * x).cos()))
            .unwrap();
        assert!(r[0].abs() <= 1e-6, "{}", r[0]);
    }

    #[test]
    fn error_signal_subtracts_references() {
        let s = SensorArray::new(vec![vec![0.3], vec![0.6]], vec![0.5, 0.5]).unwrap();
        assert_eq!(s.error_signal(&[0.5, 0.5]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.error_signal(&[1.0, 0.0]).unwrap(), vec![0.5, -0.5]);
        let one = SensorArray::new(vec![vec![0.3]], vec![0.5]).unwrap();
        let e = one.error_signal(&[0.2]).unwrap();
        assert!((e[0] + 0.3).abs() < 1e-15);
        assert!(one.error_signal(&[0.2, 0.1]).is_err());
    }

    #[test]
    fn read_is_linear() {
        let grid = Grid::rectangle(1.0, 1.0, 21, 21).unwrap();
        let s = SensorArray::new(vec![vec![0.33, 0.41], vec![0.8, 0.2]], vec![0.0, 0.0]).unwrap();
        let f = grid.field_from_fn(|x, y| (3.0 * x).sin() * y);
        let g = grid.field_from_fn(|x, y| x * x - y);
        let lhs = s.read(&f.axpby(2.0, &g, -0.5)).unwrap();
        let (rf, rg) = (s.read(&f).unwrap(), s.read(&g).unwrap());
        for k in 0..2 {
            assert!((lhs[k] - (2.0 * rf[k] - 0.5 * rg[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_sensor_rejected() {
        let grid = Grid::line(1.0, 11).unwrap();
        let s = SensorArray::new(vec![vec![0.05], vec![0.5]], vec![0.0, 0.0]).unwrap();
        assert_eq!(s.validate(&grid).len(), 1);
        assert!(s.read(&Field::zeros(&grid)).is_err());
    }
}
