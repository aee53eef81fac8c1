//! Uniform node grids on intervals and rectangles, the homogeneous-Neumann
//! Laplacian, and point sampling by multilinear interpolation.
//!
//! Nodes are stored with the x index varying fastest. Coordinates run from
//! `0` to `extent` on each axis, boundary nodes included.

use crate::{Error, Result};

/// Uniform node grid over `[0, Lx]` or `[0, Lx] x [0, Ly]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    extents: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(extents: &[f64], counts: &[usize]) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::Config(format!(
                "grid dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        if extents.len() != counts.len() {
            return Err(Error::Config(format!(
                "grid has {} extents but {} node counts",
                extents.len(),
                counts.len()
            )));
        }
        let mut spacing = Vec::with_capacity(counts.len());
        for (axis, (&len, &n)) in extents.iter().zip(counts).enumerate() {
            if n < 3 {
                return Err(Error::Config(format!(
                    "axis {axis} has {n} nodes, at least 3 are required"
                )));
            }
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::Config(format!(
                    "axis {axis} extent {len} must be finite and positive"
                )));
            }
            spacing.push(len / (n - 1) as f64);
        }
        Ok(Self {
            extents: extents.to_vec(),
            counts: counts.to_vec(),
            spacing,
        })
    }

    pub fn line(length: f64, nodes: usize) -> Result<Self> {
        Self::new(&[length], &[nodes])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the node with per-axis indices `idx`.
    #[inline]
    pub fn index(&self, idx: &[usize]) -> usize {
        match idx {
            [i] => *i,
            [i, j] => j * self.counts[0] + i,
            _ => unreachable!("grid dimension is 1 or 2"),
        }
    }

    /// Per-axis indices of flat node `k`.
    pub fn unravel(&self, k: usize) -> [usize; 2] {
        let nx = self.counts[0];
        [k % nx, k / nx]
    }

    /// Physical coordinates of flat node `k` (unused axes are zero).
    pub fn coords(&self, k: usize) -> [f64; 2] {
        let [i, j] = self.unravel(k);
        let x = i as f64 * self.spacing[0];
        let y = if self.dim() == 2 {
            j as f64 * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Trapezoidal quadrature weight of each node (product rule in 2D).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let axis_weights: Vec<Vec<f64>> = self
            .counts
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| {
                (0..n)
                    .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
                    .collect()
            })
            .collect();
        (0..self.len())
            .map(|k| {
                let [i, j] = self.unravel(k);
                let mut w = axis_weights[0][i];
                if self.dim() == 2 {
                    w *= axis_weights[1][j];
                }
                w
            })
            .collect()
    }

    /// Measure of the domain.
    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// True when `point` lies more than one spacing away from every boundary face.
    pub fn is_interior(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.extents.iter().zip(&self.spacing))
                .all(|(&p, (&len, &h))| p.is_finite() && p > h && len - p > h)
    }

    /// Grid with the same extents and `2 (n - 1) + 1` nodes per axis.
    pub fn refined(&self) -> Self {
        let counts: Vec<usize> = self.counts.iter().map(|&n| 2 * (n - 1) + 1).collect();
        Self::new(&self.extents, &counts).expect("refining a valid grid is valid")
    }

    /// Build a field by evaluating `f(x, y)` at every node (`y = 0` in 1D).
    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = (0..self.len())
            .map(|k| {
                let [x, y] = self.coords(k);
                f(x, y)
            })
            .collect();
        Field {
            grid: self.clone(),
            values,
        }
    }
}

/// Nodal values of the state on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "field value at node {k} is not finite"
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal integral over the domain.
    pub fn integral(&self) -> f64 {
        self.grid
            .trapezoid_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &Field, b: f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }
}

/// Second-order Laplacian with homogeneous Neumann conditions imposed by
/// mirroring the first interior node across each boundary face.
pub fn laplacian_neumann(field: &Field) -> Result<Field> {
    let grid = field.grid();
    if grid.counts().iter().any(|&n| n < 3) {
        return Err(Error::Config(
            "the Neumann Laplacian needs at least 3 nodes per axis".into(),
        ));
    }
    let mut out = vec![0.0; grid.len()];
    apply_laplacian(grid, field.values(), &mut out);
    Field::new(grid, out)
}

/// Raw stencil application on nodal slices, shared with the implicit solver.
pub(crate) fn apply_laplacian(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let nx = grid.counts()[0];
    let hx2 = grid.spacing()[0].powi(2);
    let second_diff = |m: f64, c: f64, p: f64| m - 2.0 * c + p;
    match grid.dim() {
        1 => {
            for i in 0..nx {
                let left = if i == 0 { u[1] } else { u[i - 1] };
                let right = if i == nx - 1 { u[nx - 2] } else { u[i + 1] };
                out[i] = second_diff(left, u[i], right) / hx2;
            }
        }
        _ => {
            let ny = grid.counts()[1];
            let hy2 = grid.spacing()[1].powi(2);
            for j in 0..ny {
                let jm = if j == 0 { 1 } else { j - 1 };
                let jp = if j == ny - 1 { ny - 2 } else { j + 1 };
                for i in 0..nx {
                    let im = if i == 0 { 1 } else { i - 1 };
                    let ip = if i == nx - 1 { nx - 2 } else { i + 1 };
                    let c = u[j * nx + i];
                    let dxx = second_diff(u[j * nx + im], c, u[j * nx + ip]) / hx2;
                    let dyy = second_diff(u[jm * nx + i], c, u[jp * nx + i]) / hy2;
                    out[j * nx + i] = dxx + dyy;
                }
            }
        }
    }
}

/// Multilinear interpolation of `field` at an interior `point`.
pub fn sample_at(field: &Field, point: &[f64]) -> Result<f64> {
    let grid = field.grid();
    if !grid.is_interior(point) {
        return Err(Error::Precondition(format!(
            "sample point {point:?} is not interior (must be more than one spacing from the boundary)"
        )));
    }
    let locate = |axis: usize, p: f64| {
        let h = grid.spacing()[axis];
        let n = grid.counts()[axis];
        let cell = ((p / h).floor() as usize).min(n - 2);
        let frac = p / h - cell as f64;
        (cell, frac)
    };
    let u = field.values();
    let (i, fx) = locate(0, point[0]);
    if grid.dim() == 1 {
        return Ok((1.0 - fx) * u[i] + fx * u[i + 1]);
    }
    let (j, fy) = locate(1, point[1]);
    let nx = grid.counts()[0];
    let at = |ii: usize, jj: usize| u[jj * nx + ii];
    Ok((1.0 - fx) * (1.0 - fy) * at(i, j)
        + fx * (1.0 - fy) * at(i + 1, j)
        + (1.0 - fx) * fy * at(i, j + 1)
        + fx * fy * at(i + 1, j + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_is_harmonic() {
        for grid in [
            Grid::line(1.0, 9).unwrap(),
            Grid::rectangle(2.0, 1.0, 7, 5).unwrap(),
        ] {
            let lap = laplacian_neumann(&Field::constant(&grid, 3.25)).unwrap();
            assert!(lap.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn cosine_second_derivative() {
        let grid = Grid::line(1.0, 201).unwrap();
        let f = grid.field_from_fn(|x, _| (PI * x).cos());
        let lap = laplacian_neumann(&f).unwrap();
        let err = (0..grid.len())
            .map(|k| {
                let x = grid.coords(k)[0];
                (lap.values()[k] + PI * PI * (PI * x).cos()).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "max error {err}");
    }

    #[test]
    fn cosine_error_is_second_order() {
        let err = |n| {
            let grid = Grid::line(1.0, n).unwrap();
            let f = grid.field_from_fn(|x, _| (PI * x).cos());
            let lap = laplacian_neumann(&f).unwrap();
            (0..grid.len())
                .map(|k| (lap.values()[k] + PI * PI * f.values()[k]).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(33), err(65));
        let order = (coarse / fine).log2();
        assert!((order - 2.0).abs() <= 0.2, "order {order}");
    }

    #[test]
    fn linear_field_stencil_by_hand() {
        // N = 5 on [0, 1], h = 1/4, u = x: interior zero, boundary +-2 slope / h.
        let grid = Grid::line(1.0, 5).unwrap();
        let f = grid.field_from_fn(|x, _| x);
        let lap = laplacian_neumann(&f).unwrap();
        let v = lap.values();
        assert_eq!(&v[1..4], &[0.0, 0.0, 0.0]);
        assert!((v[0] - 8.0).abs() < 1e-12);
        assert!((v[4] + 8.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_nodes_is_config_error() {
        assert!(matches!(Grid::line(1.0, 2), Err(Error::Config(_))));
        assert!(matches!(
            Grid::rectangle(1.0, 1.0, 5, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sampling_reproduces_multilinear_fields() {
        let line = Grid::line(1.0, 11).unwrap();
        let c = Field::constant(&line, -1.5);
        assert_eq!(sample_at(&c, &[0.42]).unwrap(), -1.5);
        let lin = line.field_from_fn(|x, _| x);
        assert!((sample_at(&lin, &[0.37]).unwrap() - 0.37).abs() < 1e-15);

        let square = Grid::rectangle(1.0, 1.0, 11, 11).unwrap();
        let xy = square.field_from_fn(|x, y| x * y);
        let s = sample_at(&xy, &[0.3, 0.5]).unwrap();
        assert!((s - 0.15).abs() < 1e-14, "{s}");
        // off-node point inside a cell
        let s = sample_at(&xy, &[0.33, 0.57]).unwrap();
        assert!((s - 0.33 * 0.57).abs() < 1e-14, "{s}");
    }

    #[test]
    fn boundary_points_are_rejected() {
        let line = Grid::line(1.0, 11).unwrap();
        let f = Field::zeros(&line);
        for p in [0.0, 1.0, 0.1, 0.95, -0.2, 1.3] {
            assert!(matches!(sample_at(&f, &[p]), Err(Error::Precondition(_))));
        }
        assert!(sample_at(&f, &[0.11]).is_ok());
    }

    #[test]
    fn weights_integrate_the_domain() {
        let g = Grid::rectangle(2.0, 0.5, 9, 4).unwrap();
        let total: f64 = g.trapezoid_weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }
}
