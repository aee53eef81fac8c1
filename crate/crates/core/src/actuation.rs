//! Interior actuators: nonnegative spatial profiles `g_j(x) e_j(t)` and the
//! control source `Σ_j g_j κ_j`.

use serde::{Deserialize, Serialize};

use crate::grid::{Field, Grid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Shape {
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    /// Ball of `radius` around `center` (closed ball, nodes on the rim included).
    Indicator {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
}

/// Time modulation of a profile; always in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    #[default]
    Constant,
    /// `1 - exp(-t / tau)`.
    Ramp { tau: f64 },
    /// `(1 + cos(2 pi t / period)) / 2`.
    Pulse { period: f64 },
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::Ramp { tau } => 1.0 - (-t / tau).exp(),
            Envelope::Pulse { period } => {
                0.5 * (1.0 + (2.0 * std::f64::consts::PI * t / period).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorProfile {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default)]
    pub envelope: Envelope,
}

impl ActuatorProfile {
    pub fn gaussian(center: &[f64], width: f64, amplitude: f64) -> Self {
        Self {
            shape: Shape::Gaussian {
                center: center.to_vec(),
                width,
                amplitude,
            },
            envelope: Envelope::Constant,
        }
    }

    pub fn indicator(center: &[f64], radius: f64, amplitude: f64) -> Self {
        Self {
            shape: Shape::Indicator {
                center: center.to_vec(),
                radius,
                amplitude,
            },
            envelope: Envelope::Constant,
        }
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = envelope;
        self
    }

    fn center(&self) -> &[f64] {
        match &self.shape {
            Shape::Gaussian { center, .. } | Shape::Indicator { center, .. } => center,
        }
    }

    fn amplitude(&self) -> f64 {
        match self.shape {
            Shape::Gaussian { amplitude, .. } | Shape::Indicator { amplitude, .. } => amplitude,
        }
    }

    /// Spatial factor at `x`.
    pub fn shape_at(&self, x: &[f64]) -> f64 {
        let dist2: f64 = self
            .center()
            .iter()
            .zip(x)
            .map(|(c, p)| (p - c) * (p - c))
            .sum();
        match self.shape {
            Shape::Gaussian {
                width, amplitude, ..
            } => amplitude * (-dist2 / (2.0 * width * width)).exp(),
            Shape::Indicator {
                radius, amplitude, ..
            } => {
                if dist2 <= radius * radius {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.shape_at(x) * self.envelope.eval(t)
    }

    /// Nodal values of the spatial factor.
    pub fn shape_on(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|k| {
                let c = grid.coords(k);
                self.shape_at(&c[..grid.dim()])
            })
            .collect()
    }

    fn validate(&self, grid: &Grid) -> Vec<String> {
        let mut errs = Vec::new();
        let center = self.center();
        let inside = center.len() == grid.dim()
            && center
                .iter()
                .zip(grid.extents())
                .all(|(&c, &len)| c > 0.0 && c < len);
        if !inside {
            errs.push(format!(
                "actuator center {center:?} must lie strictly inside the domain"
            ));
        }
        if !(self.amplitude() >= 0.0 && self.amplitude().is_finite()) {
            errs.push(format!(
                "actuator amplitude {} must be finite and nonnegative (profiles are nonnegative)",
                self.amplitude()
            ));
        }
        match self.shape {
            Shape::Gaussian { width, .. } if !(width > 0.0) => {
                errs.push(format!("gaussian width {width} must be positive"))
            }
            Shape::Indicator { radius, .. } if !(radius > 0.0) => {
                errs.push(format!("indicator radius {radius} must be positive"))
            }
            _ => {}
        }
        match self.envelope {
            Envelope::Ramp { tau } if !(tau > 0.0) => {
                errs.push(format!("ramp envelope tau {tau} must be positive"))
            }
            Envelope::Pulse { period } if !(period > 0.0) => {
                errs.push(format!("pulse envelope period {period} must be positive"))
            }
            _ => {}
        }
        errs
    }
}

/// Integrability exponents for the mixed `L^q(0, T; L^p(Ω))` norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
}

impl Exponents {
    /// `q = 2`, `p = d`.
    pub fn for_dim(dim: usize) -> Self {
        Self {
            p: dim as f64,
            q: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    /// `Σ_j ||g_j||_{L1(Q_T)}`.
    pub c3: f64,
    /// `S Σ_j ||g_j||_{Lq(Lp)}`.
    pub c4: f64,
    /// Set when a constant vanishes (no actuation authority).
    pub degenerate: bool,
}

/// Number of uniform intervals for time quadratures of the envelopes.
const TIME_QUADRATURE_INTERVALS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorBank {
    profiles: Vec<ActuatorProfile>,
}

impl ActuatorBank {
    pub fn new(profiles: Vec<ActuatorProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::Config("at least one actuator is required".into()));
        }
        Ok(Self { profiles })
    }

    /// Collect all profile violations against `grid`.
    pub fn validate(&self, grid: &Grid) -> Vec<String> {
        self.profiles
            .iter()
            .enumerate()
            .flat_map(|(j, p)| {
                p.validate(grid)
                    .into_iter()
                    .map(move |e| format!("actuator {}: {e}", j + 1))
            })
            .collect()
    }

    pub fn profiles(&self) -> &[ActuatorProfile] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Precomputes nodal shapes for repeated source assembly on one grid.
    pub fn discretize(&self, grid: &Grid) -> DiscreteBank {
        DiscreteBank {
            grid: grid.clone(),
            shapes: self.profiles.iter().map(|p| p.shape_on(grid)).collect(),
            envelopes: self.profiles.iter().map(|p| p.envelope).collect(),
        }
    }

    /// Field `Σ_j g_j(x, t) κ_j`.
    pub fn control_source(&self, kappa: &[f64], t: f64, grid: &Grid) -> Result<Field> {
        self.discretize(grid).source(kappa, t)
    }

    /// The constants `c3` and `c4` computed by trapezoidal quadrature on
    /// `grid` x `[0, horizon]`; `s` is the bound on admissible controls.
    pub fn lipschitz_bound(
        &self,
        grid: &Grid,
        horizon: f64,
        s: f64,
        exponents: Exponents,
    ) -> AssumptionConstants {
        let weights = grid.trapezoid_weights();
        let mut c3 = 0.0;
        let mut lqlp = 0.0;
        for profile in &self.profiles {
            let shape = profile.shape_on(grid);
            let l1: f64 = shape.iter().zip(&weights).map(|(g, w)| g.abs() * w).sum();
            let lp: f64 = shape
                .iter()
                .zip(&weights)
                .map(|(g, w)| g.abs().powf(exponents.p) * w)
                .sum::<f64>()
                .powf(1.0 / exponents.p);
            let env_l1 = time_trapezoid(horizon, |t| profile.envelope.eval(t).abs());
            let env_lq = time_trapezoid(horizon, |t| {
                profile.envelope.eval(t).abs().powf(exponents.q)
            })
            .powf(1.0 / exponents.q);
            c3 += l1 * env_l1;
            lqlp += lp * env_lq;
        }
        let c4 = s * lqlp;
        let degenerate = !(c3 > 0.0 && c4 > 0.0);
        if degenerate {
            log::warn!("actuator bank is degenerate: c3 = {c3}, c4 = {c4} (no control authority)");
        }
        AssumptionConstants { c3, c4, degenerate }
    }
}

fn time_trapezoid(horizon: f64, f: impl Fn(f64) -> f64) -> f64 {
    let n = TIME_QUADRATURE_INTERVALS;
    let h = horizon / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 * h } else { h };
            w * f(i as f64 * h)
        })
        .sum()
}

/// Actuator shapes sampled on a fixed grid.
#[derive(Debug, Clone)]
pub struct DiscreteBank {
    grid: Grid,
    shapes: Vec<Vec<f64>>,
    envelopes: Vec<Envelope>,
}

impl DiscreteBank {
    pub fn source(&self, kappa: &[f64], t: f64) -> Result<Field> {
        if kappa.len() != self.shapes.len() {
            return Err(Error::Precondition(format!(
                "{} control amplitudes for {} actuators",
                kappa.len(),
                self.shapes.len()
            )));
        }
        let mut values = vec![0.0; self.grid.len()];
        for ((shape, env), &k) in self.shapes.iter().zip(&self.envelopes).zip(kappa) {
            let scale = env.eval(t) * k;
            if scale == 0.0 {
                continue;
            }
            for (v, g) in values.iter_mut().zip(shape) {
                *v += g * scale;
            }
        }
        Field::new(&self.grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line() -> Grid {
        Grid::line(1.0, 101).unwrap()
    }

    #[test]
    fn zero_control_gives_zero_source() {
        let bank = ActuatorBank::new(vec![
            ActuatorProfile::gaussian(&[0.3], 0.05, 2.0),
            ActuatorProfile::indicator(&[0.7], 0.1, 1.0),
        ])
        .unwrap();
        let src = bank.control_source(&[0.0, 0.0], 0.5, &line()).unwrap();
        assert!(src.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_peak_scales_with_control() {
        let bank = ActuatorBank::new(vec![ActuatorProfile::gaussian(&[0.5], 0.05, 1.5)]).unwrap();
        let grid = line();
        let src = bank.control_source(&[2.0], 0.0, &grid).unwrap();
        assert_eq!(src.values()[50], 3.0);
    }

    #[test]
    fn disjoint_indicators() {
        let bank = ActuatorBank::new(vec![
            ActuatorProfile::indicator(&[0.25], 0.1, 1.0),
            ActuatorProfile::indicator(&[0.75], 0.1, 1.0),
        ])
        .unwrap();
        let grid = line();
        let src = bank.control_source(&[1.0, -1.0], 0.0, &grid).unwrap();
        let v = src.values();
        assert_eq!(v[25], 1.0);
        assert_eq!(v[20], 1.0);
        assert_eq!(v[75], -1.0);
        assert_eq!(v[80], -1.0);
        assert_eq!(v[50], 0.0);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[100], 0.0);
    }

    #[test]
    fn indicator_l1_constant() {
        let r = 0.1;
        let bank = ActuatorBank::new(vec![ActuatorProfile::indicator(&[0.5], r, 1.0)]).unwrap();
        // 0.4 and 0.6 are nodes at h = 0.01 only up to round-off; a fine grid
        // keeps the quadrature within one spacing of 2r.
        let grid = Grid::line(1.0, 2001).unwrap();
        let c = bank.lipschitz_bound(&grid, 1.0, 3.0, Exponents::for_dim(1));
        assert!((c.c3 - 2.0 * r).abs() <= grid.spacing()[0], "{}", c.c3);
        assert!(!c.degenerate);
    }

    #[test]
    fn zero_amplitude_is_degenerate() {
        let bank = ActuatorBank::new(vec![ActuatorProfile::gaussian(&[0.5], 0.1, 0.0)]).unwrap();
        let c = bank.lipschitz_bound(&line(), 1.0, 3.0, Exponents::for_dim(1));
        assert_eq!(c.c3, 0.0);
        assert!(c.degenerate);
    }

    #[test]
    fn constants_add_over_profiles() {
        let grid = line();
        let a = ActuatorProfile::gaussian(&[0.3], 0.05, 2.0);
        let b =
            ActuatorProfile::indicator(&[0.7], 0.1, 1.0).with_envelope(Envelope::Ramp { tau: 0.2 });
        let e = Exponents::for_dim(1);
        let ca = ActuatorBank::new(vec![a.clone()])
            .unwrap()
            .lipschitz_bound(&grid, 2.0, 3.0, e);
        let cb = ActuatorBank::new(vec![b.clone()])
            .unwrap()
            .lipschitz_bound(&grid, 2.0, 3.0, e);
        let cab = ActuatorBank::new(vec![a, b])
            .unwrap()
            .lipschitz_bound(&grid, 2.0, 3.0, e);
        assert!((cab.c3 - ca.c3 - cb.c3).abs() < 1e-12);
        assert!((cab.c4 - ca.c4 - cb.c4).abs() < 1e-12);
    }

    #[test]
    fn validation_flags_bad_profiles() {
        let grid = line();
        let bank = ActuatorBank::new(vec![
            ActuatorProfile::gaussian(&[1.0], 0.05, 1.0),
            ActuatorProfile::indicator(&[0.5], -0.1, -1.0),
        ])
        .unwrap();
        let errs = bank.validate(&grid);
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(ActuatorBank::new(vec![]).is_err());
    }

    #[test]
    fn l1_difference_bounded_by_c3() {
        // discrete ||g(k1) - g(k2)||_{L1(Q_T)} <= c3 Σ_j ||k1_j - k2_j||_inf
        let grid = Grid::line(1.0, 65).unwrap();
        let bank = ActuatorBank::new(vec![
            ActuatorProfile::gaussian(&[0.3], 0.08, 2.0),
            ActuatorProfile::indicator(&[0.7], 0.1, 1.0),
        ])
        .unwrap();
        let horizon = 1.0;
        let steps = 50;
        let dt = horizon / steps as f64;
        let c3 = bank
            .lipschitz_bound(&grid, horizon, 3.0, Exponents::for_dim(1))
            .c3;
        let disc = bank.discretize(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let k1: Vec<[f64; 2]> = (0..=steps)
                .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .collect();
            let k2: Vec<[f64; 2]> = (0..=steps)
                .map(|_| [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)])
                .collect();
            let mut lhs = 0.0;
            let mut sup = [0.0f64; 2];
            for n in 0..=steps {
                let wt = if n == 0 || n == steps { 0.5 * dt } else { dt };
                let d = [k1[n][0] - k2[n][0], k1[n][1] - k2[n][1]];
                sup[0] = sup[0].max(d[0].abs());
                sup[1] = sup[1].max(d[1].abs());
                let src = disc.source(&d, 0.0).unwrap();
                let l1: f64 = src
                    .values()
                    .iter()
                    .zip(grid.trapezoid_weights())
                    .map(|(v, w)| v.abs() * w)
                    .sum();
                lhs += wt * l1;
            }
            assert!(
                lhs <= c3 * (sup[0] + sup[1]) + 1e-9,
                "{lhs} vs {}",
                c3 * (sup[0] + sup[1])
            );
        }
    }

    #[test]
    fn source_is_affine_in_control() {
        let grid = line();
        let bank = ActuatorBank::new(vec![
            ActuatorProfile::gaussian(&[0.3], 0.05, 2.0),
            ActuatorProfile::gaussian(&[0.6], 0.1, 0.5)
                .with_envelope(Envelope::Pulse { period: 0.3 }),
        ])
        .unwrap();
        let (k1, k2, lam) = ([0.7, -1.2], [-0.4, 2.5], 0.3);
        let mix = [
            lam * k1[0] + (1.0 - lam) * k2[0],
            lam * k1[1] + (1.0 - lam) * k2[1],
        ];
        let a = bank.control_source(&mix, 0.17, &grid).unwrap();
        let b = bank.control_source(&k1, 0.17, &grid).unwrap().axpby(
            lam,
            &bank.control_source(&k2, 0.17, &grid).unwrap(),
            1.0 - lam,
        );
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
        }
    }
}
