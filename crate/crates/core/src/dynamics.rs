//! Reaction terms and the IMEX step of the controlled parabolic problem:
//! backward Euler for diffusion, forward Euler for reaction and source.

use serde::{Deserialize, Serialize};

use crate::grid::{apply_laplacian, Field, Grid};
use crate::{Error, Result};

/// Pointwise nonlinearity `f(s)`. Every built-in kind has `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReactionTerm {
    Zero,
    Linear {
        lambda: f64,
    },
    /// Bistable `f(s) = s - s^3`.
    AllenCahn,
}

/// Constants of the one-sided growth bound `f(s) s <= c1 + c2 s^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCert {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthCheck {
    Pass,
    /// First sample where the bound fails.
    Violation(f64),
}

impl ReactionTerm {
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            ReactionTerm::Zero => 0.0,
            ReactionTerm::Linear { lambda } => lambda * s,
            ReactionTerm::AllenCahn => s - s * s * s,
        }
    }

    /// Growth constants valid on all of R.
    pub fn cert(&self) -> GrowthCert {
        match *self {
            ReactionTerm::Zero => GrowthCert { c1: 0.0, c2: 0.0 },
            ReactionTerm::Linear { lambda } => GrowthCert {
                c1: 0.0,
                c2: lambda.max(0.0),
            },
            // s^2 - s^4 <= s^2
            ReactionTerm::AllenCahn => GrowthCert { c1: 0.0, c2: 1.0 },
        }
    }

    /// Lipschitz constant of `f` on `[-cap, cap]`.
    pub fn lipschitz_on(&self, cap: f64) -> f64 {
        match *self {
            ReactionTerm::Zero => 0.0,
            ReactionTerm::Linear { lambda } => lambda.abs(),
            ReactionTerm::AllenCahn => 1f64.max(3.0 * cap * cap - 1.0),
        }
    }
}

/// Sample `f(s) s <= c1 + c2 s^2` on `samples` uniform points of `range`.
pub fn growth_check(
    f: &ReactionTerm,
    cert: &GrowthCert,
    range: (f64, f64),
    samples: usize,
) -> GrowthCheck {
    let (lo, hi) = range;
    assert!(samples >= 2, "growth_check needs at least two samples");
    let step = (hi - lo) / (samples - 1) as f64;
    for i in 0..samples {
        let s = if i == samples - 1 {
            hi
        } else {
            lo + i as f64 * step
        };
        let lhs = f.eval(s) * s;
        let rhs = cert.c1 + cert.c2 * s * s;
        // relative slack for round-off in the two sides
        if lhs > rhs + 1e-12 * (1.0 + rhs.abs()) {
            return GrowthCheck::Violation(s);
        }
    }
    GrowthCheck::Pass
}

/// Settings for the implicit diffusion solve (conjugate gradients in 2D).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSolverOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// One IMEX step: solves `(I - dt L) u_next = u + dt (f(u) + source)`.
pub fn pde_step(
    field: &Field,
    dt: f64,
    f: &ReactionTerm,
    source: &Field,
    opts: &LinearSolverOptions,
) -> Result<Field> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!(
            "time step {dt} must be positive"
        )));
    }
    if source.grid() != field.grid() {
        return Err(Error::Precondition(
            "source and state live on different grids".into(),
        ));
    }
    let grid = field.grid();
    let rhs: Vec<f64> = field
        .values()
        .iter()
        .zip(source.values())
        .map(|(&u, &g)| u + dt * (f.eval(u) + g))
        .collect();
    let next = match grid.dim() {
        1 => solve_tridiagonal_neumann(grid, dt, rhs),
        _ => solve_cg(grid, dt, &rhs, field.values(), opts)?,
    };
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "state became non-finite during the implicit step".into(),
        ));
    }
    Field::new(grid, next)
}

/// Thomas algorithm for `(I - dt L)` with mirrored boundary rows.
fn solve_tridiagonal_neumann(grid: &Grid, dt: f64, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = grid.counts()[0];
    let r = dt / grid.spacing()[0].powi(2);
    let diag = 1.0 + 2.0 * r;
    let lower = |i: usize| if i == n - 1 { -2.0 * r } else { -r };
    let upper = |i: usize| if i == 0 { -2.0 * r } else { -r };

    let mut c = vec![0.0; n];
    c[0] = upper(0) / diag;
    rhs[0] /= diag;
    for i in 1..n {
        let denom = diag - lower(i) * c[i - 1];
        if i < n - 1 {
            c[i] = upper(i) / denom;
        }
        rhs[i] = (rhs[i] - lower(i) * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    rhs
}

/// Jacobi-preconditioned CG on the symmetrized system `W (I - dt L) u = W b`,
/// `W` the trapezoidal weights (the mirrored stencil is self-adjoint in that
/// inner product).
fn solve_cg(
    grid: &Grid,
    dt: f64,
    rhs: &[f64],
    guess: &[f64],
    opts: &LinearSolverOptions,
) -> Result<Vec<f64>> {
    let n = grid.len();
    let w = grid.trapezoid_weights();
    let diag_l: f64 = grid.spacing().iter().map(|h| 2.0 / (h * h)).sum();
    let precond: Vec<f64> = w
        .iter()
        .map(|wk| 1.0 / (wk * (1.0 + dt * diag_l)))
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut lap = vec![0.0; n];
    let mut apply = |x: &[f64], out: &mut [f64]| {
        apply_laplacian(grid, x, &mut lap);
        for k in 0..n {
            out[k] = w[k] * (x[k] - dt * lap[k]);
        }
    };

    let b: Vec<f64> = rhs.iter().zip(&w).map(|(r, wk)| r * wk).collect();
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = guess.to_vec();
    let mut ax = vec![0.0; n];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&precond).map(|(ri, mi)| ri * mi).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    for _ in 0..opts.max_iter {
        if rel <= opts.rel_tol {
            return Ok(x);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        for k in 0..n {
            z[k] = r[k] * precond[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if rel <= opts.rel_tol {
        Ok(x)
    } else {
        Err(Error::LinearSolver {
            iterations: opts.max_iter,
            residual: rel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn step_n(u: &Field, n: usize, dt: f64, f: ReactionTerm) -> Field {
        let zero = Field::zeros(u.grid());
        let opts = LinearSolverOptions::default();
        (0..n).fold(u.clone(), |u, _| {
            pde_step(&u, dt, &f, &zero, &opts).unwrap()
        })
    }

    #[test]
    fn reaction_values() {
        let ac = ReactionTerm::AllenCahn;
        assert_eq!(ac.eval(0.0), 0.0);
        assert_eq!(ac.eval(1.0), 0.0);
        assert_eq!(ac.eval(-1.0), 0.0);
        assert_eq!(ac.eval(2.0), -6.0);
        for f in [
            ReactionTerm::Zero,
            ReactionTerm::Linear { lambda: -3.0 },
            ac,
        ] {
            assert_eq!(f.eval(0.0), 0.0);
        }
    }

    #[test]
    fn growth_certificates() {
        let ac = ReactionTerm::AllenCahn;
        assert_eq!(
            growth_check(&ac, &GrowthCert { c1: 0.0, c2: 1.0 }, (-10.0, 10.0), 2001),
            GrowthCheck::Pass
        );
        let lin = ReactionTerm::Linear { lambda: 2.0 };
        assert!(matches!(
            growth_check(&lin, &GrowthCert { c1: 0.0, c2: 1.0 }, (-1.0, 1.0), 11),
            GrowthCheck::Violation(s) if s != 0.0
        ));
        assert_eq!(
            growth_check(
                &ReactionTerm::Zero,
                &GrowthCert { c1: 0.0, c2: 0.0 },
                (-5.0, 3.0),
                7
            ),
            GrowthCheck::Pass
        );
        for f in [ReactionTerm::Zero, lin, ac] {
            assert_eq!(
                growth_check(&f, &f.cert(), (-50.0, 50.0), 10_001),
                GrowthCheck::Pass
            );
        }
    }

    #[test]
    fn constants_are_steady() {
        for grid in [
            Grid::line(1.0, 17).unwrap(),
            Grid::rectangle(1.0, 2.0, 9, 13).unwrap(),
        ] {
            let c = Field::constant(&grid, 0.75);
            let out = step_n(&c, 5, 0.01, ReactionTerm::Zero);
            assert!(out.values().iter().all(|&v| (v - 0.75).abs() < 1e-12));
        }
        let grid = Grid::line(1.0, 17).unwrap();
        let c = Field::constant(&grid, 0.75);
        let out = step_n(&c, 5, 0.01, ReactionTerm::Zero);
        assert!(out.values().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn allen_cahn_zero_state_stays_zero() {
        let grid = Grid::line(1.0, 33).unwrap();
        let out = step_n(&Field::zeros(&grid), 100, 1e-3, ReactionTerm::AllenCahn);
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heat_cosine_decay_1d() {
        let grid = Grid::line(1.0, 129).unwrap();
        let u0 = grid.field_from_fn(|x, _| (PI * x).cos());
        let u = step_n(&u0, 1000, 1e-4, ReactionTerm::Zero);
        let decay = (-PI * PI * 0.1).exp();
        let err = u
            .values()
            .iter()
            .zip(u0.values())
            .map(|(a, b)| (a - decay * b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-3, "max error {err}");
    }

    #[test]
    fn heat_cosine_decay_2d() {
        let grid = Grid::rectangle(1.0, 1.0, 33, 33).unwrap();
        let u0 = grid.field_from_fn(|x, y| (PI * x).cos() * (PI * y).cos());
        let u = step_n(&u0, 100, 5e-4, ReactionTerm::Zero);
        let decay = (-2.0 * PI * PI * 0.05).exp();
        let err = u
            .values()
            .iter()
            .zip(u0.values())
            .map(|(a, b)| (a - decay * b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 5e-3, "max error {err}");
    }

    #[test]
    fn max_norm_does_not_grow() {
        let grid = Grid::line(1.0, 41).unwrap();
        let mut u = grid.field_from_fn(|x, _| if x < 0.3 { 1.0 } else { -0.5 * x });
        let zero = Field::zeros(&grid);
        for dt in [1e-5, 1e-2, 10.0] {
            let prev = u.max_abs();
            u = pde_step(&u, dt, &ReactionTerm::Zero, &zero, &Default::default()).unwrap();
            assert!(u.max_abs() <= prev + 1e-15);
        }
    }

    #[test]
    fn step_rejects_bad_input() {
        let grid = Grid::line(1.0, 9).unwrap();
        let other = Grid::line(1.0, 11).unwrap();
        let u = Field::zeros(&grid);
        let opts = LinearSolverOptions::default();
        assert!(pde_step(&u, 0.0, &ReactionTerm::Zero, &u, &opts).is_err());
        assert!(pde_step(&u, 0.1, &ReactionTerm::Zero, &Field::zeros(&other), &opts).is_err());
    }

    #[test]
    fn cg_cap_reports_residual() {
        let grid = Grid::rectangle(1.0, 1.0, 33, 33).unwrap();
        let u0 = grid.field_from_fn(|x, y| (3.0 * x).sin() + y * y);
        let opts = LinearSolverOptions {
            rel_tol: 1e-14,
            max_iter: 2,
        };
        let err = pde_step(&u0, 0.1, &ReactionTerm::Zero, &Field::zeros(&grid), &opts);
        assert!(matches!(
            err,
            Err(Error::LinearSolver { iterations: 2, .. })
        ));
    }
}
