//! Actuator drive dynamics `β κ' + κ = v`.
//!
//! With `v` held constant over a step, the variation-of-constants formula is
//! evaluated exactly, so the controller adds no discretization error of its
//! own. Tables are time-major: `table[n][j]` is actuator `j` at `t_n`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Time constants `β_j > 0`.
    pub beta: Vec<f64>,
    /// Initial amplitudes `κ_j(0)`.
    pub initial: Vec<f64>,
}

impl ControllerParams {
    pub fn new(beta: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        let p = Self { beta, initial };
        let errs = p.validate();
        if errs.is_empty() {
            Ok(p)
        } else {
            Err(Error::Invalid(errs))
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.beta.is_empty() {
            errs.push("controller needs at least one time constant".into());
        }
        if self.beta.len() != self.initial.len() {
            errs.push(format!(
                "{} time constants but {} initial values",
                self.beta.len(),
                self.initial.len()
            ));
        }
        for (j, b) in self.beta.iter().enumerate() {
            if !(*b > 0.0 && b.is_finite()) {
                errs.push(format!(
                    "controller {} time constant {b} must be positive",
                    j + 1
                ));
            }
        }
        for (j, a) in self.initial.iter().enumerate() {
            if !a.is_finite() {
                errs.push(format!(
                    "controller {} initial value {a} is not finite",
                    j + 1
                ));
            }
        }
        errs
    }
}

/// Exact update of `β κ' + κ = v` over `dt` with `v` constant.
#[inline]
pub fn controller_step(kappa: f64, v: f64, dt: f64, beta: f64) -> f64 {
    // 1 - exp(-dt / beta), accurate for dt << beta
    let gain = -(-dt / beta).exp_m1();
    kappa + gain * (v - kappa)
}

/// Integrate all controllers over the uniform time grid. `v[n]` is the value
/// held on `(t_{n-1}, t_n]`; `v[0]` is not used. Returns `κ` at every `t_n`.
pub fn controller_trajectory(params: &ControllerParams, v: &[Vec<f64>], dt: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(v.len().max(1));
    let mut kappa = params.initial.clone();
    out.push(kappa.clone());
    for vn in v.iter().skip(1) {
        for ((k, &vj), &b) in kappa.iter_mut().zip(vn).zip(&params.beta) {
            *k = controller_step(*k, vj, dt, b);
        }
        out.push(kappa.clone());
    }
    out
}

/// A-priori bounds on `κ` and `κ'` under a law bounded by `C_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// `|a_j| + C_j`.
    pub kappa_bound: Vec<f64>,
    /// `(|a_j| + 2 C_j) / β_j`.
    pub rate_bound: Vec<f64>,
    /// `max_j (|a_j| + C_j + (|a_j| + 2 C_j) / β_j)`.
    pub s: f64,
    /// The variant `max_j (|a_j| + C_j + (|a_j| + 2) / β_j)`; equal to `s` when all `C_j = 1`.
    pub s_unit_rate: f64,
    /// Set when the two forms differ.
    pub forms_disagree: bool,
}

pub fn a_priori_bounds(params: &ControllerParams, law_bounds: &[f64]) -> BoundsReport {
    let mut kappa_bound = Vec::with_capacity(params.len());
    let mut rate_bound = Vec::with_capacity(params.len());
    let mut s: f64 = 0.0;
    let mut s_unit_rate: f64 = 0.0;
    for ((&a, &b), &c) in params.initial.iter().zip(&params.beta).zip(law_bounds) {
        let kb = a.abs() + c;
        let rb = (a.abs() + 2.0 * c) / b;
        kappa_bound.push(kb);
        rate_bound.push(rb);
        s = s.max(kb + rb);
        s_unit_rate = s_unit_rate.max(kb + (a.abs() + 2.0) / b);
    }
    BoundsReport {
        kappa_bound,
        rate_bound,
        s,
        s_unit_rate,
        forms_disagree: s != s_unit_rate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum MembershipCheck {
    Pass,
    /// `|κ_j(t_n)| > S`.
    Amplitude {
        actuator: usize,
        step: usize,
        value: f64,
    },
    /// Difference quotient on `[t_n, t_{n+1}]` above `S + tol`.
    Rate {
        actuator: usize,
        step: usize,
        value: f64,
    },
}

/// Check that `κ` lies in the set of controls with `W^{1,∞}` bound `S`.
///
/// Difference quotients get the allowance `1e-9 + C_j dt / β_j^2`.
pub fn in_m_s(
    kappa: &[Vec<f64>],
    s: f64,
    dt: f64,
    params: &ControllerParams,
    law_bounds: &[f64],
) -> MembershipCheck {
    for (n, row) in kappa.iter().enumerate() {
        for (j, &k) in row.iter().enumerate() {
            if !(k.abs() <= s) {
                return MembershipCheck::Amplitude {
                    actuator: j,
                    step: n,
                    value: k,
                };
            }
        }
    }
    for (n, pair) in kappa.windows(2).enumerate() {
        for j in 0..pair[0].len() {
            let q = (pair[1][j] - pair[0][j]).abs() / dt;
            let tol = 1e-9 + law_bounds[j] * dt / (params.beta[j] * params.beta[j]);
            if !(q <= s + tol) {
                return MembershipCheck::Rate {
                    actuator: j,
                    step: n,
                    value: q,
                };
            }
        }
    }
    MembershipCheck::Pass
}
