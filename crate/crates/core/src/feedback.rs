//! The multivalued relay feedback law.
//!
//! Each sensor error `r_k` is mapped through a relay to an interval, the
//! intervals are mixed with the time-dependent convex weights `α_jk(t)`
//! (Minkowski sum of scaled intervals), and a selection strategy picks one
//! value per actuator and step. Closed convex subsets of the real line are
//! intervals, so [`AdmissibleInterval`] represents the law's values exactly.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on weight row sums.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RelaySpec {
    /// `-1` for `r > 0`, `0` at `r = 0`, `+1` for `r < 0`.
    Strict,
    /// As `Strict` but the whole of `[-1, 1]` at `r = 0`.
    Convexified,
    /// Single-valued `-clamp(r / delta, -1, 1)`.
    Smoothed { delta: f64 },
}

impl RelaySpec {
    pub fn relay(&self, r: f64) -> AdmissibleInterval {
        match *self {
            RelaySpec::Strict => AdmissibleInterval::point(-sign(r)),
            RelaySpec::Convexified => {
                if r == 0.0 {
                    AdmissibleInterval { lo: -1.0, hi: 1.0 }
                } else {
                    AdmissibleInterval::point(-sign(r))
                }
            }
            RelaySpec::Smoothed { delta } => {
                AdmissibleInterval::point(-(r / delta).clamp(-1.0, 1.0))
            }
        }
    }

    /// True when every value of the law is a single point.
    pub fn is_single_valued(&self) -> bool {
        !matches!(self, RelaySpec::Convexified)
    }

    /// Bound `C` with every relay value inside `[-C, C]`.
    pub fn bound(&self) -> f64 {
        1.0
    }

    pub fn validate(&self) -> Vec<String> {
        match *self {
            RelaySpec::Smoothed { delta } if !(delta > 0.0 && delta.is_finite()) => {
                vec![format!("smoothed relay width {delta} must be positive")]
            }
            _ => vec![],
        }
    }
}

fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleInterval {
    pub lo: f64,
    pub hi: f64,
}

impl AdmissibleInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::Precondition(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    /// Euclidean distance from `v` to the interval.
    pub fn distance(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }

    pub fn is_subset_of(&self, other: &AdmissibleInterval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn inflate(&self, eps: f64) -> Self {
        Self {
            lo: self.lo - eps,
            hi: self.hi + eps,
        }
    }
}

/// Piecewise-linear weights `α_jk(t)` on shared breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    times: Vec<f64>,
    /// `rows[b][j][k]` is `α_jk` at breakpoint `b`.
    rows: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightCheck {
    Pass,
    /// First offending `(row, breakpoint)`, both zero-based.
    Violation {
        row: usize,
        breakpoint: usize,
    },
}

impl WeightMatrix {
    /// `times` strictly increasing; `rows` one `m x n` matrix per breakpoint.
    pub fn new(times: Vec<f64>, rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if times.is_empty() || times.len() != rows.len() {
            return Err(Error::Config(format!(
                "weights need one m x n matrix per breakpoint ({} times, {} matrices)",
                times.len(),
                rows.len()
            )));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("weight breakpoints must increase".into()));
        }
        let m = rows[0].len();
        let n = rows[0].first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::Config("weight matrix must be at least 1 x 1".into()));
        }
        if rows
            .iter()
            .any(|mat| mat.len() != m || mat.iter().any(|r| r.len() != n))
        {
            return Err(Error::Config(format!(
                "every weight matrix must be {m} x {n}"
            )));
        }
        Ok(Self { times, rows })
    }

    /// Time-independent weights.
    pub fn constant(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(vec![0.0], vec![rows])
    }

    /// Every actuator averages all sensors equally.
    pub fn uniform(m: usize, n: usize) -> Self {
        Self::constant(vec![vec![1.0 / n as f64; n]; m]).expect("nonempty")
    }

    pub fn actuators(&self) -> usize {
        self.rows[0].len()
    }

    pub fn sensors(&self) -> usize {
        self.rows[0][0].len()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.times
    }

    /// `α(t)`, held constant outside the breakpoint range.
    pub fn at(&self, t: f64) -> Vec<Vec<f64>> {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.rows[0].clone();
        }
        if t >= self.times[last] {
            return self.rows[last].clone();
        }
        let b = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[b], self.times[b + 1]);
        let s = (t - t0) / (t1 - t0);
        self.rows[b]
            .iter()
            .zip(&self.rows[b + 1])
            .map(|(r0, r1)| {
                r0.iter()
                    .zip(r1)
                    .map(|(a, c)| (1.0 - s) * a + s * c)
                    .collect()
            })
            .collect()
    }

    /// Nonnegativity and unit row sums at every breakpoint.
    pub fn validate(&self) -> WeightCheck {
        for (b, mat) in self.rows.iter().enumerate() {
            for (j, row) in mat.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&a| !(a >= 0.0)) || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return WeightCheck::Violation {
                        row: j,
                        breakpoint: b,
                    };
                }
            }
        }
        WeightCheck::Pass
    }

    /// Every violated row, as messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (b, mat) in self.rows.iter().enumerate() {
            for (j, row) in mat.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if let Some(a) = row.iter().find(|&&a| !(a >= 0.0)) {
                    out.push(format!(
                        "weights row {} at t = {} has negative entry {a}; weights must be nonnegative convex-combination coefficients",
                        j + 1,
                        self.times[b]
                    ));
                }
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    out.push(format!(
                        "weights row {} at t = {} sums to {sum}; each actuator's weights over the sensors must sum to 1",
                        j + 1,
                        self.times[b]
                    ));
                }
            }
        }
        out
    }
}

/// `W_j = Σ_k α_jk(t) relay(err_k)` for every actuator `j`.
pub fn admissible_set(
    relays: &RelaySpec,
    weights: &WeightMatrix,
    t: f64,
    err: &[f64],
) -> Result<Vec<AdmissibleInterval>> {
    if err.len() != weights.sensors() {
        return Err(Error::Precondition(format!(
            "{} sensor errors for a law over {} sensors",
            err.len(),
            weights.sensors()
        )));
    }
    let per_sensor: Vec<AdmissibleInterval> = err.iter().map(|&r| relays.relay(r)).collect();
    Ok(weights
        .at(t)
        .iter()
        .map(|row| {
            let (lo, hi) = row
                .iter()
                .zip(&per_sensor)
                .fold((0.0, 0.0), |(lo, hi), (a, w)| {
                    (lo + a * w.lo, hi + a * w.hi)
                });
            AdmissibleInterval { lo, hi }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionStrategy {
    Midpoint,
    PreferZero,
    PreferPrevious,
    ExtremeLo,
    ExtremeHi,
    /// Keep the previous value (clamped into the set) while it stays within
    /// `band` of the set, otherwise jump to the midpoint.
    Hysteresis {
        band: f64,
    },
}

impl SelectionStrategy {
    pub fn validate(&self) -> Vec<String> {
        match *self {
            SelectionStrategy::Hysteresis { band } if !(band > 0.0) => {
                vec![format!("hysteresis band {band} must be positive")]
            }
            _ => vec![],
        }
    }
}

/// Pick one value of `set`; the result always lies in `[lo, hi]`.
pub fn select(
    set: &AdmissibleInterval,
    strategy: &SelectionStrategy,
    previous: Option<f64>,
) -> f64 {
    if set.lo == set.hi {
        return set.lo;
    }
    match (*strategy, previous) {
        (SelectionStrategy::Midpoint, _) => set.midpoint(),
        (SelectionStrategy::PreferZero, _) => set.clamp(0.0),
        (SelectionStrategy::PreferPrevious, Some(p)) => set.clamp(p),
        (SelectionStrategy::PreferPrevious, None) => set.midpoint(),
        (SelectionStrategy::ExtremeLo, _) => set.lo,
        (SelectionStrategy::ExtremeHi, _) => set.hi,
        (SelectionStrategy::Hysteresis { band }, Some(p)) if set.inflate(band).contains(p) => {
            set.clamp(p)
        }
        (SelectionStrategy::Hysteresis { .. }, _) => set.midpoint(),
    }
}
