//! The coupled solver.
//!
//! The loop is split into the three maps of the fixed-point formulation:
//!
//! * [`sense`] (R): solve the state equation for a given control table and
//!   sample the sensors at every time node;
//! * [`feedback_sets`] (Q): turn readings into admissible intervals, and
//!   [`select_along`] pick one value per step;
//! * [`controller_trajectory`] (P): integrate the drive dynamics.
//!
//! [`simulate`] marches all three together step by step (sense after the
//! state update, actuate on the next step); [`picard_solve`] iterates the
//! composition over the whole horizon. Both share the same arithmetic, so a
//! fixed point of the iteration reproduces the marched trajectory.

use serde::{Deserialize, Serialize};

use crate::actuation::{ActuatorBank, Exponents};
use crate::controller::{a_priori_bounds, controller_trajectory, BoundsReport, ControllerParams};
use crate::dynamics::{growth_check, pde_step, GrowthCheck, LinearSolverOptions, ReactionTerm};
use crate::feedback::{
    admissible_set, select, AdmissibleInterval, RelaySpec, SelectionStrategy, WeightMatrix,
};
use crate::grid::{Field, Grid};
use crate::sensing::SensorArray;
use crate::{Error, Result};

/// Largest stable `dt * Lip(f)` for the explicit reaction update.
pub const REACTION_CFL: f64 = 0.5;
/// Snapshots kept per run when no stride is configured.
pub const DEFAULT_MAX_SNAPSHOTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum InitialCondition {
    Zero,
    Constant {
        value: f64,
    },
    /// `cos(pi x / Lx)` in 1D, `cos(pi x / Lx) cos(pi y / Ly)` in 2D.
    Cosine,
    Nodes {
        values: Vec<f64>,
    },
}

impl InitialCondition {
    pub fn field(&self, grid: &Grid) -> Result<Field> {
        use std::f64::consts::PI;
        match self {
            InitialCondition::Zero => Ok(Field::zeros(grid)),
            InitialCondition::Constant { value } => Field::new(grid, vec![*value; grid.len()]),
            InitialCondition::Cosine => {
                let ext = grid.extents().to_vec();
                Ok(grid.field_from_fn(|x, y| {
                    let cx = (PI * x / ext[0]).cos();
                    if ext.len() == 2 {
                        cx * (PI * y / ext[1]).cos()
                    } else {
                        cx
                    }
                }))
            }
            InitialCondition::Nodes { values } => Field::new(grid, values.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Weight of the new iterate in `(1 - θ) κ_old + θ κ_new`; `1` is plain Picard.
    pub picard_damping: f64,
    pub linear: LinearSolverOptions,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            picard_tol: 1e-6,
            picard_max_iter: 50,
            picard_damping: 1.0,
            linear: LinearSolverOptions::default(),
        }
    }
}

/// Complete description of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: Grid,
    pub horizon: f64,
    pub dt: f64,
    pub reaction: ReactionTerm,
    /// Declared bound on `|u|`, used for the reaction step-size check and
    /// asserted against the simulated state.
    pub state_cap: f64,
    pub initial: InitialCondition,
    pub bank: ActuatorBank,
    pub sensors: SensorArray,
    pub relay: RelaySpec,
    pub weights: WeightMatrix,
    pub strategy: SelectionStrategy,
    pub controller: ControllerParams,
    pub tolerances: Tolerances,
    pub snapshot_stride: Option<usize>,
    pub exponents: Exponents,
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn stride(&self) -> usize {
        self.snapshot_stride
            .unwrap_or_else(|| self.steps().div_ceil(DEFAULT_MAX_SNAPSHOTS - 1).max(1))
    }

    /// Law bounds `C_j`; the relay law is bounded by 1 for every actuator.
    pub fn law_bounds(&self) -> Vec<f64> {
        vec![self.relay.bound(); self.controller.len()]
    }

    pub fn bounds(&self) -> BoundsReport {
        a_priori_bounds(&self.controller, &self.law_bounds())
    }

    /// Every violated invariant, empty when the configuration is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            errs.push(format!("horizon {} must be positive", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("time step {} must be positive", self.dt));
        } else if (self.steps() as f64 * self.dt - self.horizon).abs()
            > 1e-12 * self.horizon.max(1.0)
            || self.steps() == 0
        {
            errs.push(format!(
                "time step {} does not divide the horizon {}",
                self.dt, self.horizon
            ));
        }
        if !(self.state_cap > 0.0 && self.state_cap.is_finite()) {
            errs.push(format!("state cap {} must be positive", self.state_cap));
        }

        match self.initial.field(&self.grid) {
            Ok(u0) if u0.max_abs() > self.state_cap => errs.push(format!(
                "initial state reaches {} above the declared state cap {}",
                u0.max_abs(),
                self.state_cap
            )),
            Ok(_) => {}
            Err(e) => errs.push(format!(
                "initial state must be bounded and match the grid: {e}"
            )),
        }

        let cert = self.reaction.cert();
        if let GrowthCheck::Violation(s) = growth_check(
            &self.reaction,
            &cert,
            (-self.state_cap, self.state_cap),
            1001,
        ) {
            errs.push(format!(
                "reaction term violates the growth bound f(s) s <= {} + {} s^2 at s = {s}",
                cert.c1, cert.c2
            ));
        }
        if let ReactionTerm::Linear { lambda } = self.reaction {
            if !lambda.is_finite() {
                errs.push(format!("linear reaction rate {lambda} is not finite"));
            }
        }
        let lip = self.reaction.lipschitz_on(self.state_cap);
        if self.dt * lip > REACTION_CFL {
            errs.push(format!(
                "explicit reaction step dt * Lip(f) = {} exceeds {REACTION_CFL} on the state range",
                self.dt * lip
            ));
        }

        errs.extend(self.bank.validate(&self.grid));
        errs.extend(self.sensors.validate(&self.grid));
        errs.extend(self.controller.validate());
        errs.extend(self.relay.validate());
        errs.extend(self.strategy.validate());

        let (m, n) = (self.bank.len(), self.sensors.len());
        if self.weights.actuators() != m || self.weights.sensors() != n {
            errs.push(format!(
                "weights are {} x {} but there are {m} actuators and {n} sensors",
                self.weights.actuators(),
                self.weights.sensors()
            ));
        }
        if self.controller.len() != m {
            errs.push(format!(
                "{} controller time constants for {m} actuators",
                self.controller.len()
            ));
        }
        errs.extend(self.weights.violations());

        let tol = &self.tolerances;
        if !(tol.picard_tol >= 0.0) || tol.picard_max_iter == 0 {
            errs.push("picard tolerance must be nonnegative and the iteration cap positive".into());
        }
        if !(tol.picard_damping > 0.0 && tol.picard_damping <= 1.0) {
            errs.push(format!(
                "picard damping {} must lie in (0, 1]",
                tol.picard_damping
            ));
        }
        if !(tol.linear.rel_tol > 0.0) || tol.linear.max_iter == 0 {
            errs.push("linear solver tolerance and iteration cap must be positive".into());
        }
        if self.snapshot_stride == Some(0) {
            errs.push("snapshot stride must be positive".into());
        }
        errs
    }

    pub fn check(&self) -> Result<()> {
        let errs = self.validate();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(errs))
        }
    }
}

/// Time series of one closed-loop solution. Tables are time-major with
/// `steps + 1` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub kappa: Vec<Vec<f64>>,
    /// `v[n]` is held on `(t_{n-1}, t_n]`; `v[0]` is the selection at `t_0`.
    pub v: Vec<Vec<f64>>,
    pub intervals: Vec<Vec<AdmissibleInterval>>,
    pub readings: Vec<Vec<f64>>,
    /// `(step, field)` pairs at the snapshot stride.
    pub snapshots: Vec<(usize, Field)>,
    pub bounds: BoundsReport,
    /// `max |u|` over every node and step.
    pub max_abs_state: f64,
}

impl Trajectory {
    /// Number of `(step, actuator)` pairs whose selection leaves its interval.
    pub fn selection_violations(&self) -> usize {
        self.v
            .iter()
            .zip(&self.intervals)
            .flat_map(|(vs, ws)| vs.iter().zip(ws))
            .filter(|(v, w)| !w.contains(**v))
            .count()
    }
}

/// Result of solving the state equation for a fixed control table.
#[derive(Debug, Clone)]
pub struct StateRun {
    pub readings: Vec<Vec<f64>>,
    pub snapshots: Vec<(usize, Field)>,
    pub max_abs_state: f64,
}

/// Solve the state equation on `[0, T]` with `κ[n]` driving the step
/// `t_n -> t_{n+1}`, reading the sensors at every node.
pub fn sense(config: &SimConfig, kappa: &[Vec<f64>], stride: usize) -> Result<StateRun> {
    let steps = config.steps();
    if kappa.len() != steps + 1 {
        return Err(Error::Precondition(format!(
            "control table has {} rows, expected {}",
            kappa.len(),
            steps + 1
        )));
    }
    let bank = config.bank.discretize(&config.grid);
    let mut u = config.initial.field(&config.grid)?;
    let mut readings = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let mut max_abs = u.max_abs();
    readings.push(config.sensors.read(&u)?);
    snapshots.push((0, u.clone()));
    for (n, k) in kappa.iter().take(steps).enumerate() {
        let source = bank.source(k, config.time(n))?;
        u = pde_step(
            &u,
            config.dt,
            &config.reaction,
            &source,
            &config.tolerances.linear,
        )?;
        max_abs = max_abs.max(u.max_abs());
        readings.push(config.sensors.read(&u)?);
        if (n + 1) % stride == 0 {
            snapshots.push((n + 1, u.clone()));
        }
    }
    Ok(StateRun {
        readings,
        snapshots,
        max_abs_state: max_abs,
    })
}

/// Admissible intervals at every time node for the given readings.
pub fn feedback_sets(
    config: &SimConfig,
    readings: &[Vec<f64>],
) -> Result<Vec<Vec<AdmissibleInterval>>> {
    readings
        .iter()
        .enumerate()
        .map(|(n, r)| {
            let err = config.sensors.error_signal(r)?;
            admissible_set(&config.relay, &config.weights, config.time(n), &err)
        })
        .collect()
}

/// Apply the selection strategy along a sequence of intervals.
pub fn select_along(
    strategy: &SelectionStrategy,
    sets: &[Vec<AdmissibleInterval>],
) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(sets.len());
    for (n, row) in sets.iter().enumerate() {
        let selected = row
            .iter()
            .enumerate()
            .map(|(j, w)| select(w, strategy, (n > 0).then(|| out[n - 1][j])))
            .collect();
        out.push(selected);
    }
    out
}

/// Time-marched closed loop.
pub fn simulate(config: &SimConfig) -> Result<Trajectory> {
    config.check()?;
    simulate_unchecked(config)
}

pub(crate) fn simulate_unchecked(config: &SimConfig) -> Result<Trajectory> {
    let steps = config.steps();
    let stride = config.stride();
    let bank = config.bank.discretize(&config.grid);
    let beta = &config.controller.beta;

    let mut u = config.initial.field(&config.grid)?;
    let mut max_abs = u.max_abs();
    let mut kappa = vec![config.controller.initial.clone()];
    let mut readings = vec![config.sensors.read(&u)?];
    let mut intervals = feedback_sets(config, &readings)?;
    let mut v = select_along(&config.strategy, &intervals);
    let mut snapshots = vec![(0, u.clone())];

    for n in 0..steps {
        let t_next = config.time(n + 1);
        let source = bank.source(&kappa[n], config.time(n))?;
        u = pde_step(
            &u,
            config.dt,
            &config.reaction,
            &source,
            &config.tolerances.linear,
        )?;
        max_abs = max_abs.max(u.max_abs());

        let r = config.sensors.read(&u)?;
        let err = config.sensors.error_signal(&r)?;
        let w = admissible_set(&config.relay, &config.weights, t_next, &err)?;
        let vn: Vec<f64> = w
            .iter()
            .zip(&v[n])
            .map(|(wj, &prev)| select(wj, &config.strategy, Some(prev)))
            .collect();
        let kn: Vec<f64> = kappa[n]
            .iter()
            .zip(&vn)
            .zip(beta)
            .map(|((&k, &vj), &b)| crate::controller::controller_step(k, vj, config.dt, b))
            .collect();

        readings.push(r);
        intervals.push(w);
        v.push(vn);
        kappa.push(kn);
        if (n + 1) % stride == 0 {
            snapshots.push((n + 1, u.clone()));
        }
    }

    Ok(Trajectory {
        times: (0..=steps).map(|n| config.time(n)).collect(),
        kappa,
        v,
        intervals,
        readings,
        snapshots,
        bounds: config.bounds(),
        max_abs_state: max_abs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub iterations: usize,
    /// `sup_t max_j |κ^(i+1) - κ^(i)|` per iteration.
    pub residual_history: Vec<f64>,
    pub final_residual: f64,
    pub converged: bool,
    /// False for relay laws with a jump (strict or convexified).
    pub law_is_lipschitz: bool,
    /// Set when the history ever increases between iterations.
    pub oscillating: bool,
}

fn sup_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

/// Iterate `κ <- P(select(Q(R(κ))))` over the whole horizon, starting from
/// the unforced drive `κ_j(t) = a_j exp(-t / β_j)`.
pub fn picard_solve(config: &SimConfig) -> Result<(Trajectory, ResidualReport)> {
    config.check()?;
    let steps = config.steps();
    let theta = config.tolerances.picard_damping;
    let tol = config.tolerances.picard_tol;

    let mut kappa = controller_trajectory(
        &config.controller,
        &vec![vec![0.0; config.controller.len()]; steps + 1],
        config.dt,
    );
    let mut history = Vec::new();
    let mut converged = false;
    let mut last = None;

    for _ in 0..config.tolerances.picard_max_iter {
        let run = sense(config, &kappa, config.stride())?;
        let sets = feedback_sets(config, &run.readings)?;
        let v = select_along(&config.strategy, &sets);
        let mapped = controller_trajectory(&config.controller, &v, config.dt);
        let next: Vec<Vec<f64>> = if theta == 1.0 {
            mapped
        } else {
            kappa
                .iter()
                .zip(&mapped)
                .map(|(old, new)| {
                    old.iter()
                        .zip(new)
                        .map(|(o, n)| (1.0 - theta) * o + theta * n)
                        .collect()
                })
                .collect()
        };
        let dist = sup_distance(&next, &kappa);
        history.push(dist);
        kappa = next;
        last = Some((run, sets, v));
        if dist <= tol {
            converged = true;
            break;
        }
    }

    let (run, intervals, v) = last.expect("at least one iteration");
    let oscillating = history.windows(2).any(|w| w[1] > w[0]);
    let report = ResidualReport {
        iterations: history.len(),
        final_residual: *history.last().expect("at least one iteration"),
        residual_history: history,
        converged,
        law_is_lipschitz: matches!(config.relay, RelaySpec::Smoothed { .. }),
        oscillating,
    };
    if !converged {
        log::info!(
            "picard iteration stopped after {} iterations at residual {:.3e}",
            report.iterations,
            report.final_residual
        );
    }
    let trajectory = Trajectory {
        times: (0..=steps).map(|n| config.time(n)).collect(),
        kappa,
        v,
        intervals,
        readings: run.readings,
        snapshots: run.snapshots,
        bounds: config.bounds(),
        max_abs_state: run.max_abs_state,
    };
    Ok((trajectory, report))
}

/// Components of the solution defect of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualBreakdown {
    /// `max_{n,j} dist(β_j Δκ_j / dt + (κ_j(t_n) + κ_j(t_{n+1})) / 2, W_j(t_{n+1}))`.
    pub inclusion_defect: f64,
    /// `max |readings - readings of the re-solved state|`.
    pub state_defect: f64,
    /// Step and actuator of the largest inclusion defect.
    pub worst: (usize, usize),
}

impl ResidualBreakdown {
    pub fn total(&self) -> f64 {
        self.inclusion_defect + self.state_defect
    }
}

/// Re-solve the state from the trajectory's controls and measure how far the
/// trajectory is from satisfying the coupled inclusion on the time grid.
pub fn residual_breakdown(
    trajectory: &Trajectory,
    config: &SimConfig,
) -> Result<ResidualBreakdown> {
    let steps = config.steps();
    let m = config.controller.len();
    let n_sensors = config.sensors.len();
    let shape_ok = trajectory.kappa.len() == steps + 1
        && trajectory.readings.len() == steps + 1
        && trajectory.kappa.iter().all(|r| r.len() == m)
        && trajectory.readings.iter().all(|r| r.len() == n_sensors);
    if !shape_ok {
        return Err(Error::Precondition(format!(
            "trajectory does not match the configured grids ({} steps, {m} actuators, {n_sensors} sensors)",
            steps
        )));
    }
    let run = sense(config, &trajectory.kappa, usize::MAX)?;
    let state_defect = sup_distance(&run.readings, &trajectory.readings);
    let sets = feedback_sets(config, &run.readings)?;
    let beta = &config.controller.beta;
    let mut inclusion_defect: f64 = 0.0;
    let mut worst = (0, 0);
    for n in 0..steps {
        let (k0, k1) = (&trajectory.kappa[n], &trajectory.kappa[n + 1]);
        for j in 0..m {
            let lhs = beta[j] * (k1[j] - k0[j]) / config.dt + 0.5 * (k0[j] + k1[j]);
            let d = sets[n + 1][j].distance(lhs);
            if d > inclusion_defect {
                inclusion_defect = d;
                worst = (n + 1, j);
            }
        }
    }
    Ok(ResidualBreakdown {
        inclusion_defect,
        state_defect,
        worst,
    })
}

pub fn residual(trajectory: &Trajectory, config: &SimConfig) -> Result<f64> {
    residual_breakdown(trajectory, config).map(|r| r.total())
}

/// `max |P(λ v1 + (1 - λ) v2) - λ P(v1) - (1 - λ) P(v2)|`.
pub fn affine_check(config: &SimConfig, v1: &[Vec<f64>], v2: &[Vec<f64>], lambda: f64) -> f64 {
    affine_deviation(&config.controller, config.dt, v1, v2, lambda)
}

pub fn affine_deviation(
    params: &ControllerParams,
    dt: f64,
    v1: &[Vec<f64>],
    v2: &[Vec<f64>],
    lambda: f64,
) -> f64 {
    let lerp = |x: f64, y: f64| {
        if x == y {
            x
        } else {
            lambda * x + (1.0 - lambda) * y
        }
    };
    let mix: Vec<Vec<f64>> = v1
        .iter()
        .zip(v2)
        .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| lerp(x, y)).collect())
        .collect();
    let p1 = controller_trajectory(params, v1, dt);
    let p2 = controller_trajectory(params, v2, dt);
    let pm = controller_trajectory(params, &mix, dt);
    pm.iter()
        .zip(p1.iter().zip(&p2))
        .flat_map(|(m, (a, b))| {
            m.iter()
                .zip(a.iter().zip(b))
                .map(move |(&x, (&y, &z))| (x - lerp(y, z)).abs())
        })
        .fold(0.0, f64::max)
}
