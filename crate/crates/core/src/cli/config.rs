//! Run configuration files.
//!
//! One TOML file fully determines a run. Physical quantities carry their
//! unit in the key name; every key must be recognised.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::actuation::{ActuatorBank, ActuatorProfile, Envelope, Exponents, Shape};
use crate::closed_loop::{InitialCondition, SimConfig, Tolerances};
use crate::controller::ControllerParams;
use crate::dynamics::{LinearSolverOptions, ReactionTerm};
use crate::feedback::{RelaySpec, SelectionStrategy, WeightMatrix};
use crate::grid::Grid;
use crate::sensing::SensorArray;
use crate::verify::TimeRefinement;
use crate::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    grid: GridSection,
    time: TimeSection,
    reaction: ReactionSection,
    initial: InitialSection,
    actuators: Vec<ActuatorSection>,
    sensors: SensorSection,
    feedback: FeedbackSection,
    controller: ControllerSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    probes: ProbeSettings,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    extent_length: Vec<f64>,
    nodes: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    horizon_seconds: f64,
    dt_seconds: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionSection {
    kind: String,
    rate_per_second: Option<f64>,
    state_cap: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    profile: String,
    value: Option<f64>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActuatorSection {
    shape: String,
    center_length: Vec<f64>,
    amplitude: f64,
    width_length: Option<f64>,
    radius_length: Option<f64>,
    envelope: Option<String>,
    envelope_tau_seconds: Option<f64>,
    envelope_period_seconds: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorSection {
    points_length: Vec<Vec<f64>>,
    references: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedbackSection {
    relay: String,
    relay_width: Option<f64>,
    strategy: String,
    hysteresis_band: Option<f64>,
    weights: WeightsSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsSection {
    breakpoints_seconds: Vec<f64>,
    /// One `m x n` matrix per breakpoint.
    matrices: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    beta_seconds: Vec<f64>,
    initial: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverSection {
    picard_tol: f64,
    picard_max_iter: usize,
    picard_damping: f64,
    linear_rel_tol: f64,
    linear_max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            picard_tol: t.picard_tol,
            picard_max_iter: t.picard_max_iter,
            picard_damping: t.picard_damping,
            linear_rel_tol: t.linear.rel_tol,
            linear_max_iter: t.linear.max_iter,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    snapshot_stride: Option<usize>,
    lq_exponent: Option<f64>,
    lp_exponent: Option<f64>,
}

/// Pinned probe parameters and regression caps for a scenario.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    pub seed: u64,
    pub stability_pairs: usize,
    pub stability_ratio_cap: Option<f64>,
    pub stability_spread: Option<f64>,
    pub holder_margin_length: f64,
    pub holder_controls: usize,
    pub holder_c6_spread: f64,
    pub convergence_levels: usize,
    pub convergence_time: TimeRefinement,
    pub convergence_order: Option<f64>,
    pub convergence_order_tol: f64,
    pub bounds_sequences: usize,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            seed: 42,
            stability_pairs: 20,
            stability_ratio_cap: None,
            stability_spread: None,
            holder_margin_length: 0.1,
            holder_controls: 5,
            holder_c6_spread: 10.0,
            convergence_levels: 3,
            convergence_time: TimeRefinement::Halve,
            convergence_order: None,
            convergence_order_tol: 0.2,
            bounds_sequences: 100,
        }
    }
}

/// A parsed configuration with its canonical hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub sim: SimConfig,
    pub probes: ProbeSettings,
    pub hash: String,
}

/// SHA-256 of the canonical JSON form of the TOML tree (keys sorted), so
/// reordering keys or tables does not change the hash.
pub fn config_hash(text: &str) -> Result<String> {
    let value: toml::Value =
        toml::from_str(text).map_err(|e| Error::Invalid(vec![e.to_string()]))?;
    let json = serde_json::to_value(&value).map_err(|e| Error::Config(e.to_string()))?;
    let canonical = serde_json::to_string(&json).map_err(|e| Error::Config(e.to_string()))?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)?;
    parse(&text)
}

/// Parse and fully validate a configuration; every problem is reported.
pub fn parse(text: &str) -> Result<LoadedConfig> {
    let hash = config_hash(text)?;
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Invalid(vec![e.to_string()]))?;
    let mut errs = Vec::new();
    let sim = build(
        file.grid,
        file.time,
        file.reaction,
        file.initial,
        file.actuators,
        file.sensors,
        file.feedback,
        file.controller,
        file.solver,
        file.output,
        &mut errs,
    );
    match sim {
        Some(sim) => {
            errs.extend(sim.validate());
            if errs.is_empty() {
                Ok(LoadedConfig {
                    sim,
                    probes: file.probes,
                    hash,
                })
            } else {
                Err(Error::Invalid(errs))
            }
        }
        None => Err(Error::Invalid(errs)),
    }
}

fn collect<T>(errs: &mut Vec<String>, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(Error::Invalid(list)) => {
            errs.extend(list);
            None
        }
        Err(e) => {
            errs.push(e.to_string());
            None
        }
    }
}

fn require(errs: &mut Vec<String>, value: Option<f64>, key: &str, context: &str) -> f64 {
    value.unwrap_or_else(|| {
        errs.push(format!("{context}: missing key `{key}`"));
        f64::NAN
    })
}

fn reject(errs: &mut Vec<String>, present: bool, key: &str, context: &str) {
    if present {
        errs.push(format!("{context}: key `{key}` does not apply here"));
    }
}

#[allow(clippy::too_many_arguments)]
fn build(
    grid: GridSection,
    time: TimeSection,
    reaction: ReactionSection,
    initial: InitialSection,
    actuators: Vec<ActuatorSection>,
    sensors: SensorSection,
    feedback: FeedbackSection,
    controller: ControllerSection,
    solver: SolverSection,
    output: OutputSection,
    errs: &mut Vec<String>,
) -> Option<SimConfig> {
    let grid = collect(errs, Grid::new(&grid.extent_length, &grid.nodes));

    let reaction_term = match reaction.kind.as_str() {
        "zero" => {
            reject(
                errs,
                reaction.rate_per_second.is_some(),
                "rate_per_second",
                "reaction",
            );
            Some(ReactionTerm::Zero)
        }
        "allen_cahn" => {
            reject(
                errs,
                reaction.rate_per_second.is_some(),
                "rate_per_second",
                "reaction",
            );
            Some(ReactionTerm::AllenCahn)
        }
        "linear" => Some(ReactionTerm::Linear {
            lambda: require(
                errs,
                reaction.rate_per_second,
                "rate_per_second",
                "reaction",
            ),
        }),
        other => {
            errs.push(format!(
                "reaction: unknown kind `{other}` (zero, linear, allen_cahn)"
            ));
            None
        }
    };

    let ctx = "initial";
    let init = match initial.profile.as_str() {
        "zero" | "cosine" => {
            reject(errs, initial.value.is_some(), "value", ctx);
            reject(errs, initial.values.is_some(), "values", ctx);
            Some(if initial.profile == "zero" {
                InitialCondition::Zero
            } else {
                InitialCondition::Cosine
            })
        }
        "constant" => {
            reject(errs, initial.values.is_some(), "values", ctx);
            Some(InitialCondition::Constant {
                value: require(errs, initial.value, "value", ctx),
            })
        }
        "nodes" => {
            reject(errs, initial.value.is_some(), "value", ctx);
            match initial.values {
                Some(values) => Some(InitialCondition::Nodes { values }),
                None => {
                    errs.push("initial: missing key `values`".into());
                    None
                }
            }
        }
        other => {
            errs.push(format!(
                "initial: unknown profile `{other}` (zero, constant, cosine, nodes)"
            ));
            None
        }
    };

    let mut profiles = Vec::with_capacity(actuators.len());
    for (j, a) in actuators.into_iter().enumerate() {
        let ctx = format!("actuator {}", j + 1);
        let shape = match a.shape.as_str() {
            "gaussian" => {
                reject(errs, a.radius_length.is_some(), "radius_length", &ctx);
                Some(Shape::Gaussian {
                    center: a.center_length.clone(),
                    width: require(errs, a.width_length, "width_length", &ctx),
                    amplitude: a.amplitude,
                })
            }
            "indicator" => {
                reject(errs, a.width_length.is_some(), "width_length", &ctx);
                Some(Shape::Indicator {
                    center: a.center_length.clone(),
                    radius: require(errs, a.radius_length, "radius_length", &ctx),
                    amplitude: a.amplitude,
                })
            }
            other => {
                errs.push(format!(
                    "{ctx}: unknown shape `{other}` (gaussian, indicator)"
                ));
                None
            }
        };
        let envelope = match a.envelope.as_deref().unwrap_or("constant") {
            "constant" => {
                reject(
                    errs,
                    a.envelope_tau_seconds.is_some(),
                    "envelope_tau_seconds",
                    &ctx,
                );
                reject(
                    errs,
                    a.envelope_period_seconds.is_some(),
                    "envelope_period_seconds",
                    &ctx,
                );
                Some(Envelope::Constant)
            }
            "ramp" => {
                reject(
                    errs,
                    a.envelope_period_seconds.is_some(),
                    "envelope_period_seconds",
                    &ctx,
                );
                Some(Envelope::Ramp {
                    tau: require(errs, a.envelope_tau_seconds, "envelope_tau_seconds", &ctx),
                })
            }
            "pulse" => {
                reject(
                    errs,
                    a.envelope_tau_seconds.is_some(),
                    "envelope_tau_seconds",
                    &ctx,
                );
                Some(Envelope::Pulse {
                    period: require(
                        errs,
                        a.envelope_period_seconds,
                        "envelope_period_seconds",
                        &ctx,
                    ),
                })
            }
            other => {
                errs.push(format!(
                    "{ctx}: unknown envelope `{other}` (constant, ramp, pulse)"
                ));
                None
            }
        };
        if let (Some(shape), Some(envelope)) = (shape, envelope) {
            profiles.push(ActuatorProfile { shape, envelope });
        }
    }
    let bank = collect(errs, ActuatorBank::new(profiles));
    let sensors = collect(
        errs,
        SensorArray::new(sensors.points_length, sensors.references),
    );

    let relay = match feedback.relay.as_str() {
        "strict" | "convexified" => {
            reject(
                errs,
                feedback.relay_width.is_some(),
                "relay_width",
                "feedback",
            );
            Some(if feedback.relay == "strict" {
                RelaySpec::Strict
            } else {
                RelaySpec::Convexified
            })
        }
        "smoothed" => Some(RelaySpec::Smoothed {
            delta: require(errs, feedback.relay_width, "relay_width", "feedback"),
        }),
        other => {
            errs.push(format!(
                "feedback: unknown relay `{other}` (strict, convexified, smoothed)"
            ));
            None
        }
    };
    if feedback.strategy != "hysteresis" {
        reject(
            errs,
            feedback.hysteresis_band.is_some(),
            "hysteresis_band",
            "feedback",
        );
    }
    let strategy = match feedback.strategy.as_str() {
        "midpoint" => Some(SelectionStrategy::Midpoint),
        "prefer_zero" => Some(SelectionStrategy::PreferZero),
        "prefer_previous" => Some(SelectionStrategy::PreferPrevious),
        "extreme_lo" => Some(SelectionStrategy::ExtremeLo),
        "extreme_hi" => Some(SelectionStrategy::ExtremeHi),
        "hysteresis" => Some(SelectionStrategy::Hysteresis {
            band: require(
                errs,
                feedback.hysteresis_band,
                "hysteresis_band",
                "feedback",
            ),
        }),
        other => {
            errs.push(format!(
                "feedback: unknown strategy `{other}` (midpoint, prefer_zero, prefer_previous, extreme_lo, extreme_hi, hysteresis)"
            ));
            None
        }
    };
    let weights = collect(
        errs,
        WeightMatrix::new(
            feedback.weights.breakpoints_seconds,
            feedback.weights.matrices,
        ),
    );
    // checked with the rest of the assembled config
    let controller = Some(ControllerParams {
        beta: controller.beta_seconds,
        initial: controller.initial,
    });

    let dim = grid.as_ref().map_or(1, Grid::dim);
    let default_exp = Exponents::for_dim(dim);
    let exponents = Exponents {
        p: output.lp_exponent.unwrap_or(default_exp.p),
        q: output.lq_exponent.unwrap_or(default_exp.q),
    };
    if !(exponents.p >= 1.0 && exponents.q >= 1.0) {
        errs.push(format!(
            "output: integrability exponents {exponents:?} must be at least 1"
        ));
    }
    let tolerances = Tolerances {
        picard_tol: solver.picard_tol,
        picard_max_iter: solver.picard_max_iter,
        picard_damping: solver.picard_damping,
        linear: LinearSolverOptions {
            rel_tol: solver.linear_rel_tol,
            max_iter: solver.linear_max_iter,
        },
    };

    Some(SimConfig {
        grid: grid?,
        horizon: time.horizon_seconds,
        dt: time.dt_seconds,
        reaction: reaction_term?,
        state_cap: reaction.state_cap,
        initial: init?,
        bank: bank?,
        sensors: sensors?,
        relay: relay?,
        weights: weights?,
        strategy: strategy?,
        controller: controller?,
        tolerances,
        snapshot_stride: output.snapshot_stride,
        exponents,
    })
}
