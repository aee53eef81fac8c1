//! Closed-loop reaction-diffusion simulation.
//!
//! A parabolic equation `u_t - Δu = f(u) + Σ_j g_j(x, t) κ_j(t)` on a rectangle
//! with insulated (Neumann) walls, driven by interior actuators whose
//! amplitudes `κ_j` follow the first-order inclusions
//! `β_j κ_j' + κ_j ∈ Σ_k α_jk(t) w̃_k(u(x_k*, t) - u_k*)`, where `w̃_k` is a
//! (convexified) relay acting on point-sensor errors.
//!
//! The coupled problem is solved two ways: by time marching
//! ([`closed_loop::simulate`]) and by iterating the sensing / feedback /
//! controller composition over the whole horizon
//! ([`closed_loop::picard_solve`]). [`verify`] holds the numerical probes
//! used to check the solver against analytic solutions and a-priori bounds.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod cli;
pub mod closed_loop;
pub mod controller;
pub mod dynamics;
pub mod feedback;
pub mod grid;
pub mod sensing;
pub mod verify;

pub use actuation::{ActuatorBank, ActuatorProfile, Envelope, Shape};
pub use closed_loop::{ResidualReport, SimConfig, Trajectory};
pub use controller::{BoundsReport, ControllerParams};
pub use dynamics::{GrowthCert, ReactionTerm};
pub use feedback::{AdmissibleInterval, RelaySpec, SelectionStrategy, WeightMatrix};
pub use grid::{Field, Grid};
pub use sensing::SensorArray;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("configuration rejected:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(
        "linear solver stalled after {iterations} iterations (relative residual {residual:.3e})"
    )]
    LinearSolver { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
