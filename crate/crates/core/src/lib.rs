//! Monte Carlo engine for a two-firm investment timing game in which each
//! firm may switch from a shared market to its own new market.
//!
//! Profits follow correlated geometric Brownian motions. Equilibrium play
//! combines a war of attrition (firms stop at a Markovian hazard rate inside
//! the attrition region) with preemption (a grab-the-dollar resolution once
//! the leader payoff exceeds the follower payoff).
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`.

pub mod boundary;
pub mod deterministic;
pub mod equilibrium;
pub mod model;
pub mod paths;
pub mod scalar;
pub mod stats;

use thiserror::Error;

pub use boundary::{
    calibrate_gamma, constrained_value_mc, residual, unconstrained_value, BoundaryKind, BoundarySpec,
    CalibrationError, CalibrationOptions, CalibrationReport, McSettings,
};
pub use deterministic::{
    det_attrition_occurs, det_attrition_start, det_outcome, det_playout, det_preemption_time, det_timeline,
    DetHazard, DetTimeline,
};
pub use equilibrium::{
    aggregate, attrition_rate, preemption_intensity, preemption_outcome, run_campaign, simulate_game,
    simulate_game_traced, GameOptions, GameOutcome, GameStreams, OutcomeMode, OutcomeProbs, SimulationReport,
};
pub use model::{
    classify_region, follower_value, leader_value, simultaneous_value, DerivedConstants, ModelParams, Region,
};
pub use paths::{simulate_path, Path, RngStream, State};
pub use scalar::Scalar;
pub use stats::Estimate;

pub type Params = ModelParams<f64>;
pub type Constants = DerivedConstants<f64>;
pub type Point = State<f64>;
pub type Boundary = BoundarySpec<f64>;
pub type Outcome = GameOutcome<f64>;
pub type Timeline = DetTimeline<f64>;

pub type ParamsF32 = ModelParams<f32>;
pub type PointF32 = State<f32>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParams(Vec<model::Violation>),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("start ({x}, {y}) lies in the preemption region")]
    StartInPreemption { x: f64, y: f64 },
    #[error("attrition rate undefined at ({x}, {y}): on or above the preemption line")]
    RateInPreemption { x: f64, y: f64 },
    #[error("preemption intensity undefined at ({x}, {y}): L - M <= 0")]
    DegenerateIntensity { x: f64, y: f64 },
    #[error("start ({x}, {y}) on an axis is not supported")]
    AxisStart { x: f64, y: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

fn join(vs: &[model::Violation]) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}
