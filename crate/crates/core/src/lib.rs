//! Hybrid decentralized optimization (HDO).
//!
//! A population of agents, some with first-order gradient oracles and some
//! with zeroth-order (function-value or directional-derivative) oracles,
//! interacts in random pairs. Each interaction performs one local estimator
//! step per agent followed by model averaging. The crate provides the
//! objectives, the estimators, the interaction dynamics, the analysis
//! metrics, a Monte-Carlo bound-checking suite and an experiment runner.

pub mod error;
pub mod estimators;
pub mod metrics;
pub mod objectives;
pub mod protocol;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod theory_checks;
pub mod vector;

pub use error::{HdoError, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, GradientEstimate};
pub use objectives::{Dataset, DataPartition, ObjectiveKind, ObjectiveSpec, StochasticObjective};
pub use protocol::{Agent, LrSchedule, Population, PopulationConfig, SchedulerMode};
