//! Matching while learning on a capacity-constrained two-sided platform.
//!
//! Jobs have known types, workers have unknown types that are learned from
//! Bernoulli match outcomes, and job types have limited arrival rates. The
//! crate provides
//!
//! * [`instance`]: problem instances, random generation, generalized imbalance;
//! * [`lp`]: a small dense simplex solver with exact duals;
//! * [`analytics`]: the known-types plan, shadow prices and learning goals;
//! * [`belief`]: per-worker posterior state;
//! * [`policies`]: DEEM, DEEM⁺ and the price-adjusted Greedy / UCB / Thompson baselines;
//! * [`market`]: the queue-priced discrete-time marketplace simulator;
//! * [`eval`]: batch experiments, regret statistics and the regret-scaling probe.

pub mod analytics;
pub mod belief;
pub mod eval;
pub mod instance;
pub mod lp;
pub mod market;
pub mod policies;
pub mod rng;
pub mod sets;
pub mod stats;

pub use analytics::{LearningStructure, StaticPlan};
pub use instance::{check_generalized_imbalance, generate_instance, GenConfig, Instance};
pub use sets::{JobSet, TypeSet};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    InvalidInstance(Vec<instance::Violation>),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
