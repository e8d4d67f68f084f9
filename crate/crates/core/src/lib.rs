//! Simulation lab for short-lived high-volume bandits: arms arrive in
//! cohorts of `k` per round, live for `w` rounds, and the learner plays `n`
//! pulls per round.
//!
//! Modules, bottom-up:
//!
//! - [`prior`]: bounded-density priors over arm means and Beta moment fits.
//! - [`environment`]: arrivals, expiry and reward realization.
//! - [`grids`]: batch-size grids and the hybrid `(ℓ, k′)` rule.
//! - [`batched_bandits`]: batched successive elimination.
//! - [`policies`]: the pipelined induced policy, the hybrid policy, the
//!   Thompson-sampling variant and baselines.
//! - [`metrics`]: loss accounting.
//! - [`analysis`]: DID regression and Z-tests for experiment logs.
//! - [`harness`]: configs, replications, scenarios and CSV output.

pub mod analysis;
pub mod batched_bandits;
pub mod environment;
pub mod grids;
pub mod harness;
pub mod metrics;
pub mod policies;
pub mod prior;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Prior(#[from] prior::PriorError),
    #[error(transparent)]
    Env(#[from] environment::EnvError),
    #[error(transparent)]
    Grid(#[from] grids::GridError),
    #[error(transparent)]
    Bse(#[from] batched_bandits::BseError),
    #[error(transparent)]
    Policy(#[from] policies::PolicyError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}
