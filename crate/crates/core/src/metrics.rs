//! Loss accounting: per-round loss, the external/internal split, averages
//! across replications and power-law exponent fits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Allocation, ArmPool, RoundOutcome};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("need more than {burn_in} rounds, got {rounds}")]
    TooFewRounds { rounds: usize, burn_in: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("loss must be positive for an exponent fit, got {loss} at n={n}")]
    NonPositiveLoss { n: f64, loss: f64 },
    #[error("no replications")]
    NoReplications,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub loss: f64,
    pub external_component: f64,
    pub internal_component: f64,
    /// Pulls on arms of age `0..=w`.
    pub pulls_by_age: Vec<u64>,
    /// Realized reward per pull.
    pub reward: f64,
    /// Best available true mean.
    pub oracle_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub config_digest: String,
    pub replication: u64,
    pub seed: u64,
    pub rounds: usize,
    pub mean_loss: f64,
    /// NaN for a single episode: the interval is across replications.
    pub loss_ci_halfwidth: f64,
    /// Realized reward over oracle reward after burn-in, as a percentage.
    pub pct_of_oracle: f64,
}

/// `(1/n) Σ_a π(a)(μ* − μ_a)`.
pub fn round_loss(outcome: &RoundOutcome, n: u64) -> f64 {
    let gap: f64 = outcome
        .pulls
        .iter()
        .map(|(id, &c)| c as f64 * (outcome.oracle_mean - outcome.pulled_means[id]))
        .sum();
    gap / n as f64
}

/// Splits a round's loss into cross-cohort and within-cohort parts.
///
/// External is `max_j [μ_max(window) − μ_max(A_{t−j})]` over every live
/// cohort, the newest included; internal is
/// `Σ_j Σ_{a ∈ A_{t−j}} (π(a)/n)(μ_max(A_{t−j}) − μ_a)`.
pub fn external_internal_split(pool: &ArmPool, alloc: &Allocation, n: u64) -> (f64, f64) {
    let window_max = pool
        .arms()
        .map(|a| a.mu)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut external = 0.0f64;
    let mut internal = 0.0;
    for cohort in pool.cohorts() {
        let best = cohort.max_mean();
        external = external.max(window_max - best);
        for arm in &cohort.arms {
            if let Some(&c) = alloc.get(&arm.id) {
                internal += c as f64 / n as f64 * (best - arm.mu);
            }
        }
    }
    (external, internal)
}

/// Builds the log row for one played round.
pub fn round_log(pool: &ArmPool, outcome: &RoundOutcome, n: u64, w: usize) -> RoundLog {
    let (external, internal) = external_internal_split(pool, &outcome.pulls, n);
    let mut pulls_by_age = vec![0u64; w + 1];
    for (id, &c) in &outcome.pulls {
        if let Some(age) = pool.age_of(*id) {
            if let Some(slot) = pulls_by_age.get_mut(age as usize) {
                *slot += c;
            }
        }
    }
    let reward: f64 = outcome.rewards.values().map(|t| t.sum).sum();
    RoundLog {
        round: outcome.round,
        loss: round_loss(outcome, n),
        external_component: external,
        internal_component: internal,
        pulls_by_age,
        reward: reward / n as f64,
        oracle_mean: outcome.oracle_mean,
    }
}

/// Mean loss over rounds after `burn_in`.
pub fn episode_mean_loss(logs: &[RoundLog], burn_in: usize) -> Result<f64, MetricsError> {
    if logs.len() <= burn_in {
        return Err(MetricsError::TooFewRounds {
            rounds: logs.len(),
            burn_in,
        });
    }
    let tail = &logs[burn_in..];
    Ok(tail.iter().map(|l| l.loss).sum::<f64>() / tail.len() as f64)
}

/// Realized-over-oracle reward after `burn_in`, in percent.
pub fn pct_of_oracle(logs: &[RoundLog], burn_in: usize) -> Result<f64, MetricsError> {
    if logs.len() <= burn_in {
        return Err(MetricsError::TooFewRounds {
            rounds: logs.len(),
            burn_in,
        });
    }
    let tail = &logs[burn_in..];
    let got: f64 = tail.iter().map(|l| l.reward).sum();
    let best: f64 = tail.iter().map(|l| l.oracle_mean).sum();
    Ok(100.0 * got / best)
}

/// Mean and normal-approximation 95% half-width of iid values. The
/// half-width is NaN for fewer than two values.
pub fn mean_and_ci(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    let r = values.len();
    if r == 0 {
        return Err(MetricsError::NoReplications);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return Ok((mean, f64::NAN));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    Ok((mean, Z_95 * (var / r as f64).sqrt()))
}

/// Average loss across replications, each averaged after `burn_in`; the
/// interval comes from the spread of the per-replication means.
pub fn average_loss(replications: &[Vec<RoundLog>], burn_in: usize) -> Result<(f64, f64), MetricsError> {
    let means = replications
        .iter()
        .map(|logs| episode_mean_loss(logs, burn_in))
        .collect::<Result<Vec<_>, _>>()?;
    mean_and_ci(&means)
}

/// OLS slope of `ln loss` against `ln n`.
pub fn fit_loss_exponent(points: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if let Some(&(n, loss)) = points.iter().find(|(_, l)| !(*l > 0.0)) {
        return Err(MetricsError::NonPositiveLoss { n, loss });
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, l)| l.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
