//! Exploration grids and the adaptivity-level rule.
//!
//! A grid `(ε_0, …, ε_ℓ)` splits a budget of `n` pulls into `ℓ + 1` batches.
//! Batch `i < ℓ` explores the surviving arms; batch `ℓ` commits.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when comparing a floating exponent against a rational
/// threshold, so that `ρ = 1/3` lands on the threshold rather than below it.
pub const RHO_TOL: f64 = 1e-12;

/// Grids deeper than this are rejected.
pub const MAX_LEVEL: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid infeasible: exploration fractions sum to {partial_sum} >= 1 (level {level}, k={k}, n={n})")]
    GridInfeasible { level: usize, k: u64, n: u64, partial_sum: f64 },
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("rho={rho} is inconsistent with k={k}, n={n} (n^rho = {implied})")]
    InconsistentRho { rho: f64, k: u64, n: u64, implied: f64 },
}

/// Batch fractions `(ε_0, …, ε_ℓ)`: all positive, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    fractions: Vec<f64>,
}

impl GridSpec {
    pub fn new(fractions: Vec<f64>) -> Result<Self, GridError> {
        if fractions.len() < 2 {
            return Err(GridError::Invalid(format!(
                "a grid needs at least two batches, got {}",
                fractions.len()
            )));
        }
        if fractions.len() > MAX_LEVEL + 1 {
            return Err(GridError::Invalid(format!("level {} exceeds {MAX_LEVEL}", fractions.len() - 1)));
        }
        if let Some(bad) = fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(GridError::Invalid(format!("fraction {bad} is not in (0, 1)")));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(GridError::Invalid(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(Self { fractions })
    }

    /// Adaptivity level `ℓ`: the number of exploration batches.
    pub fn level(&self) -> usize {
        self.fractions.len() - 1
    }

    pub fn fractions(&self) -> &[f64] {
        &self.fractions
    }

    pub fn fraction(&self, i: usize) -> f64 {
        self.fractions[i]
    }

    /// Pulls reserved for exploration batch `i < ℓ` out of `budget`:
    /// `⌊ε_i · budget⌋`.
    pub fn batch_size(&self, i: usize, budget: u64) -> u64 {
        debug_assert!(i < self.level());
        (self.fractions[i] * budget as f64).floor() as u64
    }

    /// Pulls left for the commit batch: `budget − Σ_{i<ℓ} ⌊ε_i · budget⌋`.
    pub fn final_batch_size(&self, budget: u64) -> u64 {
        let explored: u64 = (0..self.level()).map(|i| self.batch_size(i, budget)).sum();
        budget.saturating_sub(explored)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// `ε_i = (k/n)^{(ℓ−i)/(ℓ+2)}`.
    #[default]
    RevisedGeometric,
    /// Revised geometric grid with the extra `log n` factor inside the power.
    RevisedGeometricLog,
    /// Every exploration batch gets `(k/n)^{ℓ/(ℓ+2)}`; the arrival-adaptive
    /// grid specialised to a constant arrival count.
    ArrivalAdaptive,
    Minimax,
    Geometric,
}

/// Builds a grid of the given kind. `k` is the number of arms the grid
/// will explore (after any resampling).
pub fn build_grid(kind: GridKind, level: usize, k: u64, n: u64) -> Result<GridSpec, GridError> {
    match kind {
        GridKind::RevisedGeometric => revised_geometric_grid_with(level, k, n, false),
        GridKind::RevisedGeometricLog => revised_geometric_grid_with(level, k, n, true),
        GridKind::ArrivalAdaptive => arrival_adaptive_grid(level, k, n),
        GridKind::Minimax => minimax_grid(level, n),
        GridKind::Geometric => geometric_grid(level, n),
    }
}

fn check_level(level: usize) -> Result<(), GridError> {
    if level == 0 || level > MAX_LEVEL {
        return Err(GridError::Invalid(format!("level must be in 1..={MAX_LEVEL}, got {level}")));
    }
    Ok(())
}

fn close_with_remainder(level: usize, k: u64, n: u64, mut explore: Vec<f64>) -> Result<GridSpec, GridError> {
    let partial_sum: f64 = explore.iter().sum();
    if partial_sum >= 1.0 || explore.iter().any(|e| !(*e > 0.0)) {
        return Err(GridError::GridInfeasible { level, k, n, partial_sum });
    }
    explore.push(1.0 - partial_sum);
    GridSpec::new(explore)
}

/// `ε_i = (k/n)^{(ℓ−i)/(ℓ+2)}` for `i < ℓ`, remainder in the last batch.
pub fn revised_geometric_grid(level: usize, k: u64, n: u64) -> Result<GridSpec, GridError> {
    revised_geometric_grid_with(level, k, n, false)
}

/// As [`revised_geometric_grid`]; with `with_log_factor` the base becomes
/// `k·ln(n)/n`.
pub fn revised_geometric_grid_with(
    level: usize,
    k: u64,
    n: u64,
    with_log_factor: bool,
) -> Result<GridSpec, GridError> {
    check_level(level)?;
    if k == 0 || k >= n {
        return Err(GridError::GridInfeasible {
            level,
            k,
            n,
            partial_sum: f64::INFINITY,
        });
    }
    let mut base = k as f64 / n as f64;
    if with_log_factor {
        base *= (n as f64).ln();
    }
    let l = level as f64;
    let explore = (0..level)
        .map(|i| base.powf((l - i as f64) / (l + 2.0)))
        .collect();
    close_with_remainder(level, k, n, explore)
}

/// Every exploration batch gets `(k/n)^{ℓ/(ℓ+2)}`.
pub fn arrival_adaptive_grid(level: usize, k: u64, n: u64) -> Result<GridSpec, GridError> {
    check_level(level)?;
    if k == 0 || k >= n {
        return Err(GridError::GridInfeasible {
            level,
            k,
            n,
            partial_sum: f64::INFINITY,
        });
    }
    let l = level as f64;
    let eps = (k as f64 / n as f64).powf(l / (l + 2.0));
    close_with_remainder(level, k, n, vec![eps; level])
}

/// Minimax grid. Cumulative batch ends are `u_i = a^{2 − 2^{−i}}` with
/// `a = n^{1/(2 − 2^{−ℓ})}`, so `u_0 = a`, `u_i = a·√u_{i−1}` and `u_ℓ = n`.
pub fn minimax_grid(level: usize, n: u64) -> Result<GridSpec, GridError> {
    check_level(level)?;
    if n < 2 {
        return Err(GridError::Invalid(format!("n must be >= 2, got {n}")));
    }
    let nf = n as f64;
    let exponent = |i: usize| 2.0 - 0.5f64.powi(i as i32);
    let log_a = nf.ln() / exponent(level);
    let ends: Vec<f64> = (0..level).map(|i| (log_a * exponent(i)).exp()).collect();
    let mut fractions = Vec::with_capacity(level + 1);
    let mut prev = 0.0;
    for u in &ends {
        fractions.push((u - prev) / nf);
        prev = *u;
    }
    let partial_sum: f64 = fractions.iter().sum();
    fractions.push(1.0 - partial_sum);
    GridSpec::new(fractions)
}

/// Geometric grid: weights `b^{i+1}` with `b = n^{1/ℓ}`, normalized.
pub fn geometric_grid(level: usize, n: u64) -> Result<GridSpec, GridError> {
    check_level(level)?;
    if n < 2 {
        return Err(GridError::Invalid(format!("n must be >= 2, got {n}")));
    }
    let log_b = (n as f64).ln() / level as f64;
    // relative to the largest weight to stay finite
    let rel: Vec<f64> = (0..=level)
        .map(|i| (log_b * (i as f64 - level as f64)).exp())
        .collect();
    let total: f64 = rel.iter().sum();
    let mut fractions: Vec<f64> = rel[..level].iter().map(|r| r / total).collect();
    let partial_sum: f64 = fractions.iter().sum();
    fractions.push(1.0 - partial_sum);
    GridSpec::new(fractions)
}

/// `θ_ℓ = (ℓ − 1)/(2ℓ + 1)`, reduced.
pub fn threshold_exponent(level: usize) -> Ratio<u64> {
    assert!(level >= 1, "level must be >= 1");
    Ratio::new(level as u64 - 1, 2 * level as u64 + 1)
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxLevel {
    Finite(usize),
    Unbounded,
}

/// Largest `ℓ` with `θ_ℓ ≤ ρ`: `⌊(1+ρ)/(1−2ρ)⌋` for `ρ < 1/2`, unbounded
/// otherwise.
pub fn max_feasible_level(rho: f64) -> MaxLevel {
    assert!(rho > 0.0, "rho must be positive");
    if rho >= 0.5 - RHO_TOL {
        return MaxLevel::Unbounded;
    }
    MaxLevel::Finite((((1.0 + rho) / (1.0 - 2.0 * rho)) + 1e-9).floor() as usize)
}

/// Adaptivity level, resampling size and grid chosen for an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivityPlan {
    pub level: usize,
    pub resample_k_prime: u64,
    pub grid: GridSpec,
}

/// The hybrid rule:
///
/// * `ρ < 1/5`: one exploration batch over all `k` arms;
/// * `1/5 ≤ ρ < w/(2w+2)`: the largest `ℓ ≤ w` with `θ_ℓ ≤ ρ`, all `k` arms;
/// * otherwise `ℓ = w` over a resampled subset of `round(n^{w/(2w+2)})` arms.
///
/// The grid is the revised geometric grid for the chosen `(ℓ, k′)`.
pub fn hybrid_plan(rho: f64, w: usize, n: u64, k: u64) -> Result<AdaptivityPlan, GridError> {
    if !(rho >= 0.0) || w == 0 || n < 2 || k == 0 {
        return Err(GridError::Invalid(format!(
            "hybrid plan needs rho >= 0, w >= 1, n >= 2, k >= 1 (got rho={rho}, w={w}, n={n}, k={k})"
        )));
    }
    let implied = (n as f64).powf(rho);
    if (implied - k as f64).abs() > 1.0 + 1e-9 {
        return Err(GridError::InconsistentRho { rho, k, n, implied });
    }
    let wf = w as f64;
    let upper = wf / (2.0 * wf + 2.0);
    let (level, k_prime) = if rho < 0.2 - RHO_TOL {
        (1, k)
    } else if rho < upper - RHO_TOL {
        let level = (1..=w)
            .rev()
            .find(|&l| ratio_f64(threshold_exponent(l)) <= rho + RHO_TOL)
            .unwrap_or(1);
        (level, k)
    } else {
        let k_prime = (n as f64).powf(upper).round().max(1.0) as u64;
        (w, k_prime.min(k))
    };
    let grid = revised_geometric_grid(level, k_prime, n)?;
    Ok(AdaptivityPlan {
        level,
        resample_k_prime: k_prime,
        grid,
    })
}
