//! Priors over arm mean rewards.
//!
//! Arm means are drawn iid from a distribution on `[0, 1]` whose density is
//! bounded away from zero and infinity on its support. Three families are
//! supported: the uniform prior, a Beta prior truncated to a sub-interval,
//! and a piecewise-constant density.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use thiserror::Error;

/// Number of grid points used when checking density bounds.
pub const DEFAULT_DENSITY_GRID: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("invalid prior: {0}")]
    Invalid(String),
    #[error("density vanishes on the support (min over grid = {min}); truncate the prior")]
    DensityUnbounded { min: f64 },
    #[error("density range [{min}, {max}] violates declared bounds [{c1}, {c2}]")]
    DeclaredBoundsViolated { min: f64, max: f64, c1: f64, c2: f64 },
    #[error("moments (mean={mean}, variance={variance}) admit no Beta distribution")]
    InfeasibleMoments { mean: f64, variance: f64 },
    #[error("two largest samples are equal; gap is zero")]
    ZeroGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorFamily {
    Uniform,
    TruncatedBeta {
        alpha: f64,
        beta: f64,
        lo: f64,
        hi: f64,
    },
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
}

/// A prior distribution for arm means, with optional declared density bounds
/// `(C1, C2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(flatten)]
    pub family: PriorFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_bounds: Option<(f64, f64)>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

impl PriorSpec {
    pub fn uniform() -> Self {
        Self {
            family: PriorFamily::Uniform,
            declared_bounds: None,
        }
    }

    pub fn truncated_beta(alpha: f64, beta: f64, lo: f64, hi: f64) -> Result<Self, PriorError> {
        let p = Self {
            family: PriorFamily::TruncatedBeta { alpha, beta, lo, hi },
            declared_bounds: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn piecewise_constant(breakpoints: Vec<f64>, densities: Vec<f64>) -> Result<Self, PriorError> {
        let p = Self {
            family: PriorFamily::PiecewiseConstant { breakpoints, densities },
            declared_bounds: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_declared_bounds(mut self, c1: f64, c2: f64) -> Self {
        self.declared_bounds = Some((c1, c2));
        self
    }

    /// Structural checks: parameters in range and total mass one.
    pub fn validate(&self) -> Result<(), PriorError> {
        match &self.family {
            PriorFamily::Uniform => {}
            PriorFamily::TruncatedBeta { alpha, beta, lo, hi } => {
                if !(*alpha > 0.0 && *beta > 0.0) {
                    return Err(PriorError::Invalid(format!(
                        "beta parameters must be positive, got ({alpha}, {beta})"
                    )));
                }
                if !(0.0 <= *lo && lo < hi && *hi <= 1.0) {
                    return Err(PriorError::Invalid(format!(
                        "truncation interval [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1"
                    )));
                }
                if truncation_mass(*alpha, *beta, *lo, *hi) <= 0.0 {
                    return Err(PriorError::Invalid("truncation interval has zero mass".into()));
                }
            }
            PriorFamily::PiecewiseConstant { breakpoints, densities } => {
                if breakpoints.len() < 2 || densities.len() + 1 != breakpoints.len() {
                    return Err(PriorError::Invalid(format!(
                        "need m+1 breakpoints for m densities, got {} and {}",
                        breakpoints.len(),
                        densities.len()
                    )));
                }
                if breakpoints[0] < 0.0 || *breakpoints.last().unwrap() > 1.0 {
                    return Err(PriorError::Invalid("breakpoints must lie in [0, 1]".into()));
                }
                if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(PriorError::Invalid("breakpoints must be strictly increasing".into()));
                }
                if densities.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                    return Err(PriorError::Invalid("densities must be finite and nonnegative".into()));
                }
                let mass: f64 = breakpoints
                    .windows(2)
                    .zip(densities)
                    .map(|(w, d)| (w[1] - w[0]) * d)
                    .sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(PriorError::Invalid(format!("density integrates to {mass}, expected 1")));
                }
            }
        }
        if let Some((c1, c2)) = self.declared_bounds {
            if !(c1 > 0.0 && c2 >= c1) {
                return Err(PriorError::Invalid(format!(
                    "declared bounds must satisfy 0 < C1 <= C2, got ({c1}, {c2})"
                )));
            }
        }
        Ok(())
    }

    /// Closed support interval of the density.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            PriorFamily::Uniform => (0.0, 1.0),
            PriorFamily::TruncatedBeta { lo, hi, .. } => (*lo, *hi),
            PriorFamily::PiecewiseConstant { breakpoints, .. } => {
                (breakpoints[0], *breakpoints.last().unwrap())
            }
        }
    }

    /// Density at `x`; zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(lo..=hi).contains(&x) {
            return 0.0;
        }
        match &self.family {
            PriorFamily::Uniform => 1.0,
            PriorFamily::TruncatedBeta { alpha, beta, lo, hi } => {
                beta_pdf(*alpha, *beta, x) / truncation_mass(*alpha, *beta, *lo, *hi)
            }
            PriorFamily::PiecewiseConstant { breakpoints, densities } => {
                // right-continuous; the last segment is closed on the right
                let seg = breakpoints[1..]
                    .iter()
                    .position(|b| x < *b)
                    .unwrap_or(densities.len() - 1);
                densities[seg]
            }
        }
    }

    /// Draws `count` iid means.
    pub fn sample_means<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            PriorFamily::Uniform => rng.random::<f64>(),
            PriorFamily::TruncatedBeta { alpha, beta, lo, hi } => {
                let dist = Beta::new(*alpha, *beta).expect("validated beta parameters");
                loop {
                    let x = dist.sample(rng);
                    if (*lo..=*hi).contains(&x) {
                        return x;
                    }
                }
            }
            PriorFamily::PiecewiseConstant { breakpoints, densities } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let last = densities.len() - 1;
                for (i, d) in densities.iter().enumerate() {
                    let width = breakpoints[i + 1] - breakpoints[i];
                    let mass = d * width;
                    if (u < acc + mass && mass > 0.0) || (i == last && mass > 0.0) {
                        let frac = ((u - acc) / mass).clamp(0.0, 1.0);
                        return (breakpoints[i] + frac * width).min(breakpoints[i + 1]);
                    }
                    acc += mass;
                }
                // only reachable if the final segments carry no mass
                let i = densities.iter().rposition(|d| *d > 0.0).expect("validated mass");
                breakpoints[i] + rng.random::<f64>() * (breakpoints[i + 1] - breakpoints[i])
            }
        }
    }
}

fn beta_pdf(alpha: f64, beta: f64, x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        // endpoint values: finite only when the exponent is zero
        let at_zero = x <= 0.0;
        let exp = if at_zero { alpha - 1.0 } else { beta - 1.0 };
        return if exp == 0.0 {
            (-ln_beta(alpha, beta)).exp()
        } else if exp > 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
    }
    ((alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() - ln_beta(alpha, beta)).exp()
}

fn truncation_mass(alpha: f64, beta: f64, lo: f64, hi: f64) -> f64 {
    beta_reg(alpha, beta, hi) - beta_reg(alpha, beta, lo)
}

/// Scans the density over an even grid on the support and returns `(C1, C2)`,
/// the minimum and maximum observed. Fails if the minimum is zero, or if
/// declared bounds are present and the observed range leaves them.
pub fn validate_bounded_density(p: &PriorSpec, grid_points: usize) -> Result<(f64, f64), PriorError> {
    if grid_points < 100 {
        return Err(PriorError::Invalid(format!("grid_points must be >= 100, got {grid_points}")));
    }
    p.validate()?;
    let (lo, hi) = p.support();
    let step = (hi - lo) / (grid_points - 1) as f64;
    let (mut min, mut max) = (f64::INFINITY, 0.0f64);
    for i in 0..grid_points {
        let x = if i == grid_points - 1 { hi } else { lo + step * i as f64 };
        let d = p.density(x);
        min = min.min(d);
        max = max.max(d);
    }
    if !(min > 0.0) {
        return Err(PriorError::DensityUnbounded { min });
    }
    if let Some((c1, c2)) = p.declared_bounds {
        if min < c1 || max > c2 {
            return Err(PriorError::DeclaredBoundsViolated { min, max, c1, c2 });
        }
    }
    Ok((min, max))
}

/// Parameters of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, PriorError> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(Self { alpha, beta })
        } else {
            Err(PriorError::Invalid(format!("Beta({alpha}, {beta}) needs positive finite parameters")))
        }
    }

    pub fn flat() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }
}

/// Method-of-moments Beta fit: the returned distribution has exactly the
/// given mean and variance.
pub fn fit_beta_moments(mean: f64, variance: f64) -> Result<BetaParams, PriorError> {
    let infeasible = PriorError::InfeasibleMoments { mean, variance };
    if !(mean > 0.0 && mean < 1.0 && variance > 0.0) || !variance.is_finite() {
        return Err(infeasible);
    }
    if variance >= mean * (1.0 - mean) {
        return Err(infeasible);
    }
    let alpha = mean * (mean * (1.0 - mean) / variance - 1.0);
    let beta = (1.0 - mean) / mean * alpha;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(infeasible);
    }
    Ok(BetaParams { alpha, beta })
}

/// `1 / (x_(1) - x_(2))` for the two largest values.
pub fn gap_reciprocal(values: &[f64]) -> Result<f64, PriorError> {
    if values.len() < 2 {
        return Err(PriorError::Invalid("need at least two values".into()));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in values {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    let gap = first - second;
    if gap <= 0.0 {
        return Err(PriorError::ZeroGap);
    }
    Ok(1.0 / gap)
}

/// Samples `m` means from the prior and returns the reciprocal of the gap
/// between the two largest.
pub fn gap_reciprocal_sample<R: Rng + ?Sized>(p: &PriorSpec, m: usize, rng: &mut R) -> Result<f64, PriorError> {
    if m < 2 {
        return Err(PriorError::Invalid(format!("m must be >= 2, got {m}")));
    }
    gap_reciprocal(&p.sample_means(m, rng))
}
