//! Two-period, two-group experiment statistics: the DID regression, the
//! basic Z-test on cell summaries, its bootstrap counterpart and lifts.

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::metrics::Z_95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("design matrix is rank deficient: cell (t={t}, i={i}) is empty")]
    RankDeficient { t: u8, i: u8 },
    #[error("bootstrap standard error is zero for {0}")]
    DegenerateVariance(&'static str),
    #[error("baseline beta0 + beta1 is zero")]
    ZeroBaseline,
    #[error("missing cell {group:?}/{period:?}")]
    MissingCell { group: Group, period: Period },
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Control,
    Treatment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Period {
    Pre,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub group: Group,
    pub period: Period,
    pub count: u64,
    pub mean: f64,
    #[serde(alias = "se")]
    pub se_mean: f64,
}

/// One observation: `t` is the post-period indicator, `i` the treatment
/// indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: u8,
    pub i: u8,
    pub y: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationTable {
    pub rows: Vec<Observation>,
}

impl ObservationTable {
    pub fn push(&mut self, t: u8, i: u8, y: f64) {
        self.rows.push(Observation { t, i, y });
    }

    /// One row per cell holding its mean.
    pub fn from_cell_means(ctrl_pre: f64, ctrl_post: f64, trt_pre: f64, trt_post: f64) -> Self {
        let mut tab = Self::default();
        tab.push(0, 0, ctrl_pre);
        tab.push(1, 0, ctrl_post);
        tab.push(0, 1, trt_pre);
        tab.push(1, 1, trt_post);
        tab
    }
}

/// Coefficients in the order `(intercept, t, i, t·i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidFit {
    pub beta: [f64; 4],
    /// NaN when the residual degrees of freedom are zero.
    pub se: [f64; 4],
    pub t_stat: [f64; 4],
    /// Two-sided, normal approximation.
    pub p_value: [f64; 4],
    pub ci95: [(f64, f64); 4],
    pub n_obs: usize,
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Upper tail `1 − Φ(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn regressors(o: &Observation) -> Vector4<f64> {
    let t = o.t as f64;
    let i = o.i as f64;
    Vector4::new(1.0, t, i, t * i)
}

/// OLS of `y` on `(1, t, i, t·i)` with homoskedastic standard errors.
pub fn did_ols(table: &ObservationTable) -> Result<DidFit, AnalysisError> {
    let mut counts = [[0usize; 2]; 2];
    for o in &table.rows {
        if o.t > 1 || o.i > 1 {
            return Err(AnalysisError::Invalid(format!("indicators must be 0/1, got t={} i={}", o.t, o.i)));
        }
        counts[o.t as usize][o.i as usize] += 1;
    }
    for t in 0..2u8 {
        for i in 0..2u8 {
            if counts[t as usize][i as usize] == 0 {
                return Err(AnalysisError::RankDeficient { t, i });
            }
        }
    }
    let mut xtx = Matrix4::<f64>::zeros();
    let mut xty = Vector4::<f64>::zeros();
    for o in &table.rows {
        let x = regressors(o);
        xtx += x * x.transpose();
        xty += x * o.y;
    }
    let inv = xtx
        .try_inverse()
        .ok_or(AnalysisError::RankDeficient { t: 0, i: 0 })?;
    let beta = inv * xty;
    let n = table.rows.len();
    let df = n.saturating_sub(4);
    let rss: f64 = table
        .rows
        .iter()
        .map(|o| (o.y - regressors(o).dot(&beta)).powi(2))
        .sum();
    let sigma2 = if df > 0 { rss / df as f64 } else { f64::NAN };
    let mut fit = DidFit {
        beta: [0.0; 4],
        se: [0.0; 4],
        t_stat: [0.0; 4],
        p_value: [0.0; 4],
        ci95: [(0.0, 0.0); 4],
        n_obs: n,
    };
    for j in 0..4 {
        let b = beta[j];
        let se = (sigma2 * inv[(j, j)]).sqrt();
        let t = b / se;
        fit.beta[j] = b;
        fit.se[j] = se;
        fit.t_stat[j] = t;
        fit.p_value[j] = 2.0 * normal_sf(t.abs());
        fit.ci95[j] = (b - Z_95 * se, b + Z_95 * se);
    }
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub delta: f64,
    pub se: f64,
    pub z: f64,
    /// `1 − Φ(z)`.
    pub p_one_sided: f64,
}

fn find_cell(cells: &[CellStats], group: Group, period: Period) -> Result<&CellStats, AnalysisError> {
    cells
        .iter()
        .find(|c| c.group == group && c.period == period)
        .ok_or(AnalysisError::MissingCell { group, period })
}

/// `Δ̄ = (Ȳ_post − X̄_post) − (Ȳ_pre − X̄_pre)` over `√(Σ se²)`, where `Y`
/// is treatment and `X` control.
pub fn did_z_test(cells: &[CellStats]) -> Result<ZTest, AnalysisError> {
    let cp = find_cell(cells, Group::Control, Period::Pre)?;
    let cq = find_cell(cells, Group::Control, Period::Post)?;
    let tp = find_cell(cells, Group::Treatment, Period::Pre)?;
    let tq = find_cell(cells, Group::Treatment, Period::Post)?;
    let delta = (tq.mean - cq.mean) - (tp.mean - cp.mean);
    let se = [cp, cq, tp, tq].iter().map(|c| c.se_mean.powi(2)).sum::<f64>().sqrt();
    let z = delta / se;
    Ok(ZTest {
        delta,
        se,
        z,
        p_one_sided: normal_sf(z),
    })
}

/// Raw per-unit values of the four cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellSamples {
    pub control_pre: Vec<f64>,
    pub control_post: Vec<f64>,
    pub treatment_pre: Vec<f64>,
    pub treatment_post: Vec<f64>,
}

impl CellSamples {
    pub fn from_table(table: &ObservationTable) -> Self {
        let mut s = Self::default();
        for o in &table.rows {
            match (o.t, o.i) {
                (0, 0) => s.control_pre.push(o.y),
                (1, 0) => s.control_post.push(o.y),
                (0, 1) => s.treatment_pre.push(o.y),
                _ => s.treatment_post.push(o.y),
            }
        }
        s
    }

    fn cells(&self) -> [(&'static str, &[f64], Group, Period); 4] {
        [
            ("control/pre", &self.control_pre, Group::Control, Period::Pre),
            ("control/post", &self.control_post, Group::Control, Period::Post),
            ("treatment/pre", &self.treatment_pre, Group::Treatment, Period::Pre),
            ("treatment/post", &self.treatment_post, Group::Treatment, Period::Post),
        ]
    }

    /// Cell summaries with `se = s/√N`.
    pub fn summaries(&self) -> Result<Vec<CellStats>, AnalysisError> {
        self.cells()
            .into_iter()
            .map(|(name, xs, group, period)| {
                if xs.len() < 2 {
                    return Err(AnalysisError::Invalid(format!("{name} needs at least 2 values")));
                }
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Ok(CellStats {
                    group,
                    period,
                    count: xs.len() as u64,
                    mean,
                    se_mean: (var / n).sqrt(),
                })
            })
            .collect()
    }
}

fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Bootstrap Z-test: `draws` resamples of `resample_size` values per cell;
/// each cell's mean and SE are the mean and standard deviation of its
/// resampled means. Draws run in parallel, each with its own seed derived
/// from one value taken from `rng`.
pub fn bootstrap_did(
    samples: &CellSamples,
    draws: usize,
    resample_size: usize,
    rng: &mut dyn RngCore,
) -> Result<ZTest, AnalysisError> {
    if draws < 100 {
        return Err(AnalysisError::Invalid(format!("draws must be >= 100, got {draws}")));
    }
    if resample_size == 0 {
        return Err(AnalysisError::Invalid("resample_size must be >= 1".into()));
    }
    let cells = samples.cells();
    for (name, xs, _, _) in &cells {
        if xs.is_empty() {
            return Err(AnalysisError::Invalid(format!("{name} is empty")));
        }
    }
    let base = rng.next_u64();
    let means: Vec<[f64; 4]> = (0..draws)
        .into_par_iter()
        .map(|b| {
            let mut r = ChaCha8Rng::seed_from_u64(base ^ mix64(b as u64));
            let mut out = [0.0; 4];
            for (slot, (_, xs, _, _)) in out.iter_mut().zip(cells.iter()) {
                let mut acc = 0.0;
                for _ in 0..resample_size {
                    acc += xs[r.random_range(0..xs.len())];
                }
                *slot = acc / resample_size as f64;
            }
            out
        })
        .collect();
    let mut stats = Vec::with_capacity(4);
    for (j, (name, _, group, period)) in cells.iter().enumerate() {
        let col: Vec<f64> = means.iter().map(|m| m[j]).collect();
        let mean = col.iter().sum::<f64>() / draws as f64;
        let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        if !(var > 0.0) {
            return Err(AnalysisError::DegenerateVariance(name));
        }
        stats.push(CellStats {
            group: *group,
            period: *period,
            count: resample_size as u64,
            mean,
            se_mean: var.sqrt(),
        });
    }
    did_z_test(&stats)
}

/// `β3 / (β0 + β1)` in percent.
pub fn lift_percentages(fit: &DidFit) -> Result<f64, AnalysisError> {
    lift_from_coefficients(fit.beta[0], fit.beta[1], fit.beta[3])
}

pub fn lift_from_coefficients(beta0: f64, beta1: f64, beta3: f64) -> Result<f64, AnalysisError> {
    let base = beta0 + beta1;
    if base == 0.0 {
        return Err(AnalysisError::ZeroBaseline);
    }
    Ok(100.0 * beta3 / base)
}

/// One-sided Welch test of `mean(a) > mean(b)` with a normal reference.
pub fn welch_z_test(a: &[f64], b: &[f64]) -> Result<ZTest, AnalysisError> {
    let moments = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v / n)
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(AnalysisError::Invalid("each sample needs at least 2 values".into()));
    }
    let (ma, va) = moments(a);
    let (mb, vb) = moments(b);
    let delta = ma - mb;
    let se = (va + vb).sqrt();
    let z = delta / se;
    Ok(ZTest {
        delta,
        se,
        z,
        p_one_sided: normal_sf(z),
    })
}

/// Gaussian 2×2 log with `counts[c]` rows per cell, cells ordered control
/// pre, control post, treatment pre, treatment post.
pub fn synthetic_log(
    means: [f64; 4],
    sds: [f64; 4],
    counts: [usize; 4],
    rng: &mut dyn RngCore,
) -> Result<ObservationTable, AnalysisError> {
    let cells = [(0u8, 0u8), (1, 0), (0, 1), (1, 1)];
    let mut tab = ObservationTable::default();
    for (j, &(t, i)) in cells.iter().enumerate() {
        let d = Normal::new(means[j], sds[j]).map_err(|e| AnalysisError::Invalid(e.to_string()))?;
        for _ in 0..counts[j] {
            tab.push(t, i, d.sample(rng));
        }
    }
    Ok(tab)
}
