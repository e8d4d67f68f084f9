//! Preset experiments. Each writes one or more CSV files into the output
//! directory and returns their paths.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{bootstrap_did, did_ols, did_z_test, lift_percentages, synthetic_log, CellSamples};
use crate::batched_bandits::BseOptions;
use crate::environment::{Arrivals, EnvConfig};
use crate::grids::{build_grid, hybrid_plan, GridKind};
use crate::metrics::fit_loss_exponent;
use crate::policies::{worst_case_pair, RbseConfig};

use super::config::{ExperimentConfig, PolicySpec};
use super::output::{coefficient_table, fmt_f64, io_err, Table};
use super::runner::{mix64, run_replications};
use super::HarnessError;

pub const SCENARIOS: [&str; 5] = [
    "offline-sim-synthetic",
    "cold-vs-warm",
    "slope-check",
    "worst-case-demo",
    "did-demo",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOptions {
    pub out_dir: PathBuf,
    pub parallelism: usize,
    pub seed: u64,
    /// Overrides each preset's replication count.
    pub replications: Option<usize>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("."),
            parallelism: 1,
            seed: 0,
            replications: None,
        }
    }
}

fn write_table(dir: &Path, name: &str, t: &Table) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let path = dir.join(name);
    std::fs::write(&path, t.to_csv()?).map_err(io_err)?;
    Ok(path)
}

pub fn run_scenario(name: &str, opts: &ScenarioOptions) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = &opts.out_dir;
    match name {
        "offline-sim-synthetic" => {
            let mut p = OfflineSimParams {
                base_seed: opts.seed,
                ..OfflineSimParams::default()
            };
            if let Some(r) = opts.replications {
                p.replications = r;
            }
            let rows = offline_sim_synthetic(&p, opts.parallelism)?;
            Ok(vec![write_table(dir, "offline_sim_synthetic.csv", &offline_table(&rows))?])
        }
        "cold-vs-warm" => {
            let mut p = ColdWarmParams {
                base_seed: opts.seed,
                ..ColdWarmParams::default()
            };
            if let Some(r) = opts.replications {
                p.replications = r;
            }
            let rows = cold_vs_warm(&p, opts.parallelism)?;
            Ok(vec![write_table(dir, "cold_vs_warm.csv", &cold_warm_table(&rows))?])
        }
        "slope-check" => {
            let mut p = SlopeParams {
                base_seed: opts.seed,
                ..SlopeParams::default()
            };
            if let Some(r) = opts.replications {
                p.replications = r;
            }
            let res = slope_check(&p, opts.parallelism)?;
            let (points, fit) = slope_tables(&res);
            Ok(vec![
                write_table(dir, "slope_check_points.csv", &points)?,
                write_table(dir, "slope_check_fit.csv", &fit)?,
            ])
        }
        "worst-case-demo" => {
            let mut p = WorstCaseParams {
                base_seed: opts.seed,
                ..WorstCaseParams::default()
            };
            if let Some(r) = opts.replications {
                p.replications = r;
            }
            let rows = worst_case_demo(&p, opts.parallelism)?;
            Ok(vec![write_table(dir, "worst_case_demo.csv", &worst_case_table(&rows))?])
        }
        "did-demo" => {
            let (fit, tests) = did_demo(opts.seed)?;
            Ok(vec![
                write_table(dir, "did_demo_fit.csv", &fit)?,
                write_table(dir, "did_demo_tests.csv", &tests)?,
            ])
        }
        other => Err(HarnessError::UnknownScenario(other.to_string())),
    }
}

fn cell_seed(base: u64, cell: u64) -> u64 {
    base ^ mix64(cell.wrapping_add(0x5eed))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineSimParams {
    pub ks: Vec<usize>,
    pub ns: Vec<u64>,
    pub levels: Vec<usize>,
    pub w: usize,
    pub horizon: usize,
    pub replications: usize,
    /// The revised geometric grid has no feasible level-3 or level-4 form
    /// for `k = 100, n = 2^11`; the arrival-adaptive grid exists at every
    /// level.
    pub grid: GridKind,
    pub bse: BseOptions,
    pub base_seed: u64,
}

impl Default for OfflineSimParams {
    fn default() -> Self {
        Self {
            ks: vec![100, 200],
            ns: (11..=17).map(|e| 1u64 << e).collect(),
            levels: vec![1, 2, 3, 4],
            w: 5,
            horizon: 500,
            replications: 20,
            grid: GridKind::ArrivalAdaptive,
            bse: BseOptions::default(),
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineRow {
    pub k: usize,
    pub n: u64,
    pub level: usize,
    pub mean_pct_of_oracle: f64,
    pub ci: f64,
    pub per_replication: Vec<f64>,
}

pub fn offline_config(p: &OfflineSimParams, k: usize, n: u64, level: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        EnvConfig::new(n, k, p.w, p.horizon),
        PolicySpec::InducedBse {
            level,
            grid: p.grid,
            k_prime: None,
            bse: p.bse,
        },
    );
    cfg.replications = p.replications;
    cfg.base_seed = seed;
    cfg
}

pub fn offline_sim_synthetic(p: &OfflineSimParams, parallelism: usize) -> Result<Vec<OfflineRow>, HarnessError> {
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &k in &p.ks {
        for &n in &p.ns {
            for &level in &p.levels {
                let cfg = offline_config(p, k, n, level, cell_seed(p.base_seed, cell));
                cell += 1;
                let r = run_replications(&cfg, parallelism)?;
                rows.push(OfflineRow {
                    k,
                    n,
                    level,
                    mean_pct_of_oracle: r.mean_pct_of_oracle,
                    ci: r.pct_ci_halfwidth,
                    per_replication: r.pct_values(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn offline_table(rows: &[OfflineRow]) -> Table {
    let mut t = Table::new(&["k", "n", "level", "mean_pct_of_oracle", "ci"]);
    for r in rows {
        t.push(vec![
            r.k.to_string(),
            r.n.to_string(),
            r.level.to_string(),
            fmt_f64(r.mean_pct_of_oracle),
            fmt_f64(r.ci),
        ]);
    }
    t
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdWarmParams {
    pub k: usize,
    pub n: u64,
    pub w: usize,
    pub horizon: usize,
    pub levels: Vec<usize>,
    pub warm_sigma: f64,
    pub replications: usize,
    pub rbse: RbseConfig,
    pub base_seed: u64,
}

impl Default for ColdWarmParams {
    fn default() -> Self {
        Self {
            k: 50,
            n: 1 << 11,
            w: 5,
            horizon: 200,
            levels: vec![1, 2],
            warm_sigma: 0.05,
            replications: 10,
            rbse: RbseConfig::default(),
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdWarmRow {
    pub level: usize,
    pub prior: String,
    pub epsilon: f64,
    pub mean_pct_of_oracle: f64,
    pub ci: f64,
}

/// The level-`ℓ` Thompson variant explores with probability equal to the
/// exploration share `1 − ε_ℓ` of the level-`ℓ` arrival-adaptive grid.
pub fn cold_vs_warm(p: &ColdWarmParams, parallelism: usize) -> Result<Vec<ColdWarmRow>, HarnessError> {
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for &level in &p.levels {
        let grid = build_grid(GridKind::ArrivalAdaptive, level, p.k as u64, p.n).map_err(crate::policies::PolicyError::from)?;
        let epsilon = 1.0 - grid.fraction(level);
        for (label, sigma) in [("warm", Some(p.warm_sigma)), ("cold", None)] {
            let mut cfg = ExperimentConfig::new(
                EnvConfig::new(p.n, p.k, p.w, p.horizon),
                PolicySpec::RandomizedBse {
                    rbse: RbseConfig { epsilon, ..p.rbse },
                    predictor_noise_sigma: sigma,
                },
            );
            cfg.replications = p.replications;
            cfg.base_seed = cell_seed(p.base_seed, cell);
            cell += 1;
            let r = run_replications(&cfg, parallelism)?;
            rows.push(ColdWarmRow {
                level,
                prior: label.into(),
                epsilon,
                mean_pct_of_oracle: r.mean_pct_of_oracle,
                ci: r.pct_ci_halfwidth,
            });
        }
    }
    Ok(rows)
}

pub fn cold_warm_table(rows: &[ColdWarmRow]) -> Table {
    let mut t = Table::new(&["level", "prior", "epsilon", "mean_pct_of_oracle", "ci"]);
    for r in rows {
        t.push(vec![
            r.level.to_string(),
            r.prior.clone(),
            fmt_f64(r.epsilon),
            fmt_f64(r.mean_pct_of_oracle),
            fmt_f64(r.ci),
        ]);
    }
    t
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeParams {
    pub rho: f64,
    pub w: usize,
    pub ns: Vec<u64>,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
}

impl Default for SlopeParams {
    fn default() -> Self {
        Self {
            rho: 0.5,
            w: 4,
            ns: (10..=16).map(|e| 1u64 << e).collect(),
            horizon: 100,
            replications: 50,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopePoint {
    pub n: u64,
    pub k: usize,
    pub level: usize,
    pub k_prime: u64,
    pub mean_loss: f64,
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeResult {
    pub rho: f64,
    pub w: usize,
    pub points: Vec<SlopePoint>,
    pub fitted_exponent: f64,
    /// `−min(ρ, w/(2(w+1)))`.
    pub theoretical_exponent: f64,
}

pub fn slope_check(p: &SlopeParams, parallelism: usize) -> Result<SlopeResult, HarnessError> {
    let mut points = Vec::new();
    for (cell, &n) in p.ns.iter().enumerate() {
        let k = (n as f64).powf(p.rho).round() as usize;
        let plan = hybrid_plan(p.rho, p.w, n, k as u64).map_err(crate::policies::PolicyError::from)?;
        let mut cfg = ExperimentConfig::new(
            EnvConfig::new(n, k, p.w, p.horizon),
            PolicySpec::Hybrid {
                rho: Some(p.rho),
                bse: BseOptions::default(),
            },
        );
        cfg.replications = p.replications;
        cfg.base_seed = cell_seed(p.base_seed, cell as u64);
        let r = run_replications(&cfg, parallelism)?;
        points.push(SlopePoint {
            n,
            k,
            level: plan.level,
            k_prime: plan.resample_k_prime,
            mean_loss: r.mean_loss,
            ci: r.loss_ci_halfwidth,
        });
    }
    let fitted = fit_loss_exponent(&points.iter().map(|pt| (pt.n as f64, pt.mean_loss)).collect::<Vec<_>>())?;
    let wf = p.w as f64;
    Ok(SlopeResult {
        rho: p.rho,
        w: p.w,
        points,
        fitted_exponent: fitted,
        theoretical_exponent: -p.rho.min(wf / (2.0 * (wf + 1.0))),
    })
}

pub fn slope_tables(r: &SlopeResult) -> (Table, Table) {
    let mut pts = Table::new(&["n", "k", "level", "k_prime", "mean_loss", "ci"]);
    for p in &r.points {
        pts.push(vec![
            p.n.to_string(),
            p.k.to_string(),
            p.level.to_string(),
            p.k_prime.to_string(),
            fmt_f64(p.mean_loss),
            fmt_f64(p.ci),
        ]);
    }
    let mut fit = Table::new(&["rho", "w", "fitted_exponent", "theoretical_exponent"]);
    fit.push(vec![
        fmt_f64(r.rho),
        r.w.to_string(),
        fmt_f64(r.fitted_exponent),
        fmt_f64(r.theoretical_exponent),
    ]);
    (pts, fit)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseParams {
    pub w: usize,
    pub ns: Vec<u64>,
    pub horizon: usize,
    pub replications: usize,
    pub base_seed: u64,
}

impl Default for WorstCaseParams {
    fn default() -> Self {
        Self {
            w: 1,
            ns: (6..=14).step_by(2).map(|e| 1u64 << e).collect(),
            horizon: 200,
            replications: 10,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseRow {
    pub n: u64,
    pub loss_a: f64,
    pub loss_b: f64,
    pub max_loss: f64,
}

pub fn worst_case_demo(p: &WorstCaseParams, parallelism: usize) -> Result<Vec<WorstCaseRow>, HarnessError> {
    let (a, b) = worst_case_pair(p.w);
    let mut rows = Vec::new();
    for (cell, &n) in p.ns.iter().enumerate() {
        let mut losses = [0.0; 2];
        for (slot, stream) in [&a, &b].into_iter().enumerate() {
            let mut env = EnvConfig::new(n, 1, p.w, p.horizon);
            env.arrivals = Arrivals::Scripted {
                cohorts: stream.clone(),
            };
            let mut cfg = ExperimentConfig::new(
                env,
                PolicySpec::Hybrid {
                    rho: None,
                    bse: BseOptions::default(),
                },
            );
            cfg.replications = p.replications;
            cfg.base_seed = cell_seed(p.base_seed, 2 * cell as u64 + slot as u64);
            losses[slot] = run_replications(&cfg, parallelism)?.mean_loss;
        }
        rows.push(WorstCaseRow {
            n,
            loss_a: losses[0],
            loss_b: losses[1],
            max_loss: losses[0].max(losses[1]),
        });
    }
    Ok(rows)
}

pub fn worst_case_table(rows: &[WorstCaseRow]) -> Table {
    let mut t = Table::new(&["n", "loss_a", "loss_b", "max_loss"]);
    for r in rows {
        t.push(vec![r.n.to_string(), fmt_f64(r.loss_a), fmt_f64(r.loss_b), fmt_f64(r.max_loss)]);
    }
    t
}

// ---------------------------------------------------------------------------

/// Synthetic 2×2 log with a treatment effect of +5.9 in the post period,
/// fitted by OLS, the basic Z-test, the bootstrap and the lift.
pub fn did_demo(seed: u64) -> Result<(Table, Table), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = [175.91, 137.06, 175.55, 142.62];
    let sds = [60.0; 4];
    let tab = synthetic_log(means, sds, [5000; 4], &mut rng)?;
    let fit = did_ols(&tab)?;
    let samples = CellSamples::from_table(&tab);
    let basic = did_z_test(&samples.summaries()?)?;
    let boot = bootstrap_did(&samples, 200, 5000, &mut rng)?;
    let lift = lift_percentages(&fit)?;

    let ft = coefficient_table(&fit);
    let mut tt = Table::new(&["test", "delta", "se", "z", "p_one_sided", "lift_pct"]);
    for (name, z) in [("z_test", basic), ("bootstrap", boot)] {
        tt.push(vec![
            name.into(),
            fmt_f64(z.delta),
            fmt_f64(z.se),
            fmt_f64(z.z),
            fmt_f64(z.p_one_sided),
            fmt_f64(lift),
        ]);
    }
    Ok((ft, tt))
}

