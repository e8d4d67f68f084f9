//! Experiment orchestration: JSON configs, seeded replications, sweeps,
//! scenario presets and CSV output.

pub mod config;
pub mod output;
pub mod runner;
pub mod scenarios;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::environment::EnvError;
use crate::metrics::MetricsError;
use crate::policies::PolicyError;

pub use config::{build_policy, ExperimentConfig, PolicySpec, SweepAxis, SweepSpec};
pub use output::{coefficient_table, fmt_f64, round_table, summary_table, z_table, Table};
pub use runner::{mix64, replication_seed, run_episode, run_replications, EpisodeOutput, Report};
pub use scenarios::{run_scenario, ScenarioOptions, SCENARIOS};

/// Environment variable that overrides `base_seed`.
pub const SEED_ENV: &str = "SLHVB_SEED";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid {field}: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("unknown scenario {0:?}; expected one of {SCENARIOS:?}")]
    UnknownScenario(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// One replication-aggregated point of a sweep.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<Table, HarnessError> {
    spec.validate()?;
    let axis = serde_json::to_value(spec.axis)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let mut t = Table::new(&[axis.as_str(), "mean_loss", "ci", "mean_pct_of_oracle", "pct_ci"]);
    for v in &spec.values {
        let cfg = spec.instantiate(v)?;
        let r = run_replications(&cfg, parallelism)?;
        let label = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Object(o) => o
                .get("kind")
                .and_then(|k| k.as_str())
                .map(str::to_string)
                .unwrap_or_else(|| v.to_string()),
            _ => v.to_string(),
        };
        t.push(vec![
            label,
            fmt_f64(r.mean_loss),
            fmt_f64(r.loss_ci_halfwidth),
            fmt_f64(r.mean_pct_of_oracle),
            fmt_f64(r.pct_ci_halfwidth),
        ]);
    }
    Ok(t)
}
