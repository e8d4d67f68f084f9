use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{play, ArmPool};
use crate::metrics::{episode_mean_loss, mean_and_ci, pct_of_oracle, round_log, EpisodeSummary, RoundLog};

use super::config::{build_policy, ExperimentConfig};
use super::HarnessError;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn replication_seed(base_seed: u64, index: u64) -> u64 {
    base_seed ^ mix64(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutput {
    pub summary: EpisodeSummary,
    pub logs: Vec<RoundLog>,
}

/// Runs one replication: advance, allocate, play, observe, log.
pub fn run_episode(config: &ExperimentConfig, index: u64) -> Result<EpisodeOutput, HarnessError> {
    config.validate()?;
    run_episode_unchecked(config, index, &config.digest())
}

fn run_episode_unchecked(config: &ExperimentConfig, index: u64, digest: &str) -> Result<EpisodeOutput, HarnessError> {
    let env = &config.env;
    let seed = replication_seed(config.base_seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = build_policy(&config.policy, env)?;
    let mut pool = ArmPool::new();
    let mut logs = Vec::with_capacity(env.horizon);
    for _ in 0..env.horizon {
        pool.advance_round(env, &mut rng);
        let alloc = policy.allocate(&pool, env.n, &mut rng)?;
        let outcome = play(&pool, &alloc, env, &mut rng)?;
        policy.observe(&pool, &outcome)?;
        logs.push(round_log(&pool, &outcome, env.n, env.w));
    }
    let burn_in = config.burn_in();
    let summary = EpisodeSummary {
        config_digest: digest.to_string(),
        replication: index,
        seed,
        rounds: logs.len(),
        mean_loss: episode_mean_loss(&logs, burn_in)?,
        loss_ci_halfwidth: f64::NAN,
        pct_of_oracle: pct_of_oracle(&logs, burn_in)?,
    };
    Ok(EpisodeOutput { summary, logs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_digest: String,
    pub replications: usize,
    pub mean_loss: f64,
    pub loss_ci_halfwidth: f64,
    pub mean_pct_of_oracle: f64,
    pub pct_ci_halfwidth: f64,
    pub episodes: Vec<EpisodeOutput>,
}

impl Report {
    pub fn pct_values(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.summary.pct_of_oracle).collect()
    }

    pub fn loss_values(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.summary.mean_loss).collect()
    }
}

/// Runs every replication on a pool of `parallelism` workers. Results are
/// ordered by replication index, so the report does not depend on
/// `parallelism`.
pub fn run_replications(config: &ExperimentConfig, parallelism: usize) -> Result<Report, HarnessError> {
    config.validate()?;
    if parallelism < 1 {
        return Err(HarnessError::Config {
            field: "parallelism".into(),
            message: "parallelism must be >= 1".into(),
        });
    }
    let digest = config.digest();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| HarnessError::Io(e.to_string()))?;
    let episodes: Vec<EpisodeOutput> = pool.install(|| {
        (0..config.replications as u64)
            .into_par_iter()
            .map(|i| run_episode_unchecked(config, i, &digest))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let losses: Vec<f64> = episodes.iter().map(|e| e.summary.mean_loss).collect();
    let pcts: Vec<f64> = episodes.iter().map(|e| e.summary.pct_of_oracle).collect();
    let (mean_loss, loss_ci) = mean_and_ci(&losses)?;
    let (mean_pct, pct_ci) = mean_and_ci(&pcts)?;
    Ok(Report {
        config_digest: digest,
        replications: episodes.len(),
        mean_loss,
        loss_ci_halfwidth: loss_ci,
        mean_pct_of_oracle: mean_pct,
        pct_ci_halfwidth: pct_ci,
        episodes,
    })
}
