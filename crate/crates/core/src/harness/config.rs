use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batched_bandits::BseOptions;
use crate::environment::EnvConfig;
use crate::grids::{build_grid, AdaptivityPlan, GridKind};
use crate::policies::{
    make_hybrid, InducedPolicy, NoisyPredictor, OracleGreedy, Policy, PolicyError, RandomizedBse, RbseConfig,
    UniformRandom,
};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    /// `rho` defaults to `ln k / ln n`.
    Hybrid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
        #[serde(default)]
        bse: BseOptions,
    },
    InducedBse {
        level: usize,
        #[serde(default)]
        grid: GridKind,
        /// Defaults to `k`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_prime: Option<u64>,
        #[serde(default)]
        bse: BseOptions,
    },
    RandomizedBse {
        #[serde(flatten)]
        rbse: RbseConfig,
        /// Absent means a flat `Beta(1, 1)` prior for every card.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        predictor_noise_sigma: Option<f64>,
    },
    Oracle,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub policy: PolicySpec,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Rounds excluded from averages; defaults to `w`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(env: EnvConfig, policy: PolicySpec) -> Self {
        Self {
            env,
            policy,
            replications: 1,
            base_seed: 0,
            burn_in: None,
            output_path: None,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.env.w)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config {
            field: json_error_field(&e),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every field, and that the policy can be built for `env`.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate().map_err(|e| HarnessError::Config {
            field: field_of(&e.to_string()).unwrap_or("env").to_string(),
            message: e.to_string(),
        })?;
        if self.replications < 1 {
            return Err(HarnessError::Config {
                field: "replications".into(),
                message: "replications must be >= 1".into(),
            });
        }
        if self.burn_in() >= self.env.horizon {
            return Err(HarnessError::Config {
                field: "burn_in".into(),
                message: format!(
                    "burn_in ({}) must be smaller than env.horizon ({})",
                    self.burn_in(),
                    self.env.horizon
                ),
            });
        }
        if let PolicySpec::RandomizedBse {
            predictor_noise_sigma: Some(s),
            ..
        } = &self.policy
        {
            if !(*s >= 0.0) || !s.is_finite() {
                return Err(HarnessError::Config {
                    field: "policy.predictor_noise_sigma".into(),
                    message: format!("predictor_noise_sigma must be finite and >= 0, got {s}"),
                });
            }
        }
        build_policy(&self.policy, &self.env).map_err(|e| HarnessError::Config {
            field: "policy".into(),
            message: e.to_string(),
        })?;
        Ok(())
    }
}

fn field_of(msg: &str) -> Option<&str> {
    msg.split_whitespace()
        .find(|w| w.starts_with("env."))
        .map(|w| w.trim_end_matches(':'))
}

fn json_error_field(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    msg.split('`').nth(1).map(str::to_string).unwrap_or_else(|| "config".into())
}

/// Instantiates a fresh policy for one episode.
pub fn build_policy(spec: &PolicySpec, env: &EnvConfig) -> Result<Box<dyn Policy>, PolicyError> {
    Ok(match spec {
        PolicySpec::Hybrid { rho, bse } => {
            let rho = rho.unwrap_or_else(|| env.rho());
            Box::new(make_hybrid(rho, env.w, env.n, env.k as u64, *bse)?)
        }
        PolicySpec::InducedBse {
            level,
            grid,
            k_prime,
            bse,
        } => {
            let k_prime = k_prime.unwrap_or(env.k as u64);
            if k_prime < 1 || k_prime > env.k as u64 {
                return Err(PolicyError::Invalid(format!(
                    "k_prime must be in 1..={}, got {k_prime}",
                    env.k
                )));
            }
            if *level > env.w {
                return Err(PolicyError::Invalid(format!(
                    "level {level} exceeds the lifetime w={}",
                    env.w
                )));
            }
            let grid = build_grid(*grid, *level, k_prime, env.n)?;
            Box::new(InducedPolicy::new(
                AdaptivityPlan {
                    level: *level,
                    resample_k_prime: k_prime,
                    grid,
                },
                *bse,
            ))
        }
        PolicySpec::RandomizedBse {
            rbse,
            predictor_noise_sigma,
        } => {
            let predictor = predictor_noise_sigma.map(|sigma| Box::new(NoisyPredictor { sigma }) as _);
            Box::new(RandomizedBse::new(*rbse, predictor)?)
        }
        PolicySpec::Oracle => Box::new(OracleGreedy),
        PolicySpec::UniformRandom => Box::new(UniformRandom),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    L,
    K,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<serde_json::Value>,
    pub base: ExperimentConfig,
}

impl SweepSpec {
    /// The base config with one axis value applied.
    pub fn instantiate(&self, value: &serde_json::Value) -> Result<ExperimentConfig, HarnessError> {
        let bad = |what: &str| HarnessError::Config {
            field: "values".into(),
            message: format!("{what} sweep value expected, got {value}"),
        };
        let mut cfg = self.base.clone();
        match self.axis {
            SweepAxis::N => cfg.env.n = value.as_u64().ok_or_else(|| bad("integer"))?,
            SweepAxis::K => cfg.env.k = value.as_u64().ok_or_else(|| bad("integer"))? as usize,
            SweepAxis::L => {
                let l = value.as_u64().ok_or_else(|| bad("integer"))? as usize;
                match &mut cfg.policy {
                    PolicySpec::InducedBse { level, .. } => *level = l,
                    _ => {
                        return Err(HarnessError::Config {
                            field: "axis".into(),
                            message: "axis l needs an induced_bse base policy".into(),
                        })
                    }
                }
            }
            SweepAxis::Policy => {
                cfg.policy = serde_json::from_value(value.clone()).map_err(|e| HarnessError::Config {
                    field: "values".into(),
                    message: e.to_string(),
                })?;
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.values.is_empty() {
            return Err(HarnessError::Config {
                field: "values".into(),
                message: "values must be non-empty".into(),
            });
        }
        for v in &self.values {
            self.instantiate(v)?.validate()?;
        }
        Ok(())
    }
}
