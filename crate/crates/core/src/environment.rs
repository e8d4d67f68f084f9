//! The short-lived high-volume arrival process.
//!
//! Each round a cohort of `k` arms arrives, every arm stays playable for
//! `w + 1` rounds (ages `0..=w`), and the learner plays exactly `n` pulls.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prior::PriorSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("arm pool is empty")]
    EmptyPool,
    #[error("arm {0} is not available this round")]
    UnavailableArm(ArmId),
    #[error("allocation totals {got} pulls, expected {expected}")]
    WrongTotal { got: u64, expected: u64 },
    #[error("invalid environment config: {0}")]
    Invalid(String),
}

/// Globally unique, monotonically assigned arm identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArmId(pub u64);

impl std::fmt::Display for ArmId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Pull counts per arm. Ordered so iteration is deterministic.
pub type Allocation = BTreeMap<ArmId, u64>;

pub fn allocation_total(alloc: &Allocation) -> u64 {
    alloc.values().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardModel {
    #[default]
    Bernoulli,
    /// Reward equals the arm mean exactly.
    PointMass,
}

/// Where arriving cohorts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arrivals {
    /// `k` iid draws from the prior each round.
    #[default]
    Prior,
    /// Fixed cohort means, cycled round after round.
    Scripted { cohorts: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Pulls per round.
    pub n: u64,
    /// Arrivals per round.
    pub k: usize,
    /// Lifetime: an arm born in round `s` is playable in rounds `s..=s + w`.
    pub w: usize,
    /// Number of rounds.
    pub horizon: usize,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub reward_model: RewardModel,
    #[serde(default)]
    pub arrivals: Arrivals,
}

impl EnvConfig {
    pub fn new(n: u64, k: usize, w: usize, horizon: usize) -> Self {
        Self {
            n,
            k,
            w,
            horizon,
            prior: PriorSpec::uniform(),
            reward_model: RewardModel::Bernoulli,
            arrivals: Arrivals::Prior,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.n < 1 {
            return Err(EnvError::Invalid("env.n must be >= 1".into()));
        }
        if self.k < 1 {
            return Err(EnvError::Invalid("env.k must be >= 1".into()));
        }
        if self.w < 1 {
            return Err(EnvError::Invalid("env.w must be >= 1".into()));
        }
        if self.horizon < 1 {
            return Err(EnvError::Invalid("env.horizon must be >= 1".into()));
        }
        self.prior
            .validate()
            .map_err(|e| EnvError::Invalid(format!("env.prior: {e}")))?;
        if let Arrivals::Scripted { cohorts } = &self.arrivals {
            if cohorts.is_empty() {
                return Err(EnvError::Invalid("env.arrivals.cohorts must be non-empty".into()));
            }
            for c in cohorts {
                if c.len() != self.k {
                    return Err(EnvError::Invalid(format!(
                        "env.arrivals.cohorts: every cohort needs k={} arms, got {}",
                        self.k,
                        c.len()
                    )));
                }
                if c.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return Err(EnvError::Invalid("env.arrivals.cohorts: means must lie in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Arrival exponent `ln k / ln n`.
    pub fn rho(&self) -> f64 {
        (self.k as f64).ln() / (self.n as f64).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub id: ArmId,
    pub birth_round: u64,
    /// True mean reward. Only the oracle baseline and the metrics read it.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub birth_round: u64,
    pub arms: Vec<Arm>,
}

impl Cohort {
    pub fn ids(&self) -> Vec<ArmId> {
        self.arms.iter().map(|a| a.id).collect()
    }

    /// Largest true mean in the cohort.
    pub fn max_mean(&self) -> f64 {
        self.arms.iter().map(|a| a.mu).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// The sliding window of available cohorts.
#[derive(Debug, Clone, Default)]
pub struct ArmPool {
    cohorts: VecDeque<Cohort>,
    current_round: u64,
    started: bool,
    next_id: u64,
}

impl ArmPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Round of the most recently arrived cohort (0 before the first arrival).
    pub fn current_round(&self) -> u64 {
        self.current_round
    }

    pub fn cohorts(&self) -> impl Iterator<Item = &Cohort> {
        self.cohorts.iter()
    }

    pub fn cohort(&self, birth_round: u64) -> Option<&Cohort> {
        self.cohorts.iter().find(|c| c.birth_round == birth_round)
    }

    pub fn newest(&self) -> Option<&Cohort> {
        self.cohorts.back()
    }

    pub fn arms(&self) -> impl Iterator<Item = &Arm> {
        self.cohorts.iter().flat_map(|c| c.arms.iter())
    }

    pub fn len(&self) -> usize {
        self.cohorts.iter().map(|c| c.arms.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: ArmId) -> Option<&Arm> {
        // ids increase monotonically, so each cohort covers a contiguous id range
        self.cohorts
            .iter()
            .find(|c| c.arms.first().is_some_and(|a| a.id <= id) && c.arms.last().is_some_and(|a| a.id >= id))
            .and_then(|c| c.arms.iter().find(|a| a.id == id))
    }

    /// Age (rounds since birth) of an available arm.
    pub fn age_of(&self, id: ArmId) -> Option<u64> {
        self.get(id).map(|a| self.current_round - a.birth_round)
    }

    /// Starts the next round: a fresh cohort arrives and cohorts older than
    /// `w` expire.
    pub fn advance_round<R: Rng + ?Sized>(&mut self, config: &EnvConfig, rng: &mut R) {
        let round = self.next_round();
        let means = match &config.arrivals {
            Arrivals::Prior => config.prior.sample_means(config.k, rng),
            Arrivals::Scripted { cohorts } => cohorts[(round % cohorts.len() as u64) as usize].clone(),
        };
        self.push_cohort(round, &means, config.w);
    }

    /// Starts the next round with a cohort of the given means.
    pub fn advance_scripted(&mut self, means: &[f64], w: usize) {
        let round = self.next_round();
        self.push_cohort(round, means, w);
    }

    fn next_round(&self) -> u64 {
        if self.started {
            self.current_round + 1
        } else {
            0
        }
    }

    fn push_cohort(&mut self, round: u64, means: &[f64], w: usize) {
        let arms = means
            .iter()
            .map(|&mu| {
                let id = ArmId(self.next_id);
                self.next_id += 1;
                Arm {
                    id,
                    birth_round: round,
                    mu,
                }
            })
            .collect();
        self.cohorts.push_back(Cohort { birth_round: round, arms });
        self.current_round = round;
        self.started = true;
        while self
            .cohorts
            .front()
            .is_some_and(|c| c.birth_round + (w as u64) < round)
        {
            self.cohorts.pop_front();
        }
    }
}

/// Best available arm by true mean; ties go to the smallest id.
pub fn oracle_best(pool: &ArmPool) -> Result<(&Arm, f64), EnvError> {
    let mut best: Option<&Arm> = None;
    for a in pool.arms() {
        match best {
            Some(b) if a.mu < b.mu || (a.mu == b.mu && a.id > b.id) => {}
            _ => best = Some(a),
        }
    }
    best.map(|a| (a, a.mu)).ok_or(EnvError::EmptyPool)
}

pub fn draw_reward<R: Rng + ?Sized>(arm: &Arm, model: RewardModel, rng: &mut R) -> f64 {
    match model {
        RewardModel::PointMass => arm.mu,
        RewardModel::Bernoulli => {
            if rng.random::<f64>() < arm.mu {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Sufficient statistics of the rewards realized by one arm in one round.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTally {
    pub count: u64,
    pub sum: f64,
}

impl RewardTally {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    pub fn merge(&mut self, other: RewardTally) {
        self.count += other.count;
        self.sum += other.sum;
    }
}

/// Sum of `count` reward draws. Bernoulli sums are drawn as one binomial
/// variate, which has the same law as `count` independent draws.
pub fn draw_reward_sum<R: Rng + ?Sized>(arm: &Arm, count: u64, model: RewardModel, rng: &mut R) -> f64 {
    match model {
        RewardModel::PointMass => arm.mu * count as f64,
        RewardModel::Bernoulli => {
            if count == 0 || arm.mu <= 0.0 {
                0.0
            } else if arm.mu >= 1.0 {
                count as f64
            } else {
                Binomial::new(count, arm.mu).expect("mean in (0,1)").sample(rng) as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    pub pulls: Allocation,
    /// Realized rewards per pulled arm.
    pub rewards: BTreeMap<ArmId, RewardTally>,
    /// True means of the pulled arms, for loss accounting only.
    pub pulled_means: BTreeMap<ArmId, f64>,
    /// Largest true mean among available arms.
    pub oracle_mean: f64,
}

/// Executes an allocation: one reward per pull.
pub fn play<R: Rng + ?Sized>(
    pool: &ArmPool,
    allocation: &Allocation,
    config: &EnvConfig,
    rng: &mut R,
) -> Result<RoundOutcome, EnvError> {
    let total = allocation_total(allocation);
    if total != config.n {
        return Err(EnvError::WrongTotal {
            got: total,
            expected: config.n,
        });
    }
    let (_, oracle_mean) = oracle_best(pool)?;
    let mut rewards = BTreeMap::new();
    let mut pulled_means = BTreeMap::new();
    let mut pulls = Allocation::new();
    for (&id, &count) in allocation {
        let arm = pool.get(id).ok_or(EnvError::UnavailableArm(id))?;
        if count == 0 {
            continue;
        }
        let sum = draw_reward_sum(arm, count, config.reward_model, rng);
        rewards.insert(id, RewardTally { count, sum });
        pulled_means.insert(id, arm.mu);
        pulls.insert(id, count);
    }
    Ok(RoundOutcome {
        round: pool.current_round(),
        pulls,
        rewards,
        pulled_means,
        oracle_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: u64, k: usize, w: usize) -> EnvConfig {
        EnvConfig::new(n, k, w, 10)
    }

    #[test]
    fn first_advance_creates_one_cohort() {
        let mut pool = ArmPool::new();
        pool.advance_round(&cfg(10, 3, 2), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(pool.cohorts().count(), 1);
        assert_eq!(pool.len(), 3);
        assert_eq!(pool.current_round(), 0);
    }

    #[test]
    fn window_keeps_w_plus_one_cohorts() {
        let c = cfg(10, 2, 1);
        let mut pool = ArmPool::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..(c.w + 2) {
            pool.advance_round(&c, &mut rng);
        }
        assert_eq!(pool.cohorts().count(), 2);
        assert_eq!(pool.len(), 4);
        let t = pool.current_round();
        assert!(pool.cohorts().all(|co| co.birth_round + 1 >= t && co.birth_round <= t));
    }

    #[test]
    fn same_seed_same_means() {
        let mut c = cfg(10, 5, 2);
        c.reward_model = RewardModel::PointMass;
        let run = || {
            let mut pool = ArmPool::new();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            for _ in 0..4 {
                pool.advance_round(&c, &mut rng);
            }
            pool.arms().map(|a| a.mu.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn oracle_singleton_and_ties() {
        let mut pool = ArmPool::new();
        pool.advance_scripted(&[0.4], 1);
        let (arm, mu) = oracle_best(&pool).unwrap();
        assert_eq!((arm.id, mu), (ArmId(0), 0.4));

        let mut pool = ArmPool::new();
        pool.advance_scripted(&[0.9, 0.1, 0.9], 1);
        let (arm, mu) = oracle_best(&pool).unwrap();
        assert_eq!((arm.id, mu), (ArmId(0), 0.9));
        assert_eq!(oracle_best(&ArmPool::new()).unwrap_err(), EnvError::EmptyPool);
    }

    #[test]
    fn oracle_matches_linear_scan() {
        let mut c = cfg(10, 1000, 1);
        c.k = 1000;
        let mut pool = ArmPool::new();
        pool.advance_round(&c, &mut ChaCha8Rng::seed_from_u64(5));
        let scan = pool.arms().map(|a| a.mu).fold(0.0, f64::max);
        assert_eq!(oracle_best(&pool).unwrap().1, scan);
    }

    #[test]
    fn reward_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arm = |mu| Arm { id: ArmId(0), birth_round: 0, mu };
        assert_eq!(draw_reward(&arm(0.37), RewardModel::PointMass, &mut rng), 0.37);
        assert_eq!(draw_reward(&arm(0.0), RewardModel::Bernoulli, &mut rng), 0.0);
        let a = arm(0.7);
        let m = (0..100_000)
            .map(|_| draw_reward(&a, RewardModel::Bernoulli, &mut rng))
            .sum::<f64>()
            / 100_000.0;
        assert!((m - 0.7).abs() < 0.01);
    }

    #[test]
    fn binomial_sum_matches_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Arm { id: ArmId(0), birth_round: 0, mu: 0.3 };
        let s: f64 = (0..1000).map(|_| draw_reward_sum(&a, 100, RewardModel::Bernoulli, &mut rng)).sum();
        assert!((s / 100_000.0 - 0.3).abs() < 0.01);
    }

    #[test]
    fn play_checks_total_and_availability() {
        let mut c = cfg(10, 2, 1);
        c.reward_model = RewardModel::PointMass;
        let mut pool = ArmPool::new();
        pool.advance_scripted(&[0.9, 0.1], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let short: Allocation = [(ArmId(0), 9)].into_iter().collect();
        assert_eq!(
            play(&pool, &short, &c, &mut rng).unwrap_err(),
            EnvError::WrongTotal { got: 9, expected: 10 }
        );
        let bad: Allocation = [(ArmId(7), 10)].into_iter().collect();
        assert_eq!(play(&pool, &bad, &c, &mut rng).unwrap_err(), EnvError::UnavailableArm(ArmId(7)));
        let ok: Allocation = [(ArmId(0), 5), (ArmId(1), 5)].into_iter().collect();
        let out = play(&pool, &ok, &c, &mut rng).unwrap();
        assert_eq!(out.oracle_mean, 0.9);
        assert_eq!(out.rewards[&ArmId(1)].count, 5);
    }

    #[test]
    fn expired_arms_are_unavailable() {
        let mut pool = ArmPool::new();
        pool.advance_scripted(&[0.5], 1);
        pool.advance_scripted(&[0.5], 1);
        pool.advance_scripted(&[0.5], 1);
        assert!(pool.get(ArmId(0)).is_none());
        assert_eq!(pool.age_of(ArmId(1)), Some(1));
        assert_eq!(pool.age_of(ArmId(2)), Some(0));
    }
}
