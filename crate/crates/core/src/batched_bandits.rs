//! Batched successive elimination (BSE) as a resumable state machine.
//!
//! The machine is driven by alternating [`BseState::next_batch`] and
//! [`BseState::observe`]. Exploration phase `i < ℓ` spreads `⌊ε_i·n⌋` pulls
//! evenly over the survivors `S_i`, then keeps every arm whose empirical
//! mean is within `3·√(ln n / n_i)` of the empirical maximum. Phase `ℓ`
//! commits the remaining budget to a single survivor.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Allocation, ArmId, RewardTally};
use crate::grids::GridSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BseError {
    #[error("resample size k'={k_prime} must be in 1..={available}")]
    BadKPrime { k_prime: usize, available: usize },
    #[error("confidence radius needs at least one pull")]
    ZeroPulls,
    #[error("no batch left to emit (phase {phase} of {level})")]
    PhaseExhausted { phase: usize, level: usize },
    #[error("observed rewards do not match the emitted batch: {0}")]
    RewardMismatch(String),
    #[error("pull counts total {got}, expected {expected}")]
    WrongTotal { got: u64, expected: u64 },
    #[error("invalid BSE input: {0}")]
    Invalid(String),
}

/// How the committed arm is chosen among the final survivors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinalPick {
    /// Smallest id.
    First,
    /// Highest empirical mean, ties to the smallest id.
    #[default]
    EmpiricalBest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BseOptions {
    #[serde(default)]
    pub final_pick: FinalPick,
    /// Pool rewards across phases when computing empirical means. Off means
    /// each phase eliminates on its own pulls only.
    #[serde(default)]
    pub cumulative_means: bool,
}

/// `3 · n_i^{−1/2} · (ln n)^{1/2}`.
pub fn confidence_radius(n_i: u64, n_env: u64) -> Result<f64, BseError> {
    if n_i == 0 {
        return Err(BseError::ZeroPulls);
    }
    if n_env < 2 {
        return Err(BseError::Invalid(format!("n_env must be >= 2, got {n_env}")));
    }
    Ok(3.0 * ((n_env as f64).ln() / n_i as f64).sqrt())
}

#[derive(Debug, Clone)]
struct PendingBatch {
    alloc: Allocation,
    /// Pulls every survivor received at least; `None` for the commit batch
    /// and for batches that carry no elimination.
    per_arm: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct BseState {
    grid: GridSpec,
    options: BseOptions,
    phase: usize,
    survivors: Vec<ArmId>,
    resampled: Vec<ArmId>,
    stats: BTreeMap<ArmId, RewardTally>,
    last_phase: BTreeMap<ArmId, RewardTally>,
    budget_n: u64,
    n_env: u64,
    terminated_early: bool,
    finished: bool,
    committed: Option<ArmId>,
    pending: Option<PendingBatch>,
    warnings: Vec<String>,
}

impl BseState {
    /// Resamples a uniformly random `k′`-subset of `arm_ids` as `S_0`.
    pub fn init<R: Rng + ?Sized>(
        arm_ids: &[ArmId],
        grid: GridSpec,
        k_prime: usize,
        n_env: u64,
        budget_n: u64,
        options: BseOptions,
        rng: &mut R,
    ) -> Result<Self, BseError> {
        if k_prime < 1 || k_prime > arm_ids.len() {
            return Err(BseError::BadKPrime {
                k_prime,
                available: arm_ids.len(),
            });
        }
        if n_env < 2 {
            return Err(BseError::Invalid(format!("n_env must be >= 2, got {n_env}")));
        }
        let mut resampled: Vec<ArmId> = if k_prime == arm_ids.len() {
            arm_ids.to_vec()
        } else {
            sample(rng, arm_ids.len(), k_prime)
                .into_iter()
                .map(|i| arm_ids[i])
                .collect()
        };
        resampled.sort_unstable();
        resampled.dedup();
        if resampled.len() != k_prime {
            return Err(BseError::Invalid("arm ids must be distinct".into()));
        }
        Ok(Self {
            grid,
            options,
            phase: 0,
            survivors: resampled.clone(),
            resampled,
            stats: BTreeMap::new(),
            last_phase: BTreeMap::new(),
            budget_n,
            n_env,
            terminated_early: false,
            finished: false,
            committed: None,
            pending: None,
            warnings: Vec::new(),
        })
    }

    pub fn level(&self) -> usize {
        self.grid.level()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Index of the next batch to emit (or the one awaiting rewards).
    pub fn phase(&self) -> usize {
        self.phase
    }

    pub fn survivors(&self) -> &[ArmId] {
        &self.survivors
    }

    pub fn resampled(&self) -> &[ArmId] {
        &self.resampled
    }

    pub fn stats(&self) -> &BTreeMap<ArmId, RewardTally> {
        &self.stats
    }

    pub fn terminated_early(&self) -> bool {
        self.terminated_early
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn committed(&self) -> Option<ArmId> {
        self.committed
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn budget(&self) -> u64 {
        self.budget_n
    }

    /// Nominal size of the current batch under the grid.
    pub fn nominal_batch_size(&self) -> u64 {
        if self.phase < self.level() {
            self.grid.batch_size(self.phase, self.budget_n)
        } else {
            self.grid.final_batch_size(self.budget_n)
        }
    }

    /// Emits the current phase's batch at its nominal size.
    pub fn next_batch(&mut self) -> Result<Allocation, BseError> {
        let slots = self.nominal_batch_size();
        self.next_batch_with_slots(slots)
    }

    /// Emits the current phase's batch using exactly `slots` pulls.
    ///
    /// Exploration slots are split evenly over the survivors; the first
    /// `slots mod |S_i|` survivors (by id) take one extra pull so that the
    /// batch uses every slot. The commit batch, and every batch after an
    /// early termination, goes to one arm.
    pub fn next_batch_with_slots(&mut self, slots: u64) -> Result<Allocation, BseError> {
        if self.finished || self.pending.is_some() {
            return Err(BseError::PhaseExhausted {
                phase: self.phase,
                level: self.level(),
            });
        }
        let mut alloc = Allocation::new();
        let per_arm;
        if self.phase >= self.level() || self.survivors.len() == 1 {
            let arm = self.commit_arm();
            if slots > 0 {
                alloc.insert(arm, slots);
            }
            per_arm = None;
        } else {
            let m = self.survivors.len() as u64;
            let base = slots / m;
            let extra = slots % m;
            for (idx, &a) in self.survivors.iter().enumerate() {
                let c = base + u64::from((idx as u64) < extra);
                if c > 0 {
                    alloc.insert(a, c);
                }
            }
            if base == 0 {
                self.warnings.push(format!(
                    "phase {}: {} slots over {} survivors gives zero pulls per arm; elimination skipped",
                    self.phase, slots, m
                ));
                per_arm = None;
            } else {
                per_arm = Some(base);
            }
        }
        self.pending = Some(PendingBatch {
            alloc: alloc.clone(),
            per_arm,
        });
        Ok(alloc)
    }

    fn commit_arm(&mut self) -> ArmId {
        if let Some(a) = self.committed {
            return a;
        }
        let arm = if self.survivors.len() == 1 {
            self.survivors[0]
        } else {
            match self.options.final_pick {
                FinalPick::First => self.survivors[0],
                FinalPick::EmpiricalBest => {
                    let means = self.current_means();
                    let mut best = self.survivors[0];
                    let mut best_mean = means.get(&best).copied().unwrap_or(f64::NEG_INFINITY);
                    for &a in &self.survivors[1..] {
                        let m = means.get(&a).copied().unwrap_or(f64::NEG_INFINITY);
                        if m > best_mean {
                            best = a;
                            best_mean = m;
                        }
                    }
                    best
                }
            }
        };
        self.committed = Some(arm);
        arm
    }

    fn current_means(&self) -> BTreeMap<ArmId, f64> {
        let source = if self.options.cumulative_means {
            &self.stats
        } else {
            &self.last_phase
        };
        source
            .iter()
            .filter_map(|(a, t)| t.mean().map(|m| (*a, m)))
            .collect()
    }

    /// Feeds the rewards of the last emitted batch and advances the phase.
    pub fn observe(&mut self, rewards: &BTreeMap<ArmId, RewardTally>) -> Result<(), BseError> {
        let Some(pending) = self.pending.as_ref() else {
            return Err(BseError::RewardMismatch("no batch is awaiting rewards".into()));
        };
        let observed: Vec<(ArmId, u64)> = rewards
            .iter()
            .filter(|(_, t)| t.count > 0)
            .map(|(a, t)| (*a, t.count))
            .collect();
        let expected: Vec<(ArmId, u64)> = pending.alloc.iter().map(|(a, c)| (*a, *c)).collect();
        if observed != expected {
            return Err(BseError::RewardMismatch(format!(
                "expected {expected:?}, got {observed:?}"
            )));
        }
        let per_arm = pending.per_arm;
        self.pending = None;

        let batch: BTreeMap<ArmId, RewardTally> = rewards
            .iter()
            .filter(|(_, t)| t.count > 0)
            .map(|(a, t)| (*a, *t))
            .collect();
        for (a, t) in &batch {
            self.stats.entry(*a).or_default().merge(*t);
        }

        if self.phase >= self.level() {
            self.finished = true;
            return Ok(());
        }
        if !batch.is_empty() {
            self.last_phase = batch;
        }
        if let (Some(n_i), false) = (per_arm, self.terminated_early) {
            if self.survivors.len() >= 2 {
                self.eliminate(n_i)?;
            }
        }
        self.phase += 1;
        if self.survivors.len() == 1 && self.phase < self.level() && !self.terminated_early {
            self.terminated_early = true;
        }
        Ok(())
    }

    fn eliminate(&mut self, n_i: u64) -> Result<(), BseError> {
        let radius = confidence_radius(n_i, self.n_env)?;
        let means = self.current_means();
        let max = self
            .survivors
            .iter()
            .filter_map(|a| means.get(a))
            .fold(f64::NEG_INFINITY, |m, x| m.max(*x));
        self.survivors
            .retain(|a| means.get(a).is_some_and(|m| (m - max).abs() <= radius));
        Ok(())
    }
}

/// Per-pull regret `(1/n)·Σ_a (μ* − μ_a)·N_a`, with `μ*` the largest mean in
/// `mus`.
pub fn bb_regret(
    pull_history: &BTreeMap<ArmId, u64>,
    mus: &BTreeMap<ArmId, f64>,
    budget_n: u64,
) -> Result<f64, BseError> {
    let total: u64 = pull_history.values().sum();
    if total != budget_n || budget_n == 0 {
        return Err(BseError::WrongTotal {
            got: total,
            expected: budget_n,
        });
    }
    let best = mus.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for (a, &c) in pull_history {
        let mu = mus
            .get(a)
            .ok_or_else(|| BseError::Invalid(format!("no mean for arm {a}")))?;
        acc += (best - mu) * c as f64;
    }
    Ok(acc / budget_n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: u64) -> Vec<ArmId> {
        (0..n).map(ArmId).collect()
    }

    fn point_mass(alloc: &Allocation, means: &[f64]) -> BTreeMap<ArmId, RewardTally> {
        alloc
            .iter()
            .map(|(a, c)| {
                (
                    *a,
                    RewardTally {
                        count: *c,
                        sum: means[a.0 as usize] * *c as f64,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn init_full_resample_and_determinism() {
        let g = GridSpec::new(vec![0.1, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = BseState::init(&ids(5), g.clone(), 5, 100, 100, BseOptions::default(), &mut rng).unwrap();
        assert_eq!(s.survivors(), &ids(5)[..]);
        let pick = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            BseState::init(&ids(100), g.clone(), 10, 100, 100, BseOptions::default(), &mut rng)
                .unwrap()
                .survivors()
                .to_vec()
        };
        assert_eq!(pick(11), pick(11));
        assert_eq!(pick(11).len(), 10);
        assert!(matches!(
            BseState::init(&ids(3), g.clone(), 4, 100, 100, BseOptions::default(), &mut rng),
            Err(BseError::BadKPrime { .. })
        ));
        assert!(matches!(
            BseState::init(&ids(3), g, 0, 100, 100, BseOptions::default(), &mut rng),
            Err(BseError::BadKPrime { .. })
        ));
    }

    #[test]
    fn radius_examples() {
        let n_env = 1_000_000u64;
        let ln = (n_env as f64).ln();
        // n_i = 9 ln n would be fractional; check the formula at a real n_i
        let r = confidence_radius(100, n_env).unwrap();
        assert!((r - 3.0 * (ln / 100.0).sqrt()).abs() < 1e-15);
        let r4 = confidence_radius(400, n_env).unwrap();
        assert!((r4 - r / 2.0).abs() < 1e-15);
        assert_eq!(confidence_radius(0, n_env), Err(BseError::ZeroPulls));
        // n_env = e^{k} with 9k pulls gives radius one; pick n_env = 8103 ~ e^9
        let n_env = 8103u64;
        let n_i = (9.0 * (n_env as f64).ln()).round() as u64;
        let r = confidence_radius(n_i, n_env).unwrap();
        assert!((r - (9.0 * (n_env as f64).ln() / n_i as f64).sqrt()).abs() < 1e-12);
        assert!((r - 1.0).abs() < 0.01);
    }

    #[test]
    fn exploration_batch_sizes() {
        let g = GridSpec::new(vec![0.1, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BseState::init(&ids(5), g.clone(), 5, 100, 100, BseOptions::default(), &mut rng).unwrap();
        let b = s.next_batch().unwrap();
        assert!(b.values().all(|c| *c == 2));
        assert_eq!(b.len(), 5);
        assert!(matches!(s.next_batch(), Err(BseError::PhaseExhausted { .. })));

        let mut s = BseState::init(&ids(5), g, 5, 101, 101, BseOptions::default(), &mut rng).unwrap();
        let b = s.next_batch().unwrap();
        s.observe(&point_mass(&b, &[0.5; 5])).unwrap();
        assert_eq!(s.nominal_batch_size(), 91);
        let f = s.next_batch().unwrap();
        assert_eq!(f.values().sum::<u64>(), 91);
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn point_mass_elimination_keeps_best() {
        let means = [0.9, 0.1];
        let g = GridSpec::new(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // n_i = 1000 pulls each, radius = 3 sqrt(ln 4000 / 1000) ~ 0.27 < 0.4
        let mut s = BseState::init(&ids(2), g, 2, 4000, 4000, BseOptions::default(), &mut rng).unwrap();
        let b = s.next_batch().unwrap();
        assert!(confidence_radius(1000, 4000).unwrap() < 0.4);
        s.observe(&point_mass(&b, &means)).unwrap();
        assert_eq!(s.survivors(), &[ArmId(0)]);
        let f = s.next_batch().unwrap();
        assert_eq!(f.keys().copied().collect::<Vec<_>>(), vec![ArmId(0)]);
    }

    #[test]
    fn identical_means_never_eliminate() {
        let g = GridSpec::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BseState::init(&ids(4), g, 4, 10_000, 10_000, BseOptions::default(), &mut rng).unwrap();
        for _ in 0..2 {
            let b = s.next_batch().unwrap();
            s.observe(&point_mass(&b, &[0.3; 4])).unwrap();
            assert_eq!(s.survivors().len(), 4);
        }
    }

    #[test]
    fn singleton_terminates_early_and_absorbs_batches() {
        let g = GridSpec::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let means = [1.0, 0.0, 0.0];
        let mut s = BseState::init(&ids(3), g, 3, 30_000, 30_000, BseOptions::default(), &mut rng).unwrap();
        let b = s.next_batch().unwrap();
        s.observe(&point_mass(&b, &means)).unwrap();
        assert!(s.terminated_early());
        let b = s.next_batch().unwrap();
        assert_eq!(b, [(ArmId(0), 9000)].into_iter().collect());
        s.observe(&point_mass(&b, &means)).unwrap();
        assert_eq!(s.survivors(), &[ArmId(0)]);
        let f = s.next_batch().unwrap();
        assert_eq!(f[&ArmId(0)], 15_000);
        s.observe(&point_mass(&f, &means)).unwrap();
        assert!(s.is_finished());
        let total: u64 = s.stats().values().map(|t| t.count).sum();
        assert_eq!(total, 30_000);
    }

    #[test]
    fn zero_per_arm_phase_is_skipped_with_warning() {
        let g = GridSpec::new(vec![0.01, 0.99]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BseState::init(&ids(5), g, 5, 100, 100, BseOptions::default(), &mut rng).unwrap();
        let b = s.next_batch().unwrap();
        assert_eq!(b.values().sum::<u64>(), 1);
        s.observe(&point_mass(&b, &[0.1, 0.2, 0.3, 0.4, 0.5])).unwrap();
        assert_eq!(s.warnings().len(), 1);
        assert_eq!(s.survivors().len(), 5);
    }

    #[test]
    fn reward_mismatch_is_rejected() {
        let g = GridSpec::new(vec![0.1, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = BseState::init(&ids(2), g, 2, 100, 100, BseOptions::default(), &mut rng).unwrap();
        let _ = s.next_batch().unwrap();
        let wrong: BTreeMap<ArmId, RewardTally> =
            [(ArmId(0), RewardTally { count: 3, sum: 1.0 })].into_iter().collect();
        assert!(matches!(s.observe(&wrong), Err(BseError::RewardMismatch(_))));
    }

    #[test]
    fn final_pick_first() {
        let g = GridSpec::new(vec![0.1, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = BseOptions {
            final_pick: FinalPick::First,
            cumulative_means: false,
        };
        let mut s = BseState::init(&ids(3), g, 3, 30, 30, opts, &mut rng).unwrap();
        let b = s.next_batch().unwrap();
        s.observe(&point_mass(&b, &[0.2, 0.3, 0.4])).unwrap();
        assert_eq!(s.next_batch().unwrap().keys().next(), Some(&ArmId(0)));
    }

    #[test]
    fn regret_examples() {
        let mus: BTreeMap<ArmId, f64> = [(ArmId(0), 0.9), (ArmId(1), 0.1)].into_iter().collect();
        let all_best: BTreeMap<ArmId, u64> = [(ArmId(0), 10)].into_iter().collect();
        assert_eq!(bb_regret(&all_best, &mus, 10).unwrap(), 0.0);
        let split: BTreeMap<ArmId, u64> = [(ArmId(0), 7), (ArmId(1), 3)].into_iter().collect();
        assert!((bb_regret(&split, &mus, 10).unwrap() - 0.24).abs() < 1e-12);
        let same: BTreeMap<ArmId, f64> = (0..4).map(|i| (ArmId(i), 0.5)).collect();
        let uniform: BTreeMap<ArmId, u64> = (0..4).map(|i| (ArmId(i), 5)).collect();
        assert_eq!(bb_regret(&uniform, &same, 20).unwrap(), 0.0);
        assert!(matches!(bb_regret(&split, &mus, 11), Err(BseError::WrongTotal { .. })));
    }
}
