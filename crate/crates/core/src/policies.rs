//! Allocation policies for the short-lived high-volume process.
//!
//! * [`InducedPolicy`] pipelines one BSE instance per cohort: the cohort of
//!   age `j` runs BSE phase `j` and receives the `j`-th grid share of the
//!   round's `n` pulls.
//! * [`make_hybrid`] picks `(ℓ, k′)` from the arrival exponent and lifetime
//!   and builds the induced policy on the revised geometric grid.
//! * [`RandomizedBse`] is the Thompson-sampling variant with a forced
//!   exploration queue for under-explored cards.
//! * [`OracleGreedy`] and [`UniformRandom`] are reference baselines.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use rand_distr::{Beta, Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batched_bandits::{BseError, BseOptions, BseState};
use crate::environment::{oracle_best, Allocation, Arm, ArmId, ArmPool, EnvError, RoundOutcome};
use crate::grids::{hybrid_plan, AdaptivityPlan, GridError};
use crate::prior::{fit_beta_moments, BetaParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Bse(#[from] BseError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("no cards available")]
    NoCards,
    #[error("invalid policy: {0}")]
    Invalid(String),
}

/// A per-episode allocation policy.
///
/// `allocate` is called once per round after the new cohort has arrived and
/// must return exactly `n` pulls over available arms. Apart from
/// [`OracleGreedy`], policies read only arm ids and birth rounds from the
/// pool, never the true means.
pub trait Policy: Send {
    fn name(&self) -> String;

    fn allocate(&mut self, pool: &ArmPool, n: u64, rng: &mut dyn RngCore) -> Result<Allocation, PolicyError>;

    fn observe(&mut self, pool: &ArmPool, outcome: &RoundOutcome) -> Result<(), PolicyError>;
}

// ---------------------------------------------------------------------------
// Induced policy

#[derive(Debug, Clone)]
pub struct InducedPolicy {
    plan: AdaptivityPlan,
    options: BseOptions,
    cohorts: BTreeMap<u64, BseState>,
    label: String,
}

impl InducedPolicy {
    pub fn new(plan: AdaptivityPlan, options: BseOptions) -> Self {
        let label = format!("induced_bse(l={}, k'={})", plan.level, plan.resample_k_prime);
        Self {
            plan,
            options,
            cohorts: BTreeMap::new(),
            label,
        }
    }

    pub fn plan(&self) -> &AdaptivityPlan {
        &self.plan
    }

    /// Live per-cohort BSE states keyed by birth round.
    pub fn cohort_states(&self) -> &BTreeMap<u64, BseState> {
        &self.cohorts
    }

    /// Slot shares per live age. With every age `0..=ℓ` live, age `j < ℓ`
    /// gets `⌊ε_j·n⌋` and age `ℓ` the remainder. During warm-up the shares
    /// of absent ages are spread over live ones in proportion to their grid
    /// weights; the oldest live age absorbs rounding.
    fn slot_shares(&self, ages: &[usize], n: u64) -> Vec<u64> {
        let grid = &self.plan.grid;
        let level = grid.level();
        let full = ages.len() == level + 1;
        let weight: f64 = ages.iter().map(|&j| grid.fraction(j)).sum();
        let mut shares = Vec::with_capacity(ages.len());
        let oldest = *ages.iter().max().expect("at least one live cohort");
        let mut used = 0u64;
        for &j in ages {
            if j == oldest {
                shares.push(0);
                continue;
            }
            let s = if full {
                grid.batch_size(j, n)
            } else {
                (n as f64 * grid.fraction(j) / weight).floor() as u64
            };
            used += s;
            shares.push(s);
        }
        let idx = ages.iter().position(|&j| j == oldest).unwrap();
        shares[idx] = n - used;
        shares
    }

    /// One round of the pipeline: registers the newest cohort, retires
    /// cohorts older than `ℓ`, and merges every live cohort's batch.
    pub fn induced_allocate(
        &mut self,
        pool: &ArmPool,
        n: u64,
        rng: &mut dyn RngCore,
    ) -> Result<Allocation, PolicyError> {
        let now = pool.current_round();
        let level = self.plan.level as u64;
        if let Some(newest) = pool.newest() {
            if !self.cohorts.contains_key(&newest.birth_round) {
                let ids = newest.ids();
                let k_prime = (self.plan.resample_k_prime as usize).min(ids.len());
                let state = BseState::init(
                    &ids,
                    self.plan.grid.clone(),
                    k_prime,
                    n.max(2),
                    n,
                    self.options,
                    rng,
                )?;
                self.cohorts.insert(newest.birth_round, state);
            }
        }
        self.cohorts
            .retain(|&birth, _| birth + level >= now && pool.cohort(birth).is_some());
        if self.cohorts.is_empty() {
            return Err(PolicyError::NoCards);
        }
        let ages: Vec<usize> = self.cohorts.keys().map(|b| (now - b) as usize).collect();
        let shares = self.slot_shares(&ages, n);
        let mut alloc = Allocation::new();
        for ((&birth, state), slots) in self.cohorts.iter_mut().zip(shares) {
            let age = (now - birth) as usize;
            if state.phase() != age {
                return Err(PolicyError::Invalid(format!(
                    "cohort born {birth} is in phase {} at age {age}",
                    state.phase()
                )));
            }
            for (a, c) in state.next_batch_with_slots(slots)? {
                *alloc.entry(a).or_insert(0) += c;
            }
        }
        Ok(alloc)
    }

    /// Routes each cohort's realized rewards back to its BSE state.
    pub fn induced_observe(&mut self, pool: &ArmPool, outcome: &RoundOutcome) -> Result<(), PolicyError> {
        let mut by_cohort: BTreeMap<u64, BTreeMap<ArmId, _>> = BTreeMap::new();
        for (id, tally) in &outcome.rewards {
            let arm = pool.get(*id).ok_or(EnvError::UnavailableArm(*id))?;
            by_cohort.entry(arm.birth_round).or_default().insert(*id, *tally);
        }
        let empty = BTreeMap::new();
        for (birth, state) in self.cohorts.iter_mut() {
            state.observe(by_cohort.get(birth).unwrap_or(&empty))?;
        }
        let level = self.plan.level as u64;
        let now = outcome.round;
        self.cohorts
            .retain(|&birth, s| !s.is_finished() && birth + level > now);
        Ok(())
    }
}

impl Policy for InducedPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn allocate(&mut self, pool: &ArmPool, n: u64, rng: &mut dyn RngCore) -> Result<Allocation, PolicyError> {
        self.induced_allocate(pool, n, rng)
    }

    fn observe(&mut self, pool: &ArmPool, outcome: &RoundOutcome) -> Result<(), PolicyError> {
        self.induced_observe(pool, outcome)
    }
}

/// Hybrid policy: the induced BSE policy at the `(ℓ, k′)` chosen by
/// [`hybrid_plan`].
pub fn make_hybrid(rho: f64, w: usize, n: u64, k: u64, options: BseOptions) -> Result<InducedPolicy, PolicyError> {
    let plan = hybrid_plan(rho, w, n, k)?;
    let mut p = InducedPolicy::new(plan, options);
    p.label = format!("hybrid(rho={rho:.4}, l={}, k'={})", p.plan.level, p.plan.resample_k_prime);
    Ok(p)
}

// ---------------------------------------------------------------------------
// Randomized BSE (Thompson sampling with forced exploration)

/// Source of per-card predicted means used to fit a Beta prior.
pub trait Predictor: Send + Sync {
    fn predict(&self, card: &Arm, m: usize, rng: &mut dyn RngCore) -> Vec<f64>;
}

/// Predicts `μ + N(0, σ²)` clamped into `(0, 1)`.
#[derive(Debug, Clone, Copy)]
pub struct NoisyPredictor {
    pub sigma: f64,
}

impl Predictor for NoisyPredictor {
    fn predict(&self, card: &Arm, m: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let noise = Normal::new(0.0, self.sigma.max(0.0)).expect("finite sigma");
        (0..m)
            .map(|_| (card.mu + noise.sample(rng)).clamp(1e-6, 1.0 - 1e-6))
            .collect()
    }
}

/// Always predicts the same value.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub f64);

impl Predictor for ConstantPredictor {
    fn predict(&self, _card: &Arm, m: usize, _rng: &mut dyn RngCore) -> Vec<f64> {
        vec![self.0; m]
    }
}

/// Fits a Beta prior to predictions by the method of moments, using the
/// unbiased sample variance.
pub fn set_prior(predictions: &[f64]) -> Result<BetaParams, crate::prior::PriorError> {
    let m = predictions.len();
    if m < 2 {
        return Err(crate::prior::PriorError::InfeasibleMoments {
            mean: predictions.first().copied().unwrap_or(f64::NAN),
            variance: 0.0,
        });
    }
    let mean = predictions.iter().sum::<f64>() / m as f64;
    let var = predictions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    fit_beta_moments(mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbseConfig {
    /// Probability a slot is served from the under-explored queue.
    pub epsilon: f64,
    /// Cards with `α + β > θ` count as well explored.
    pub theta: f64,
    /// Predictions per new card when fitting its prior.
    pub m: usize,
    /// Cards requested per simulated user.
    pub request_size: usize,
}

impl Default for RbseConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            theta: 100.0,
            m: 500,
            request_size: 50,
        }
    }
}

impl RbseConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(PolicyError::Invalid(format!("epsilon must be in [0,1], got {}", self.epsilon)));
        }
        if !(self.theta >= 0.0) {
            return Err(PolicyError::Invalid(format!("theta must be >= 0, got {}", self.theta)));
        }
        if self.m < 2 {
            return Err(PolicyError::Invalid(format!("m must be >= 2, got {}", self.m)));
        }
        if self.request_size < 1 {
            return Err(PolicyError::Invalid("request_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Queue {
    WellExplored,
    UnderExplored,
}

/// One served slot: the card and the queue it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServedSlot {
    pub card: ArmId,
    pub queue: Queue,
    /// Whether the slot's coin asked for exploration.
    pub explore_flip: bool,
}

pub struct RandomizedBse {
    config: RbseConfig,
    posteriors: BTreeMap<ArmId, BetaParams>,
    predictor: Option<Box<dyn Predictor>>,
    pending: BTreeMap<ArmId, (u64, f64)>,
    warnings: Vec<String>,
}

impl RandomizedBse {
    /// `predictor = None` gives every new card the flat prior `Beta(1, 1)`.
    pub fn new(config: RbseConfig, predictor: Option<Box<dyn Predictor>>) -> Result<Self, PolicyError> {
        config.validate()?;
        Ok(Self {
            config,
            posteriors: BTreeMap::new(),
            predictor,
            pending: BTreeMap::new(),
            warnings: Vec::new(),
        })
    }

    pub fn posteriors(&self) -> &BTreeMap<ArmId, BetaParams> {
        &self.posteriors
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// New cards get fitted priors, expired cards are dropped, and every
    /// other card absorbs its interactions `(pulls, successes)`.
    pub fn begin_round(
        &mut self,
        new_cards: &[Arm],
        expired: &[ArmId],
        interactions: &BTreeMap<ArmId, (u64, f64)>,
        rng: &mut dyn RngCore,
    ) {
        for id in expired {
            self.posteriors.remove(id);
        }
        for (id, &(pulls, successes)) in interactions {
            if let Some(p) = self.posteriors.get_mut(id) {
                p.alpha += successes;
                p.beta += pulls as f64 - successes;
            }
        }
        for card in new_cards {
            let prior = match &self.predictor {
                None => BetaParams::flat(),
                Some(pred) => {
                    let preds = pred.predict(card, self.config.m, rng);
                    match set_prior(&preds) {
                        Ok(b) => b,
                        Err(e) => {
                            self.warnings
                                .push(format!("card {}: {e}; using Beta(1, 1)", card.id));
                            BetaParams::flat()
                        }
                    }
                }
            };
            self.posteriors.insert(card.id, prior);
        }
    }

    /// Serves one request of `slots` distinct cards.
    pub fn allocate_request(&self, slots: usize, rng: &mut dyn RngCore) -> Result<Vec<ServedSlot>, PolicyError> {
        if self.posteriors.is_empty() {
            return Err(PolicyError::NoCards);
        }
        let mut well = Vec::new();
        let mut under = Vec::new();
        for (&id, p) in &self.posteriors {
            let score = Beta::new(p.alpha, p.beta)
                .map_err(|e| PolicyError::Invalid(format!("posterior of {id}: {e}")))?
                .sample(rng);
            if p.alpha + p.beta > self.config.theta {
                well.push((score, id));
            } else {
                under.push((score, id));
            }
        }
        let by_score_desc = |a: &(f64, ArmId), b: &(f64, ArmId)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        well.sort_by(by_score_desc);
        under.sort_by(by_score_desc);
        let (mut wi, mut ui) = (0usize, 0usize);
        let mut out = Vec::with_capacity(slots);
        for _ in 0..slots.min(well.len() + under.len()) {
            let explore = rng.random::<f64>() < self.config.epsilon;
            let from_under = if explore { ui < under.len() } else { wi >= well.len() };
            if from_under {
                if ui >= under.len() {
                    break;
                }
                out.push(ServedSlot {
                    card: under[ui].1,
                    queue: Queue::UnderExplored,
                    explore_flip: explore,
                });
                ui += 1;
            } else {
                out.push(ServedSlot {
                    card: well[wi].1,
                    queue: Queue::WellExplored,
                    explore_flip: explore,
                });
                wi += 1;
            }
        }
        Ok(out)
    }

    /// Card ids only, in serving order.
    pub fn rbse_allocate(&self, slots: usize, rng: &mut dyn RngCore) -> Result<Vec<ArmId>, PolicyError> {
        Ok(self.allocate_request(slots, rng)?.into_iter().map(|s| s.card).collect())
    }
}

impl Policy for RandomizedBse {
    fn name(&self) -> String {
        format!(
            "randomized_bse(eps={}, theta={}, prior={})",
            self.config.epsilon,
            self.config.theta,
            if self.predictor.is_some() { "warm" } else { "cold" }
        )
    }

    fn allocate(&mut self, pool: &ArmPool, n: u64, rng: &mut dyn RngCore) -> Result<Allocation, PolicyError> {
        let new_cards: Vec<Arm> = pool
            .arms()
            .filter(|a| !self.posteriors.contains_key(&a.id))
            .cloned()
            .collect();
        let expired: Vec<ArmId> = self
            .posteriors
            .keys()
            .filter(|id| pool.get(**id).is_none())
            .copied()
            .collect();
        let interactions = std::mem::take(&mut self.pending);
        self.begin_round(&new_cards, &expired, &interactions, rng);

        let available = self.posteriors.len();
        if available == 0 {
            return Err(PolicyError::NoCards);
        }
        let request = self.config.request_size.min(available) as u64;
        let mut alloc = Allocation::new();
        let mut remaining = n;
        while remaining > 0 {
            let slots = remaining.min(request) as usize;
            let served = self.allocate_request(slots, rng)?;
            if served.len() != slots {
                return Err(PolicyError::Invalid("request could not be filled".into()));
            }
            for s in served {
                *alloc.entry(s.card).or_insert(0) += 1;
            }
            remaining -= slots as u64;
        }
        Ok(alloc)
    }

    fn observe(&mut self, _pool: &ArmPool, outcome: &RoundOutcome) -> Result<(), PolicyError> {
        for (id, t) in &outcome.rewards {
            let e = self.pending.entry(*id).or_insert((0, 0.0));
            e.0 += t.count;
            e.1 += t.sum;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Baselines

/// Puts every pull on the best available arm by true mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleGreedy;

pub fn baseline_oracle_greedy(pool: &ArmPool, n: u64) -> Result<Allocation, PolicyError> {
    let (arm, _) = oracle_best(pool)?;
    Ok([(arm.id, n)].into_iter().collect())
}

impl Policy for OracleGreedy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn allocate(&mut self, pool: &ArmPool, n: u64, _rng: &mut dyn RngCore) -> Result<Allocation, PolicyError> {
        baseline_oracle_greedy(pool, n)
    }

    fn observe(&mut self, _pool: &ArmPool, _outcome: &RoundOutcome) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// Each pull lands on a uniformly random available arm.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

pub fn baseline_uniform_random(pool: &ArmPool, n: u64, rng: &mut dyn RngCore) -> Result<Allocation, PolicyError> {
    let ids: Vec<ArmId> = pool.arms().map(|a| a.id).collect();
    if ids.is_empty() {
        return Err(PolicyError::NoCards);
    }
    // multinomial(n; uniform) via sequential conditional binomials
    let mut alloc = Allocation::new();
    let mut remaining = n;
    let total = ids.len();
    for (i, id) in ids.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let left = (total - i) as f64;
        let c = if i + 1 == total {
            remaining
        } else {
            Binomial::new(remaining, 1.0 / left)
                .expect("valid probability")
                .sample(rng)
        };
        if c > 0 {
            alloc.insert(*id, c);
            remaining -= c;
        }
    }
    Ok(alloc)
}

impl Policy for UniformRandom {
    fn name(&self) -> String {
        "uniform_random".into()
    }

    fn allocate(&mut self, pool: &ArmPool, n: u64, rng: &mut dyn RngCore) -> Result<Allocation, PolicyError> {
        baseline_uniform_random(pool, n, rng)
    }

    fn observe(&mut self, _pool: &ArmPool, _outcome: &RoundOutcome) -> Result<(), PolicyError> {
        Ok(())
    }
}

/// The two single-arm streams that no policy can tell apart after one
/// round: both open with a mean-1/2 arm, then (A) brings a mean-1 arm and
/// (B) a mean-0 arm. The remaining `w − 1` cohorts of each cycle are
/// mean-1/2 fillers so that one cycle has fully expired before the next
/// begins.
pub fn worst_case_pair(w: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let cycle = w.max(1) + 1;
    let build = |second: f64| {
        (0..cycle)
            .map(|i| vec![if i == 1 { second } else { 0.5 }])
            .collect::<Vec<_>>()
    };
    (build(1.0), build(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{play, EnvConfig, RewardModel};
    use crate::grids::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn steady_state_slot_shares() {
        let plan = AdaptivityPlan {
            level: 2,
            resample_k_prime: 5,
            grid: GridSpec::new(vec![0.01, 0.1, 0.89]).unwrap(),
        };
        let p = InducedPolicy::new(plan, BseOptions::default());
        assert_eq!(p.slot_shares(&[0, 1, 2], 1000), vec![10, 100, 890]);
        // warm-up: ages 0 and 1 only
        let s = p.slot_shares(&[0, 1], 1000);
        assert_eq!(s.iter().sum::<u64>(), 1000);
        assert_eq!(s[0], (1000.0 * 0.01 / 0.11f64).floor() as u64);
    }

    #[test]
    fn warm_up_single_cohort_gets_everything() {
        let plan = AdaptivityPlan {
            level: 1,
            resample_k_prime: 4,
            grid: GridSpec::new(vec![0.2, 0.8]).unwrap(),
        };
        let mut p = InducedPolicy::new(plan, BseOptions::default());
        let mut pool = ArmPool::new();
        pool.advance_scripted(&[0.1, 0.2, 0.3, 0.4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = p.induced_allocate(&pool, 100, &mut rng).unwrap();
        assert_eq!(a.values().sum::<u64>(), 100);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn phases_advance_and_cohorts_retire() {
        let plan = AdaptivityPlan {
            level: 1,
            resample_k_prime: 2,
            grid: GridSpec::new(vec![0.5, 0.5]).unwrap(),
        };
        let mut cfg = EnvConfig::new(1000, 2, 3, 10);
        cfg.reward_model = RewardModel::PointMass;
        let mut p = InducedPolicy::new(plan, BseOptions::default());
        let mut pool = ArmPool::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..4 {
            pool.advance_round(&cfg, &mut rng);
            let alloc = p.induced_allocate(&pool, cfg.n, &mut rng).unwrap();
            let out = play(&pool, &alloc, &cfg, &mut rng).unwrap();
            p.induced_observe(&pool, &out).unwrap();
            let now = pool.current_round();
            assert_eq!(p.cohort_states()[&now].phase(), 1);
            assert!(p.cohort_states().keys().all(|b| *b == now));
        }
    }

    #[test]
    fn hybrid_examples() {
        let n = 1_000_000u64;
        let k = |rho: f64| (n as f64).powf(rho).round() as u64;
        let h = make_hybrid(0.1, 3, n, k(0.1), BseOptions::default()).unwrap();
        assert_eq!((h.plan().level, h.plan().resample_k_prime), (1, k(0.1)));
        let h = make_hybrid(0.6, 2, n, k(0.6), BseOptions::default()).unwrap();
        assert_eq!((h.plan().level, h.plan().resample_k_prime), (2, 100));
        let h = make_hybrid(0.55, 1, n, k(0.55), BseOptions::default()).unwrap();
        assert_eq!((h.plan().level, h.plan().resample_k_prime), (1, 32));
    }

    fn arm(id: u64, mu: f64) -> Arm {
        Arm { id: ArmId(id), birth_round: 0, mu }
    }

    #[test]
    fn conjugate_update() {
        let mut r = RandomizedBse::new(RbseConfig::default(), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        r.begin_round(&[arm(0, 0.5)], &[], &BTreeMap::new(), &mut rng);
        r.posteriors.insert(ArmId(0), BetaParams { alpha: 2.0, beta: 2.0 });
        r.begin_round(&[], &[], &BTreeMap::new(), &mut rng);
        assert_eq!(r.posteriors()[&ArmId(0)], BetaParams { alpha: 2.0, beta: 2.0 });
        let inter: BTreeMap<ArmId, (u64, f64)> = [(ArmId(0), (10, 7.0))].into_iter().collect();
        r.begin_round(&[], &[], &inter, &mut rng);
        assert_eq!(r.posteriors()[&ArmId(0)], BetaParams { alpha: 9.0, beta: 5.0 });
        r.begin_round(&[], &[ArmId(0)], &BTreeMap::new(), &mut rng);
        assert!(r.posteriors().is_empty());
    }

    #[test]
    fn degenerate_predictor_falls_back_to_flat() {
        let mut r = RandomizedBse::new(RbseConfig::default(), Some(Box::new(ConstantPredictor(0.5)))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        r.begin_round(&[arm(3, 0.5)], &[], &BTreeMap::new(), &mut rng);
        assert_eq!(r.posteriors()[&ArmId(3)], BetaParams::flat());
        assert_eq!(r.warnings().len(), 1);
    }

    #[test]
    fn warm_predictor_centres_prior() {
        let mut r = RandomizedBse::new(RbseConfig::default(), Some(Box::new(NoisyPredictor { sigma: 0.05 }))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        r.begin_round(&[arm(0, 0.3)], &[], &BTreeMap::new(), &mut rng);
        let p = r.posteriors()[&ArmId(0)];
        assert!((p.mean() - 0.3).abs() < 0.02);
        assert!(p.alpha + p.beta > 50.0);
    }

    #[test]
    fn theta_zero_is_pure_thompson() {
        let cfg = RbseConfig { theta: 0.0, epsilon: 0.5, ..RbseConfig::default() };
        let mut r = RandomizedBse::new(cfg, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cards: Vec<Arm> = (0..10).map(|i| arm(i, 0.5)).collect();
        r.begin_round(&cards, &[], &BTreeMap::new(), &mut rng);
        let served = r.allocate_request(5, &mut rng).unwrap();
        assert!(served.iter().all(|s| s.queue == Queue::WellExplored));
    }

    #[test]
    fn epsilon_one_serves_under_explored() {
        let cfg = RbseConfig { theta: 10.0, epsilon: 1.0, ..RbseConfig::default() };
        let mut r = RandomizedBse::new(cfg, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cards: Vec<Arm> = (0..10).map(|i| arm(i, 0.5)).collect();
        r.begin_round(&cards, &[], &BTreeMap::new(), &mut rng);
        for i in 0..5 {
            r.posteriors.insert(ArmId(i), BetaParams { alpha: 20.0, beta: 20.0 });
        }
        let served = r.allocate_request(5, &mut rng).unwrap();
        assert!(served.iter().all(|s| s.queue == Queue::UnderExplored));
        let mut ids: Vec<_> = served.iter().map(|s| s.card).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn depleted_queue_falls_through() {
        let cfg = RbseConfig { theta: 10.0, epsilon: 1.0, ..RbseConfig::default() };
        let mut r = RandomizedBse::new(cfg, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cards: Vec<Arm> = (0..4).map(|i| arm(i, 0.5)).collect();
        r.begin_round(&cards, &[], &BTreeMap::new(), &mut rng);
        r.posteriors.insert(ArmId(0), BetaParams { alpha: 20.0, beta: 20.0 });
        let served = r.allocate_request(4, &mut rng).unwrap();
        assert_eq!(served.len(), 4);
        assert_eq!(served[3].queue, Queue::WellExplored);
    }

    #[test]
    fn no_cards_error() {
        let r = RandomizedBse::new(RbseConfig::default(), None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(r.allocate_request(1, &mut rng).unwrap_err(), PolicyError::NoCards);
    }

    #[test]
    fn baselines_conserve_slots() {
        let mut pool = ArmPool::new();
        pool.advance_scripted(&[0.0, 1.0, 0.0, 1.0], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = baseline_oracle_greedy(&pool, 10).unwrap();
        assert_eq!(o, [(ArmId(1), 10)].into_iter().collect());
        let u = baseline_uniform_random(&pool, 10, &mut rng).unwrap();
        assert_eq!(u.values().sum::<u64>(), 10);
    }

    #[test]
    fn worst_case_streams() {
        let (a, b) = worst_case_pair(3);
        assert_eq!(a[1], vec![1.0]);
        assert_eq!(b[1], vec![0.0]);
        assert_eq!(a[0], b[0]);
        assert_eq!(a[0], vec![0.5]);
        assert_eq!(a.len(), 4);
    }
}
