//! The preference-learning loop.
//!
//! A session alternates between [`propose`], which computes the next pair
//! to show, and [`apply_choice`], which folds the answer back in. [`step`]
//! and [`run_learning_loop`] glue the two together around a [`Responder`].
//!
//! In deterministic mode the loop stops once max regret finds no valid cut.
//! When the only reason a candidate cut is invalid is that the candidate
//! beats the current tours everywhere on the polyhedron, the candidate is
//! adopted without asking and the search continues from it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::gtop::{Planner, TourSet};
use crate::polyhedron::{
    cut_extent, probable_regions, Polyhedron, ProbableRegion, VALID_CUT_EPS,
};
use crate::querygen::{
    check_termination, information_gain_query, max_regret_query, random_posterior_query, RegretSearch,
    random_uniform_query, InfoGainSettings, QueryContext, QueryError, QueryProposal,
};
use crate::rewards::{
    dot, features, visit_counts, DecaySet, FeatureVector, GroundTruthUser, RewardError,
    WeightVector,
};
use crate::scenario::Environment;
use crate::users::{induced_cut, Choice, UserModel};

const MAX_ADOPTIONS_PER_STEP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    MaxRegret,
    RandomUniform,
    RandomPosterior,
    InformationGain,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::MaxRegret,
        Strategy::RandomUniform,
        Strategy::RandomPosterior,
        Strategy::InformationGain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::MaxRegret => "max_regret",
            Strategy::RandomUniform => "random_uniform",
            Strategy::RandomPosterior => "random_posterior",
            Strategy::InformationGain => "information_gain",
        }
    }

    pub fn from_name(name: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// `K`.
    pub max_iterations: usize,
    /// `N`.
    pub n_regions_sampled: usize,
    /// `q`, the assumed probability that any one answer is correct.
    pub static_cut_prob: f64,
    pub strategy: Strategy,
    pub deterministic_mode: bool,
    pub seed: u64,
    /// Weight samples per information-gain evaluation.
    pub info_samples: usize,
    /// β assumed by information gain when scoring candidates.
    pub model_beta: f64,
    /// Random-direction ascent starts per sampled region in max regret.
    pub regret_starts: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: 20,
            n_regions_sampled: 10,
            static_cut_prob: 0.8,
            strategy: Strategy::MaxRegret,
            deterministic_mode: false,
            seed: 0,
            info_samples: 300,
            model_beta: 20.0,
            regret_starts: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("n_regions_sampled must be at least 1")]
    RegionsSampled,
    #[error("static_cut_prob must lie in (0.5, 1]")]
    CutProbability,
    #[error("info_samples must be at least 1")]
    InfoSamples,
    #[error("model_beta must be positive and finite")]
    ModelBeta,
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_regions_sampled == 0 {
            return Err(ConfigError::RegionsSampled);
        }
        if !(self.static_cut_prob > 0.5 && self.static_cut_prob <= 1.0) {
            return Err(ConfigError::CutProbability);
        }
        if self.info_samples == 0 {
            return Err(ConfigError::InfoSamples);
        }
        if !(self.model_beta > 0.0 && self.model_beta.is_finite()) {
            return Err(ConfigError::ModelBeta);
        }
        Ok(())
    }

    fn effective_q(&self) -> f64 {
        if self.deterministic_mode {
            1.0
        } else {
            self.static_cut_prob
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("session is finished")]
    Finished,
    #[error("no query is pending")]
    NoPendingQuery,
    #[error("responder unavailable: {0}")]
    Responder(String),
}

/// A pair waiting for an answer. Option 1 is always the current tours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub k: usize,
    pub first: TourSet,
    pub second: TourSet,
    pub first_features: FeatureVector,
    pub second_features: FeatureVector,
    pub weights: WeightVector,
    pub regret: f64,
    /// `ℙ(w* ∈ P_j) · regret` for the region the proposal came from.
    pub discounted_regret: f64,
    pub info_gain: Option<f64>,
    pub source_region: usize,
    pub sampling_fallback: bool,
}

/// One line of the session trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub strategy: Strategy,
    pub shown_pair: [TourSet; 2],
    pub visit_counts: [Vec<u32>; 2],
    pub chosen: Choice,
    /// `None` when both options had identical features.
    pub cut_direction: Option<Vec<f64>>,
    pub weights: WeightVector,
    pub regret: f64,
    pub discounted_regret: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_ratio: Option<f64>,
    pub sampling_fallback: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionState {
    pub cuts: Polyhedron,
    pub t_curr: TourSet,
    pub phi_curr: FeatureVector,
    pub w_curr: WeightVector,
    pub iteration: usize,
    pub terminated: bool,
    /// Candidates adopted without a query because they dominated.
    pub adoptions: usize,
    pub pending: Option<PendingQuery>,
    pub trace: Vec<TraceRecord>,
    rng: ChaCha8Rng,
}

impl SessionState {
    pub fn is_finished(&self, config: &LoopConfig) -> bool {
        self.terminated || self.iteration >= config.max_iterations
    }
}

pub fn init_session<P: Planner + ?Sized>(
    ctx: &QueryContext<'_, P>,
    config: &LoopConfig,
) -> Result<SessionState, SessionError> {
    config.validate()?;
    let w = WeightVector::ones(ctx.dimension());
    let (t_curr, phi_curr) = ctx.plan(&w)?;
    Ok(SessionState {
        cuts: Polyhedron::unit_box(ctx.dimension()),
        t_curr,
        phi_curr,
        w_curr: w,
        iteration: 0,
        terminated: false,
        adoptions: 0,
        pending: None,
        trace: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    })
}

/// Computes the next query, or returns `None` if the session terminated.
/// Calling it again while a query is pending returns that same query.
pub fn propose<P: Planner + ?Sized>(
    state: &mut SessionState,
    ctx: &QueryContext<'_, P>,
    config: &LoopConfig,
) -> Result<Option<PendingQuery>, SessionError> {
    if let Some(p) = &state.pending {
        return Ok(Some(p.clone()));
    }
    if state.is_finished(config) {
        return Ok(None);
    }
    let q = config.effective_q();
    let mut adopted = 0;
    let (proposal, probability, info_gain) = loop {
        let (proposal, probability, info_gain) = match config.strategy {
            Strategy::MaxRegret if config.deterministic_mode => {
                let search = RegretSearch {
                    random_starts: config.regret_starts,
                    escalate: true,
                };
                let p = max_regret_query(ctx, &state.phi_curr, &state.cuts, &search, &mut state.rng)?;
                (p, 1.0, None)
            }
            Strategy::MaxRegret => {
                let regions =
                    probable_regions(&state.cuts, config.n_regions_sampled, |_, _| q, &mut state.rng);
                best_discounted(ctx, &state.phi_curr, &regions, config.regret_starts, &mut state.rng)?
            }
            Strategy::RandomUniform => {
                (random_uniform_query(ctx, &state.phi_curr, &mut state.rng)?, 1.0, None)
            }
            Strategy::RandomPosterior => {
                let p = random_posterior_query(ctx, &state.phi_curr, &state.cuts, q, &mut state.rng)?;
                (p, 1.0, None)
            }
            Strategy::InformationGain => {
                let settings = InfoGainSettings {
                    candidates: config.n_regions_sampled,
                    samples: config.info_samples,
                    beta: config.model_beta,
                    q,
                };
                let p = information_gain_query(ctx, &state.phi_curr, &state.cuts, &settings, &mut state.rng)?;
                let gain = p.score;
                (p, 1.0, Some(gain))
            }
        };
        let check = config.deterministic_mode && config.strategy == Strategy::MaxRegret;
        if !check || !check_termination(&state.phi_curr, &proposal, &state.cuts).map_err(QueryError::from)? {
            break (proposal, probability, info_gain);
        }
        let direction = proposal.features.difference(&state.phi_curr);
        let extent = cut_extent(&direction, &state.cuts).map_err(QueryError::from)?;
        if extent.positive.value > VALID_CUT_EPS && adopted < MAX_ADOPTIONS_PER_STEP {
            state.t_curr = proposal.tours;
            state.phi_curr = proposal.features;
            state.w_curr = proposal.weights;
            state.adoptions += 1;
            adopted += 1;
            continue;
        }
        state.terminated = true;
        return Ok(None);
    };

    let pending = PendingQuery {
        k: state.iteration,
        first: state.t_curr.clone(),
        second: proposal.tours,
        first_features: state.phi_curr.clone(),
        second_features: proposal.features,
        weights: proposal.weights,
        regret: proposal.regret,
        discounted_regret: probability * proposal.regret,
        info_gain,
        source_region: proposal.source_region,
        sampling_fallback: proposal.sampling_fallback,
    };
    state.pending = Some(pending.clone());
    Ok(Some(pending))
}

/// Max regret in every distinct sampled region, discounted by the region's
/// probability. A region drawn several times gets that many times the
/// random starts.
fn best_discounted<P: Planner + ?Sized, R: Rng + ?Sized>(
    ctx: &QueryContext<'_, P>,
    phi_curr: &FeatureVector,
    regions: &[ProbableRegion],
    starts_per_region: usize,
    rng: &mut R,
) -> Result<(QueryProposal, f64, Option<f64>), SessionError> {
    let mut best: Option<(QueryProposal, f64)> = None;
    for (j, region) in regions.iter().enumerate() {
        if regions[..j].iter().any(|r| r.polyhedron == region.polyhedron) {
            continue;
        }
        let copies = regions[j..].iter().filter(|r| r.polyhedron == region.polyhedron).count();
        let search = RegretSearch {
            random_starts: starts_per_region * copies,
            escalate: false,
        };
        let mut p = max_regret_query(ctx, phi_curr, &region.polyhedron, &search, rng)?;
        p.source_region = j;
        p.score = region.probability * p.regret;
        if best.as_ref().is_none_or(|(b, _)| p.score > b.score) {
            best = Some((p, region.probability));
        }
    }
    let (p, prob) = best.expect("n_regions_sampled >= 1");
    Ok((p, prob, None))
}

/// Folds an answer to the pending query into the state.
pub fn apply_choice<'s>(
    state: &'s mut SessionState,
    env: &Environment,
    config: &LoopConfig,
    chosen: Choice,
    oracle: Option<&RatioOracle>,
) -> Result<&'s TraceRecord, SessionError> {
    let pending = state.pending.take().ok_or(SessionError::NoPendingQuery)?;
    let cut = induced_cut(
        pending.first_features.as_slice(),
        pending.second_features.as_slice(),
        chosen,
        pending.k,
    );
    let cut_direction = cut.as_ref().map(|c| c.direction.clone());
    if let Some(cut) = cut {
        state.cuts = state.cuts.add_cut(cut).map_err(QueryError::from)?;
    }
    if chosen == Choice::Second {
        state.t_curr = pending.second.clone();
        state.phi_curr = pending.second_features.clone();
        state.w_curr = pending.weights.clone();
    }
    state.iteration += 1;
    let counts = [
        visit_counts(&pending.first, env)?,
        visit_counts(&pending.second, env)?,
    ];
    let reward_ratio = oracle.map(|o| o.ratio(&state.phi_curr));
    state.trace.push(TraceRecord {
        k: pending.k,
        strategy: config.strategy,
        shown_pair: [pending.first, pending.second],
        visit_counts: counts,
        chosen,
        cut_direction,
        weights: pending.weights,
        regret: pending.regret,
        discounted_regret: pending.discounted_regret,
        info_gain: pending.info_gain,
        reward_ratio,
        sampling_fallback: pending.sampling_fallback,
    });
    Ok(state.trace.last().expect("just pushed"))
}

/// Whoever answers queries: a simulated user or a person behind the service.
pub trait Responder {
    fn respond(&mut self, query: &PendingQuery) -> Result<Choice, SessionError>;
}

/// Answers with a [`UserModel`] using its own random stream.
pub struct SimulatedResponder {
    pub user: UserModel,
    rng: ChaCha8Rng,
}

impl SimulatedResponder {
    pub fn new(user: UserModel, seed: u64) -> Self {
        SimulatedResponder {
            user,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_rng(user: UserModel, rng: ChaCha8Rng) -> Self {
        SimulatedResponder { user, rng }
    }
}

impl Responder for SimulatedResponder {
    fn respond(&mut self, query: &PendingQuery) -> Result<Choice, SessionError> {
        let (choice, _) = self.user.choose(
            query.first_features.as_slice(),
            query.second_features.as_slice(),
            &mut self.rng,
        );
        Ok(choice)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Answered,
    Finished,
}

/// Proposes, asks, applies. A responder error leaves the pending query in
/// place so the step can be retried.
pub fn step<P: Planner + ?Sized, Resp: Responder + ?Sized>(
    state: &mut SessionState,
    ctx: &QueryContext<'_, P>,
    config: &LoopConfig,
    responder: &mut Resp,
    oracle: Option<&RatioOracle>,
) -> Result<StepOutcome, SessionError> {
    let Some(query) = propose(state, ctx, config)? else {
        return Ok(StepOutcome::Finished);
    };
    let choice = responder.respond(&query)?;
    apply_choice(state, ctx.env, config, choice, oracle)?;
    Ok(StepOutcome::Answered)
}

pub fn run_learning_loop<P: Planner + ?Sized, Resp: Responder + ?Sized>(
    ctx: &QueryContext<'_, P>,
    config: &LoopConfig,
    responder: &mut Resp,
    oracle: Option<&RatioOracle>,
) -> Result<(TourSet, Vec<TraceRecord>), SessionError> {
    let mut state = init_session(ctx, config)?;
    while step(&mut state, ctx, config, responder, oracle)? == StepOutcome::Answered {}
    Ok((state.t_curr, state.trace))
}

/// Reward ratio against a fixed ground truth, with `R(T*(w*), w*)` cached.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioOracle {
    pub weights: WeightVector,
    pub optimum: f64,
}

impl RatioOracle {
    pub fn new<P: Planner + ?Sized>(
        ctx: &QueryContext<'_, P>,
        truth: &GroundTruthUser,
    ) -> Result<Self, SessionError> {
        let (_, phi) = ctx.plan(&truth.weights)?;
        Ok(RatioOracle {
            optimum: dot(phi.as_slice(), truth.weights.as_slice()),
            weights: truth.weights.clone(),
        })
    }

    /// `R(T, w*) / R(T*, w*)`, or 1 when the optimum is zero.
    pub fn ratio(&self, phi: &FeatureVector) -> f64 {
        if self.optimum <= 0.0 {
            return 1.0;
        }
        dot(phi.as_slice(), self.weights.as_slice()) / self.optimum
    }
}

/// Reward ratio of `tours` with the optimum computed by the greedy planner.
pub fn reward_ratio(
    tours: &TourSet,
    truth: &GroundTruthUser,
    env: &Environment,
    decays: &DecaySet,
) -> Result<f64, SessionError> {
    let planner = crate::gtop::GreedyPlanner::new(decays.clone());
    let ctx = QueryContext { env, planner: &planner, decays };
    let oracle = RatioOracle::new(&ctx, truth)?;
    Ok(oracle.ratio(&features(tours, env, decays)?))
}

/// How much of the ground truth a non-learning baseline is handed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineLevel {
    Decay,
    RankingDecay,
    Reward,
    RewardDecay,
}

impl BaselineLevel {
    pub const ALL: [BaselineLevel; 4] = [
        BaselineLevel::Decay,
        BaselineLevel::RankingDecay,
        BaselineLevel::Reward,
        BaselineLevel::RewardDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineLevel::Decay => "decay",
            BaselineLevel::RankingDecay => "ranking_decay",
            BaselineLevel::Reward => "reward",
            BaselineLevel::RewardDecay => "reward_decay",
        }
    }

    pub fn from_name(name: &str) -> Option<BaselineLevel> {
        BaselineLevel::ALL.into_iter().find(|l| l.name() == name)
    }
}

/// The weights a baseline plans with.
///
/// * `reward_decay`: `w*` itself.
/// * `reward`: each region's true magnitude on every decay slot.
/// * `decay`: 1 on each region's true decay slot.
/// * `ranking_decay`: `(n − rank + 1) / n` on the true slot, rank 1 being
///   the largest magnitude, ties by region index.
pub fn surrogate_weights(truth: &GroundTruthUser, level: BaselineLevel) -> WeightVector {
    let g = truth.decay_prior.len();
    let n = truth.chosen_decay.len();
    let mut w = vec![0.0; n * g];
    match level {
        BaselineLevel::RewardDecay => return truth.weights.clone(),
        BaselineLevel::Reward => {
            for i in 0..n {
                let m = truth.region_magnitude(i);
                w[i * g..(i + 1) * g].fill(m);
            }
        }
        BaselineLevel::Decay => {
            for i in 0..n {
                w[i * g + truth.chosen_decay[i]] = 1.0;
            }
        }
        BaselineLevel::RankingDecay => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                truth
                    .region_magnitude(b)
                    .total_cmp(&truth.region_magnitude(a))
                    .then(a.cmp(&b))
            });
            for (rank0, &i) in order.iter().enumerate() {
                w[i * g + truth.chosen_decay[i]] = (n - rank0) as f64 / n as f64;
            }
        }
    }
    WeightVector(w)
}

pub fn baseline_tours<P: Planner + ?Sized>(
    env: &Environment,
    planner: &P,
    truth: &GroundTruthUser,
    level: BaselineLevel,
) -> TourSet {
    planner.plan(env, &surrogate_weights(truth, level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gtop::GreedyPlanner;
    use crate::rewards::sample_user;
    use crate::scenario::{generate_random_scenario, ScenarioConfig};

    fn small_env(seed: u64) -> Environment {
        generate_random_scenario(&ScenarioConfig {
            num_regions: 6,
            num_robots: 2,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn truth(n: usize, mags: &[f64], slots: &[usize]) -> GroundTruthUser {
        let mut w = vec![0.0; n * 3];
        for i in 0..n {
            w[i * 3 + slots[i]] = mags[i];
        }
        GroundTruthUser {
            weights: WeightVector(w),
            chosen_decay: slots.to_vec(),
            beta: 20.0,
            sigma: 0.0,
            decay_prior: vec![1.0 / 3.0; 3],
            seed: 0,
        }
    }

    #[test]
    fn config_validation() {
        assert!(LoopConfig::default().validate().is_ok());
        let bad = |f: fn(&mut LoopConfig)| {
            let mut c = LoopConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.n_regions_sampled = 0));
        assert!(bad(|c| c.static_cut_prob = 0.5));
        assert!(bad(|c| c.static_cut_prob = 1.01));
        assert!(bad(|c| c.model_beta = 0.0));
        assert!(bad(|c| c.info_samples = 0));
        let mut one = LoopConfig::default();
        one.static_cut_prob = 1.0;
        assert!(one.validate().is_ok());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(Strategy::from_name(s.name()), Some(s));
        }
        for l in BaselineLevel::ALL {
            assert_eq!(BaselineLevel::from_name(l.name()), Some(l));
        }
    }

    #[test]
    fn init_uses_all_ones() {
        let env = small_env(1);
        let decays = DecaySet::default();
        let planner = GreedyPlanner::new(decays.clone());
        let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
        let a = init_session(&ctx, &LoopConfig::default()).unwrap();
        let b = init_session(&ctx, &LoopConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.t_curr, planner.plan(&env, &WeightVector::ones(18)));
        a.t_curr.validate(&env).unwrap();
        assert_eq!(a.iteration, 0);
        assert!(a.cuts.cuts().is_empty());
    }

    #[test]
    fn zero_iterations_return_initial_tours() {
        let env = small_env(2);
        let decays = DecaySet::default();
        let planner = GreedyPlanner::new(decays.clone());
        let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
        let config = LoopConfig { max_iterations: 0, ..Default::default() };
        let user = sample_user(&env, &decays, 0.5, &[1.0 / 3.0; 3], 20.0, 0).unwrap();
        let mut r = SimulatedResponder::new(UserModel::boltzmann(user), 0);
        let (tours, trace) = run_learning_loop(&ctx, &config, &mut r, None).unwrap();
        assert!(trace.is_empty());
        assert_eq!(tours, planner.plan(&env, &WeightVector::ones(18)));
    }

    #[test]
    fn keeping_current_with_invalid_cut_terminates() {
        struct KeepFirst;
        impl Responder for KeepFirst {
            fn respond(&mut self, _: &PendingQuery) -> Result<Choice, SessionError> {
                Ok(Choice::First)
            }
        }
        let env = small_env(3);
        let decays = DecaySet::default();
        let planner = GreedyPlanner::new(decays.clone());
        let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
        let config = LoopConfig {
            deterministic_mode: true,
            max_iterations: 500,
            ..Default::default()
        };
        let mut state = init_session(&ctx, &config).unwrap();
        let start = state.t_curr.clone();
        let mut bound = f64::NEG_INFINITY;
        loop {
            match step(&mut state, &ctx, &config, &mut KeepFirst, None).unwrap() {
                StepOutcome::Finished => break,
                StepOutcome::Answered => {
                    if state.adoptions == 0 {
                        let lp = crate::querygen::regret_bound_weights(
                            state.phi_curr.as_slice(),
                            &state.cuts,
                        )
                        .unwrap();
                        assert!(lp.value >= bound - 1e-12);
                        bound = lp.value;
                    }
                }
            }
        }
        assert!(state.terminated);
        assert!(state.iteration < 500);
        if state.adoptions == 0 {
            assert_eq!(state.t_curr, start);
        }
        assert_eq!(state.trace.len(), state.iteration);
    }

    #[test]
    fn one_step_adds_a_cut_satisfied_by_choice() {
        let env = small_env(4);
        let decays = DecaySet::default();
        let planner = GreedyPlanner::new(decays.clone());
        let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
        let config = LoopConfig::default();
        let user = sample_user(&env, &decays, 0.5, &[0.7, 0.2, 0.1], 20.0, 9).unwrap();
        let mut r = SimulatedResponder::new(UserModel::deterministic(user.clone()), 1);
        let mut state = init_session(&ctx, &config).unwrap();
        step(&mut state, &ctx, &config, &mut r, None).unwrap();
        let rec = &state.trace[0];
        let [a, b] = &rec.shown_pair;
        let pa = features(a, &env, &decays).unwrap();
        let pb = features(b, &env, &decays).unwrap();
        match &rec.cut_direction {
            Some(d) => {
                assert_eq!(state.cuts.cuts().len(), 1);
                let expected = match rec.chosen {
                    Choice::First => pa.difference(&pb),
                    Choice::Second => pb.difference(&pa),
                };
                assert_eq!(d, &expected);
                assert!(dot(d, user.weights.as_slice()) >= 0.0);
                assert!(dot(d, rec.weights.as_slice()) >= 0.0 || rec.chosen == Choice::First);
            }
            None => assert_eq!(pa, pb),
        }
    }

    #[test]
    fn noisy_loop_is_reproducible_and_traces_round_trip() {
        let env = small_env(5);
        let decays = DecaySet::default();
        let planner = GreedyPlanner::new(decays.clone());
        let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
        let user = sample_user(&env, &decays, 10.0, &[0.1, 0.2, 0.7], 20.0, 3).unwrap();
        let oracle = RatioOracle::new(&ctx, &user).unwrap();
        for strategy in Strategy::ALL {
            let config = LoopConfig { strategy, seed: 11, ..Default::default() };
            let run = || {
                let mut r = SimulatedResponder::new(UserModel::boltzmann(user.clone()), 12);
                run_learning_loop(&ctx, &config, &mut r, Some(&oracle)).unwrap()
            };
            let (t1, tr1) = run();
            let (t2, tr2) = run();
            assert_eq!(t1, t2);
            assert_eq!(tr1, tr2);
            assert_eq!(tr1.len(), 20);
            t1.validate(&env).unwrap();
            for rec in &tr1 {
                assert!(rec.reward_ratio.unwrap() >= 0.0);
                let json = serde_json::to_string(rec).unwrap();
                let back: TraceRecord = serde_json::from_str(&json).unwrap();
                assert_eq!(&back, rec);
            }
        }
    }

    #[test]
    fn deterministic_user_never_loses_reward_and_cuts_contain_truth() {
        for seed in 0..4 {
            let env = small_env(10 + seed);
            let decays = DecaySet::default();
            let planner = GreedyPlanner::new(decays.clone());
            let ctx = QueryContext { env: &env, planner: &planner, decays: &decays };
            let user = sample_user(&env, &decays, 0.5, &[1.0 / 3.0; 3], 20.0, seed).unwrap();
            let config = LoopConfig { deterministic_mode: true, ..Default::default() };
            let mut r = SimulatedResponder::new(UserModel::deterministic(user.clone()), 0);
            let mut state = init_session(&ctx, &config).unwrap();
            let mut last = dot(state.phi_curr.as_slice(), user.weights.as_slice());
            while step(&mut state, &ctx, &config, &mut r, None).unwrap() == StepOutcome::Answered {
                let now = dot(state.phi_curr.as_slice(), user.weights.as_slice());
                assert!(now >= last - 1e-12);
                last = now;
                for c in state.cuts.cuts() {
                    assert!(dot(&c.direction, user.weights.as_slice()) >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn ratio_examples() {
        let env = small_env(6);
        let decays = DecaySet::default();
        let user = sample_user(&env, &decays, 0.5, &[1.0 / 3.0; 3], 20.0, 2).unwrap();
        let best = crate::gtop::solve_gtop(&env, &user.weights, &decays);
        assert_eq!(reward_ratio(&best, &user, &env, &decays).unwrap(), 1.0);
        assert_eq!(reward_ratio(&TourSet::empty(&env), &user, &env, &decays).unwrap(), 0.0);
        let zero = GroundTruthUser { weights: WeightVector::zeros(18), ..user };
        assert_eq!(reward_ratio(&best, &zero, &env, &decays).unwrap(), 1.0);
    }

    #[test]
    fn surrogate_examples() {
        let t = truth(2, &[0.4, 0.9], &[0, 2]);
        assert_eq!(
            surrogate_weights(&t, BaselineLevel::RankingDecay).0,
            vec![0.5, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            surrogate_weights(&t, BaselineLevel::Decay).0,
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(
            surrogate_weights(&t, BaselineLevel::Reward).0,
            vec![0.4, 0.4, 0.4, 0.9, 0.9, 0.9]
        );
        assert_eq!(surrogate_weights(&t, BaselineLevel::RewardDecay), t.weights);

        let tie = truth(3, &[0.5, 0.5, 0.5], &[1, 1, 1]);
        assert_eq!(
            surrogate_weights(&tie, BaselineLevel::RankingDecay).0,
            vec![0.0, 1.0, 0.0, 0.0, 2.0 / 3.0, 0.0, 0.0, 1.0 / 3.0, 0.0]
        );
    }

    #[test]
    fn uniform_truth_decay_baseline_matches_full_information() {
        let env = small_env(7);
        let decays = DecaySet::default();
        let planner = GreedyPlanner::new(decays.clone());
        let t = truth(6, &[0.7; 6], &[0, 1, 2, 0, 1, 2]);
        let scaled = GroundTruthUser {
            weights: WeightVector(t.weights.0.iter().map(|w| w / 0.7).collect()),
            ..t.clone()
        };
        assert_eq!(
            baseline_tours(&env, &planner, &scaled, BaselineLevel::Decay),
            baseline_tours(&env, &planner, &scaled, BaselineLevel::RewardDecay)
        );
    }
}
