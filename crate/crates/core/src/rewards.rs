//! Decaying basis-function rewards.
//!
//! Each region `i` and decay `γ_j` gives one basis function of the region's
//! visit count `ψ_i`: `1 + γ + γ² + … + γ^(ψ_i − 1)`. The reward is linear in
//! the weights over these functions, so a set of tours is summarized by its
//! feature vector and compared with a dot product. Features are laid out
//! region-major, decay-minor: entry `(i, j)` lives at `i * |Γ| + j`.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::gtop::TourSet;
use crate::scenario::{Environment, VertexId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("tour visits unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("decay values must lie in (0, 1] and be strictly increasing")]
    InvalidDecays,
    #[error("decay prior must be non-negative, one entry per decay, summing to 1")]
    InvalidPrior,
    #[error("sigma must be finite and non-negative")]
    InvalidSigma,
    #[error("beta must be finite and positive")]
    InvalidBeta,
}

/// The discrete set `Γ` of decay parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DecaySet(Vec<f64>);

impl DecaySet {
    pub fn new(values: Vec<f64>) -> Result<Self, RewardError> {
        let in_range = values.iter().all(|&g| g > 0.0 && g <= 1.0);
        let increasing = values.windows(2).all(|w| w[0] < w[1]);
        if values.is_empty() || !in_range || !increasing {
            return Err(RewardError::InvalidDecays);
        }
        Ok(DecaySet(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Feature dimension for `num_regions` regions.
    pub fn dimension(&self, num_regions: usize) -> usize {
        num_regions * self.0.len()
    }
}

impl Default for DecaySet {
    fn default() -> Self {
        DecaySet(vec![0.001, 0.5, 1.0])
    }
}

impl TryFrom<Vec<f64>> for DecaySet {
    type Error = RewardError;
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        DecaySet::new(values)
    }
}

impl From<DecaySet> for Vec<f64> {
    fn from(d: DecaySet) -> Self {
        d.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self − other`, the direction of the cut "self preferred over other".
    pub fn difference(&self, other: &FeatureVector) -> Vec<f64> {
        debug_assert_eq!(self.len(), other.len());
        self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(dim: usize) -> Self {
        WeightVector(vec![0.0; dim])
    }

    pub fn ones(dim: usize) -> Self {
        WeightVector(vec![1.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn in_unit_box(&self) -> bool {
        self.0.iter().all(|&w| (0.0..=1.0).contains(&w))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Occurrences of each region's vertices across all tours. The depot counts
/// for nothing.
pub fn visit_counts(tours: &TourSet, env: &Environment) -> Result<Vec<u32>, RewardError> {
    let mut counts = vec![0u32; env.num_regions()];
    for tour in &tours.tours {
        for &v in &tour.vertices {
            let vertex = env.vertex(v).map_err(|_| RewardError::UnknownVertex(v))?;
            if let Some(region) = vertex.region {
                counts[region] += 1;
            }
        }
    }
    Ok(counts)
}

/// `Σ_{α=1..count} γ^(α−1)` in closed form.
pub fn basis_value(count: u32, gamma: f64) -> f64 {
    if count == 0 {
        0.0
    } else if gamma == 1.0 {
        f64::from(count)
    } else {
        (1.0 - libm::pow(gamma, f64::from(count))) / (1.0 - gamma)
    }
}

pub fn features_from_counts(counts: &[u32], decays: &DecaySet) -> FeatureVector {
    let mut out = Vec::with_capacity(counts.len() * decays.len());
    for &c in counts {
        for &g in decays.values() {
            out.push(basis_value(c, g));
        }
    }
    FeatureVector(out)
}

pub fn features(
    tours: &TourSet,
    env: &Environment,
    decays: &DecaySet,
) -> Result<FeatureVector, RewardError> {
    Ok(features_from_counts(&visit_counts(tours, env)?, decays))
}

/// Gain of one more visit to `region` when it already has `count` visits.
pub fn marginal_gain(region: usize, count: u32, weights: &[f64], decays: &DecaySet) -> f64 {
    let g = decays.len();
    decays
        .values()
        .iter()
        .zip(&weights[region * g..(region + 1) * g])
        .map(|(&gamma, &w)| if w == 0.0 { 0.0 } else { w * libm::pow(gamma, f64::from(count)) })
        .sum()
}

/// `R(T, w) = φ(T) · w`.
pub fn reward(features: &FeatureVector, weights: &WeightVector) -> Result<f64, RewardError> {
    if features.len() != weights.len() {
        return Err(RewardError::DimensionMismatch {
            expected: features.len(),
            found: weights.len(),
        });
    }
    Ok(dot(features.as_slice(), weights.as_slice()))
}

/// A simulated user's hidden reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthUser {
    pub weights: WeightVector,
    /// Per region, the index into `Γ` of the single slot that may be nonzero.
    pub chosen_decay: Vec<usize>,
    pub beta: f64,
    pub sigma: f64,
    pub decay_prior: Vec<f64>,
    pub seed: u64,
}

impl GroundTruthUser {
    /// Weight of region `i` irrespective of its decay slot.
    pub fn region_magnitude(&self, i: usize) -> f64 {
        let g = self.decay_prior.len();
        self.weights.0[i * g + self.chosen_decay[i]]
    }
}

/// Draws a user whose region weight grows with the squared (normalized)
/// depot distance, plus Gaussian noise, and who cares about exactly one
/// decay per region.
///
/// Distances are normalized so the furthest region mean sits at distance 1.
/// Negative draws are clamped to zero and the result rescaled so the largest
/// weight is 1.
pub fn sample_user(
    env: &Environment,
    decays: &DecaySet,
    sigma: f64,
    decay_prior: &[f64],
    beta: f64,
    seed: u64,
) -> Result<GroundTruthUser, RewardError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(RewardError::InvalidSigma);
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(RewardError::InvalidBeta);
    }
    let total: f64 = decay_prior.iter().sum();
    if decay_prior.len() != decays.len()
        || decay_prior.iter().any(|&p| !(p >= 0.0))
        || (total - 1.0).abs() > 1e-9
    {
        return Err(RewardError::InvalidPrior);
    }
    let pick = WeightedIndex::new(decay_prior).map_err(|_| RewardError::InvalidPrior)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = env.num_regions();
    let far = env.max_region_distance();
    let mut raw = Vec::with_capacity(n);
    for i in 0..n {
        let d = if far > 0.0 { env.region_distance(i) / far } else { 0.0 };
        let normal = Normal::new(d * d, sigma).map_err(|_| RewardError::InvalidSigma)?;
        raw.push(normal.sample(&mut rng).max(0.0));
    }
    let top = raw.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        for w in &mut raw {
            *w /= top;
        }
    }
    let chosen_decay: Vec<usize> = (0..n).map(|_| pick.sample(&mut rng)).collect();

    let g = decays.len();
    let mut weights = vec![0.0; n * g];
    for i in 0..n {
        weights[i * g + chosen_decay[i]] = raw[i];
    }
    Ok(GroundTruthUser {
        weights: WeightVector(weights),
        chosen_decay,
        beta,
        sigma,
        decay_prior: decay_prior.to_vec(),
        seed,
    })
}

/// The `(σ, p)` grid of simulated user types: two noise levels times four
/// decay priors (uniform, step-biased, linear-biased, submodular-biased).
pub fn user_grid() -> Vec<(f64, Vec<f64>)> {
    let third = 1.0 / 3.0;
    let priors = [
        vec![third, third, third],
        vec![0.7, 0.2, 0.1],
        vec![0.1, 0.2, 0.7],
        vec![0.2, 0.7, 0.1],
    ];
    let mut grid = Vec::new();
    for sigma in [0.5, 10.0] {
        for p in &priors {
            grid.push((sigma, p.clone()));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gtop::Tour;
    use crate::scenario::{BudgetRule, Point, RegionSpec, ScenarioConfig};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    fn two_region_env(robots: usize) -> Environment {
        let regions = vec![
            RegionSpec {
                id: 0,
                points: vec![Point::new(1.0, 0.0)],
            },
            RegionSpec {
                id: 1,
                points: vec![Point::new(0.0, 1.0), Point::new(0.0, 2.0), Point::new(0.0, 3.0)],
            },
        ];
        Environment::build(Point::new(0.0, 0.0), regions, robots, BudgetRule::Factor(4.0)).unwrap()
    }

    #[test]
    fn basis_value_examples() {
        assert!(close(basis_value(3, 0.5), 1.75));
        for k in 0..10 {
            assert_eq!(basis_value(k, 1.0), f64::from(k));
        }
        assert!(close(basis_value(2, 0.001), 1.001));
        assert_eq!(basis_value(0, 0.5), 0.0);
    }

    #[test]
    fn closed_form_matches_loop() {
        for &g in &[0.001, 0.3, 0.5, 0.9, 1.0] {
            for k in 0..30u32 {
                let looped: f64 = (0..k).map(|a| libm::pow(g, f64::from(a))).sum();
                assert!(close(basis_value(k, g), looped), "k={k} g={g}");
            }
        }
    }

    #[test]
    fn decay_monotone_in_gamma() {
        let grid: Vec<f64> = (1..=100).map(|i| f64::from(i) / 100.0).collect();
        for k in 1..20 {
            for w in grid.windows(2) {
                assert!(basis_value(k, w[0]) <= basis_value(k, w[1]));
            }
        }
    }

    #[test]
    fn counts_and_features() {
        let env = two_region_env(2);
        let decays = DecaySet::default();
        let empty = TourSet::empty(&env);
        assert_eq!(visit_counts(&empty, &env).unwrap(), vec![0, 0]);
        assert!(features(&empty, &env, &decays).unwrap().0.iter().all(|&x| x == 0.0));

        // robot 0 visits all three points of region 1
        let r1: Vec<_> = env.regions()[1].vertices.iter().copied().filter(|&v| env.vertices()[v].robot == Some(0)).collect();
        let mut tours = TourSet::empty(&env);
        tours.tours[0] = Tour::from_stops(&env, 0, &r1);
        assert_eq!(visit_counts(&tours, &env).unwrap(), vec![0, 3]);

        // both robots visit region 0
        let r0 = &env.regions()[0].vertices;
        let mut both = TourSet::empty(&env);
        both.tours[0] = Tour::from_stops(&env, 0, &r0[..1]);
        both.tours[1] = Tour::from_stops(&env, 1, &r0[1..2]);
        assert_eq!(visit_counts(&both, &env).unwrap(), vec![2, 0]);

        let mut bogus = TourSet::empty(&env);
        bogus.tours[0].vertices = vec![0, 99, 0];
        assert_eq!(visit_counts(&bogus, &env), Err(RewardError::UnknownVertex(99)));
    }

    #[test]
    fn features_layout_is_region_major() {
        let decays = DecaySet::new(vec![0.5, 1.0]).unwrap();
        let phi = features_from_counts(&[2, 0], &decays);
        assert_eq!(phi.0, vec![1.5, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn reward_examples() {
        let phi = FeatureVector(vec![1.75, 3.0]);
        assert_eq!(reward(&phi, &WeightVector::zeros(2)).unwrap(), 0.0);
        assert_eq!(reward(&phi, &WeightVector(vec![1.0, 0.0])).unwrap(), 1.75);
        assert!(matches!(
            reward(&phi, &WeightVector::zeros(3)),
            Err(RewardError::DimensionMismatch { .. })
        ));
        let w1 = [0.2, 0.9];
        let w2 = [0.5, 0.1];
        let (a, b) = (0.3, 1.7);
        let mix = WeightVector(vec![a * w1[0] + b * w2[0], a * w1[1] + b * w2[1]]);
        let lhs = reward(&phi, &mix).unwrap();
        let rhs = a * reward(&phi, &WeightVector(w1.to_vec())).unwrap()
            + b * reward(&phi, &WeightVector(w2.to_vec())).unwrap();
        assert!(close(lhs, rhs));
    }

    #[test]
    fn marginal_gain_is_basis_increment() {
        let decays = DecaySet::default();
        let w = [0.3, 0.6, 0.9, 0.1, 0.2, 0.4];
        for region in 0..2 {
            for c in 0..6u32 {
                let mut lo = [0u32; 2];
                let mut hi = [0u32; 2];
                lo[region] = c;
                hi[region] = c + 1;
                let direct = dot(&features_from_counts(&hi, &decays).0, &w)
                    - dot(&features_from_counts(&lo, &decays).0, &w);
                assert!(close(marginal_gain(region, c, &w, &decays), direct));
            }
        }
    }

    #[test]
    fn decay_set_validation() {
        assert!(DecaySet::new(vec![0.5, 0.5]).is_err());
        assert!(DecaySet::new(vec![0.0, 0.5]).is_err());
        assert!(DecaySet::new(vec![0.5, 1.5]).is_err());
        assert!(DecaySet::new(vec![]).is_err());
        assert!(DecaySet::new(vec![0.001, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn zero_sigma_user_is_distance_squared() {
        let config = ScenarioConfig { num_regions: 8, num_robots: 2, seed: 11, ..ScenarioConfig::default() };
        let env = crate::scenario::generate_random_scenario(&config).unwrap();
        let decays = DecaySet::default();
        let user = sample_user(&env, &decays, 0.0, &[1.0 / 3.0; 3], 20.0, 5).unwrap();
        let far = env.max_region_distance();
        let far_region = (0..8).max_by(|&a, &b| env.region_distance(a).total_cmp(&env.region_distance(b))).unwrap();
        for i in 0..8 {
            let d = env.region_distance(i) / far;
            assert!(close(user.region_magnitude(i), d * d));
        }
        assert_eq!(user.region_magnitude(far_region), 1.0);
    }

    #[test]
    fn degenerate_prior_picks_step_slot() {
        let config = ScenarioConfig { num_regions: 10, num_robots: 1, seed: 2, ..ScenarioConfig::default() };
        let env = crate::scenario::generate_random_scenario(&config).unwrap();
        let user = sample_user(&env, &DecaySet::default(), 0.5, &[1.0, 0.0, 0.0], 20.0, 9).unwrap();
        assert!(user.chosen_decay.iter().all(|&j| j == 0));
        for i in 0..10 {
            assert_eq!(user.weights.0[i * 3 + 1], 0.0);
            assert_eq!(user.weights.0[i * 3 + 2], 0.0);
        }
    }

    #[test]
    fn user_grid_has_eight_valid_cells() {
        let grid = user_grid();
        assert_eq!(grid.len(), 8);
        let config = ScenarioConfig { num_regions: 6, num_robots: 2, seed: 1, ..ScenarioConfig::default() };
        let env = crate::scenario::generate_random_scenario(&config).unwrap();
        for (seed, (sigma, p)) in grid.into_iter().enumerate() {
            let user = sample_user(&env, &DecaySet::default(), sigma, &p, 20.0, seed as u64).unwrap();
            assert!(user.weights.in_unit_box());
            assert_eq!(user.weights.0.iter().copied().fold(0.0, f64::max), 1.0);
            for i in 0..6 {
                let nonzero = (0..3).filter(|&j| user.weights.0[i * 3 + j] > 0.0).count();
                assert!(nonzero <= 1);
            }
        }
    }

    #[test]
    fn sample_user_rejects_bad_inputs() {
        let env = two_region_env(1);
        let d = DecaySet::default();
        assert_eq!(sample_user(&env, &d, -1.0, &[1.0, 0.0, 0.0], 1.0, 0), Err(RewardError::InvalidSigma));
        assert_eq!(sample_user(&env, &d, 1.0, &[0.5, 0.0, 0.0], 1.0, 0), Err(RewardError::InvalidPrior));
        assert_eq!(sample_user(&env, &d, 1.0, &[1.0, 0.0, 0.0], 0.0, 0), Err(RewardError::InvalidBeta));
    }
}
