//! Response models for pairwise tour-set queries.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::gtop::TourSet;
use crate::polyhedron::Cut;
use crate::rewards::{dot, features, DecaySet, GroundTruthUser, RewardError};
use crate::scenario::Environment;

/// Which of the two presented options was picked. Serialized as `1` or `2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Choice {
    First,
    Second,
}

impl Choice {
    pub fn index(self) -> u8 {
        match self {
            Choice::First => 1,
            Choice::Second => 2,
        }
    }

    pub fn other(self) -> Choice {
        match self {
            Choice::First => Choice::Second,
            Choice::Second => Choice::First,
        }
    }
}

impl From<Choice> for u8 {
    fn from(c: Choice) -> u8 {
        c.index()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("choice must be 1 or 2, got {0}")]
pub struct InvalidChoice(pub u8);

impl TryFrom<u8> for Choice {
    type Error = InvalidChoice;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Choice::First),
            2 => Ok(Choice::Second),
            other => Err(InvalidChoice(other)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseKind {
    /// Always picks the larger true reward; ties go to the first option.
    Deterministic,
    /// Picks the first option with probability `1 / (1 + exp(β Δ))`, where
    /// `Δ` is the per-region reward difference.
    Boltzmann { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserModel {
    pub kind: ResponseKind,
    pub truth: GroundTruthUser,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub chosen: Choice,
    /// `None` when both options have identical features.
    pub cut: Option<Cut>,
    /// Model probability of the observed choice.
    pub prob_chosen: f64,
}

impl QueryOutcome {
    pub fn is_informative(&self) -> bool {
        self.cut.is_some()
    }
}

/// The cut induced by picking `chosen` out of the pair with the given
/// features, or `None` if the features coincide.
pub fn induced_cut(
    first: &[f64],
    second: &[f64],
    chosen: Choice,
    query: usize,
) -> Option<Cut> {
    let direction: Vec<f64> = match chosen {
        Choice::First => first.iter().zip(second).map(|(a, b)| a - b).collect(),
        Choice::Second => second.iter().zip(first).map(|(a, b)| a - b).collect(),
    };
    Cut::new(direction, query, chosen).ok()
}

impl UserModel {
    pub fn deterministic(truth: GroundTruthUser) -> Self {
        UserModel {
            kind: ResponseKind::Deterministic,
            truth,
        }
    }

    /// Boltzmann model using the β stored on the ground truth.
    pub fn boltzmann(truth: GroundTruthUser) -> Self {
        UserModel {
            kind: ResponseKind::Boltzmann { beta: truth.beta },
            truth,
        }
    }

    /// Probability of picking the first option, given the
    /// [`perceived_difference`](Self::perceived_difference) `delta_dot`.
    pub fn choice_probability(&self, delta_dot: f64) -> f64 {
        match self.kind {
            ResponseKind::Deterministic => {
                if delta_dot <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ResponseKind::Boltzmann { beta } => logistic(-beta * delta_dot),
        }
    }

    pub fn respond<R: Rng + ?Sized>(
        &self,
        first: &TourSet,
        second: &TourSet,
        env: &Environment,
        decays: &DecaySet,
        query: usize,
        rng: &mut R,
    ) -> Result<QueryOutcome, RewardError> {
        let phi1 = features(first, env, decays)?;
        let phi2 = features(second, env, decays)?;
        let w = &self.truth.weights;
        if w.len() != phi1.len() {
            return Err(RewardError::DimensionMismatch {
                expected: phi1.len(),
                found: w.len(),
            });
        }
        let (chosen, prob_chosen) = self.choose(phi1.as_slice(), phi2.as_slice(), rng);
        Ok(QueryOutcome {
            chosen,
            cut: induced_cut(phi1.as_slice(), phi2.as_slice(), chosen, query),
            prob_chosen,
        })
    }

    /// `(φ² − φ¹) · w*` divided by the number of regions.
    pub fn perceived_difference(&self, phi1: &[f64], phi2: &[f64]) -> f64 {
        let diff: Vec<f64> = phi2.iter().zip(phi1).map(|(a, b)| a - b).collect();
        dot(&diff, self.truth.weights.as_slice()) / self.truth.chosen_decay.len().max(1) as f64
    }

    /// Picks between two options given their features. Returns the choice
    /// and its model probability. Deterministic users consume no randomness.
    pub fn choose<R: Rng + ?Sized>(&self, phi1: &[f64], phi2: &[f64], rng: &mut R) -> (Choice, f64) {
        let delta_dot = self.perceived_difference(phi1, phi2);
        let p_first = self.choice_probability(delta_dot);
        let chosen = match self.kind {
            ResponseKind::Deterministic => {
                if p_first >= 1.0 {
                    Choice::First
                } else {
                    Choice::Second
                }
            }
            ResponseKind::Boltzmann { .. } => {
                if rng.random::<f64>() < p_first {
                    Choice::First
                } else {
                    Choice::Second
                }
            }
        };
        let prob_chosen = match chosen {
            Choice::First => p_first,
            Choice::Second => 1.0 - p_first,
        };
        (chosen, prob_chosen)
    }
}

/// `1 / (1 + exp(−x))` without overflow.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
