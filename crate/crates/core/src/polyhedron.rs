//! Weight-space geometry.
//!
//! Every answered query contributes a halfspace `d · w ≥ 0` with
//! `d = φ(preferred) − φ(rejected)`. Intersected with the unit box these give
//! the polyhedron of weights consistent with the answers. Note that `w = 0`
//! satisfies every cut, so the polyhedron is never empty, even under
//! contradictory answers.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rewards::{dot, WeightVector};
use crate::simplex::{SimplexError, Tableau};
use crate::users::Choice;

/// Both Lemma-style LPs must exceed this for a cut to count as valid.
pub const VALID_CUT_EPS: f64 = 1e-7;

/// Feasibility slack used when checking a point against the constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cut direction has no nonzero entry")]
    ZeroDirection,
    #[error("cut probability {0} outside (0.5, 1]")]
    InvalidProbability(f64),
    #[error("negated count {negated} exceeds total {total}")]
    InvalidCount { negated: usize, total: usize },
    #[error("linear program stalled")]
    Stalled,
}

impl From<SimplexError> for PolyError {
    fn from(_: SimplexError) -> Self {
        PolyError::Stalled
    }
}

/// The halfspace `direction · w ≥ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub direction: Vec<f64>,
    /// Iteration of the query that produced the cut.
    pub query: usize,
    pub chosen: Choice,
    /// Whether this is the complement of the observed answer.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub negated: bool,
}

impl Cut {
    pub fn new(direction: Vec<f64>, query: usize, chosen: Choice) -> Result<Self, PolyError> {
        if direction.iter().all(|&d| d == 0.0) {
            return Err(PolyError::ZeroDirection);
        }
        Ok(Cut {
            direction,
            query,
            chosen,
            negated: false,
        })
    }

    /// `−d · w ≥ 0`, closed like the original.
    pub fn negated(&self) -> Cut {
        Cut {
            direction: self.direction.iter().map(|d| -d).collect(),
            query: self.query,
            chosen: self.chosen,
            negated: !self.negated,
        }
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn is_satisfied(&self, w: &[f64], tol: f64) -> bool {
        dot(&self.direction, w) >= -tol
    }
}

/// `[0, 1]^D` intersected with a list of cuts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    dim: usize,
    cuts: Vec<Cut>,
}

impl Polyhedron {
    pub fn unit_box(dim: usize) -> Self {
        Polyhedron {
            dim,
            cuts: Vec::new(),
        }
    }

    pub fn with_cuts(dim: usize, cuts: Vec<Cut>) -> Result<Self, PolyError> {
        let mut poly = Polyhedron::unit_box(dim);
        for cut in cuts {
            poly.push(cut)?;
        }
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    /// A new polyhedron with `cut` added; `self` is left untouched.
    pub fn add_cut(&self, cut: Cut) -> Result<Polyhedron, PolyError> {
        let mut next = self.clone();
        next.push(cut)?;
        Ok(next)
    }

    pub(crate) fn push(&mut self, cut: Cut) -> Result<(), PolyError> {
        if cut.dim() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: cut.dim(),
            });
        }
        self.cuts.push(cut);
        Ok(())
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.len() == self.dim
            && w.iter().all(|&x| x >= -tol && x <= 1.0 + tol)
            && self.cuts.iter().all(|c| c.is_satisfied(w, tol))
    }

    fn tableau(&self) -> Tableau {
        // w_j ≤ 1 for every coordinate, then −d · w ≤ 0 for every cut.
        let d = self.dim;
        let rows = d + self.cuts.len();
        let mut a = alloc::vec![0.0; rows * d];
        let mut rhs = alloc::vec![0.0; rows];
        for j in 0..d {
            a[j * d + j] = 1.0;
            rhs[j] = 1.0;
        }
        for (k, cut) in self.cuts.iter().enumerate() {
            let row = &mut a[(d + k) * d..(d + k + 1) * d];
            for (x, &c) in row.iter_mut().zip(&cut.direction) {
                *x = -c;
            }
        }
        Tableau::new(d, &a, &rhs)
    }

    fn check_dim(&self, len: usize) -> Result<(), PolyError> {
        if len != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: len,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    /// A vertex of the polyhedron.
    pub optimizer: WeightVector,
    pub value: f64,
}

/// Exact vertex optimum of `objective · w` over `poly`.
pub fn solve_lp(objective: &[f64], poly: &Polyhedron, sense: Sense) -> Result<LpResult, PolyError> {
    solve_lp_lexicographic(&[(objective, sense)], poly)
}

/// Optimizes the objectives in priority order: each later objective only
/// breaks ties left by the earlier ones. `value` reports the first objective.
pub fn solve_lp_lexicographic(
    objectives: &[(&[f64], Sense)],
    poly: &Polyhedron,
) -> Result<LpResult, PolyError> {
    let mut signed: Vec<Vec<f64>> = Vec::with_capacity(objectives.len());
    for &(c, sense) in objectives {
        poly.check_dim(c.len())?;
        signed.push(match sense {
            Sense::Maximize => c.to_vec(),
            Sense::Minimize => c.iter().map(|x| -x).collect(),
        });
    }
    let refs: Vec<&[f64]> = signed.iter().map(Vec::as_slice).collect();
    let mut x = poly.tableau().maximize_lexicographic(&refs)?;
    for v in &mut x {
        *v = v.clamp(0.0, 1.0);
    }
    let value = objectives.first().map_or(0.0, |(c, _)| dot(c, &x));
    Ok(LpResult {
        optimizer: WeightVector(x),
        value,
    })
}

/// Whether the hyperplane `direction · w = 0` passes through the interior of
/// `poly`: both `max d·w` and `max −d·w` must be strictly positive.
pub fn is_valid_cut(direction: &[f64], poly: &Polyhedron) -> Result<bool, PolyError> {
    Ok(cut_extent(direction, poly)?.is_valid())
}

/// The two LP values behind [`is_valid_cut`], with their witnesses.
#[derive(Clone, Debug, PartialEq)]
pub struct CutExtent {
    pub positive: LpResult,
    pub negative: LpResult,
}

impl CutExtent {
    pub fn is_valid(&self) -> bool {
        self.positive.value > VALID_CUT_EPS && self.negative.value > VALID_CUT_EPS
    }
}

pub fn cut_extent(direction: &[f64], poly: &Polyhedron) -> Result<CutExtent, PolyError> {
    let positive = solve_lp(direction, poly, Sense::Maximize)?;
    let flipped: Vec<f64> = direction.iter().map(|d| -d).collect();
    let negative = solve_lp(&flipped, poly, Sense::Maximize)?;
    Ok(CutExtent { positive, negative })
}

/// `q^(total − negated) · (1 − q)^negated`: the probability of a region built
/// by negating `negated` of `total` cuts, each answered correctly with
/// probability `q`.
pub fn region_probability(negated: usize, total: usize, q: f64) -> Result<f64, PolyError> {
    if !(q > 0.5 && q <= 1.0) {
        return Err(PolyError::InvalidProbability(q));
    }
    if negated > total {
        return Err(PolyError::InvalidCount { negated, total });
    }
    Ok(libm::pow(q, (total - negated) as f64) * libm::pow(1.0 - q, negated as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbableRegion {
    pub polyhedron: Polyhedron,
    pub probability: f64,
    pub negated: usize,
}

/// Samples `n` polyhedra by independently negating each cut `i` with
/// probability `1 − cut_probability(i, cut)`.
pub fn probable_regions<R, F>(
    base: &Polyhedron,
    n: usize,
    cut_probability: F,
    rng: &mut R,
) -> Vec<ProbableRegion>
where
    R: Rng + ?Sized,
    F: Fn(usize, &Cut) -> f64,
{
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut poly = Polyhedron::unit_box(base.dim);
        let mut probability = 1.0;
        let mut negated = 0;
        for (i, cut) in base.cuts.iter().enumerate() {
            let p = cut_probability(i, cut).clamp(0.0, 1.0);
            if rng.random_bool(1.0 - p) {
                poly.cuts.push(cut.negated());
                probability *= 1.0 - p;
                negated += 1;
            } else {
                poly.cuts.push(cut.clone());
                probability *= p;
            }
        }
        out.push(ProbableRegion {
            polyhedron: poly,
            probability,
            negated,
        });
    }
    out
}

/// Draws `count` points uniformly from `poly` by rejection from the box.
///
/// After `max_attempts` box draws the remaining points are filled with plain
/// box samples and the second return value is `true`.
pub fn sample_uniform<R: Rng + ?Sized>(
    poly: &Polyhedron,
    count: usize,
    max_attempts: usize,
    rng: &mut R,
) -> (Vec<WeightVector>, bool) {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < max_attempts {
        attempts += 1;
        let w: Vec<f64> = (0..poly.dim).map(|_| rng.random::<f64>()).collect();
        if poly.cuts.iter().all(|c| c.is_satisfied(&w, 0.0)) {
            out.push(WeightVector(w));
        }
    }
    let fell_back = out.len() < count;
    while out.len() < count {
        out.push(WeightVector((0..poly.dim).map(|_| rng.random::<f64>()).collect()));
    }
    (out, fell_back)
}
