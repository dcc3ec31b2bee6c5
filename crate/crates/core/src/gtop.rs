//! Team orienteering with a decaying reward.
//!
//! Robots are planned one after another in ascending index order. Each robot
//! runs a cost-benefit greedy against the visit counts left by the robots
//! before it, so repeat visits to a region are valued with the decayed
//! increments `γ^ψ`, `γ^(ψ+1)`, ….

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rewards::{marginal_gain, DecaySet, WeightVector};
use crate::scenario::{Environment, VertexId};

const GAIN_EPS: f64 = 1e-12;
const MIN_INSERTION_COST: f64 = 1e-12;
const TWO_OPT_EPS: f64 = 1e-10;

/// Budget check shared by the solver and all validators.
pub fn within_budget(length: f64, budget: f64) -> bool {
    length <= budget * (1.0 + 1e-12) + 1e-12
}

/// A closed walk `⟨s, v₁, …, v_q, s⟩` for one robot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub robot: usize,
    pub vertices: Vec<VertexId>,
    pub length: f64,
}

impl Tour {
    pub fn empty(env: &Environment, robot: usize) -> Self {
        Tour {
            robot,
            vertices: vec![env.depot(), env.depot()],
            length: 0.0,
        }
    }

    pub fn from_stops(env: &Environment, robot: usize, stops: &[VertexId]) -> Self {
        let mut vertices = Vec::with_capacity(stops.len() + 2);
        vertices.push(env.depot());
        vertices.extend_from_slice(stops);
        vertices.push(env.depot());
        let length = route_length(env, &vertices);
        Tour {
            robot,
            vertices,
            length,
        }
    }

    /// Interior vertices, without the depot at either end.
    pub fn stops(&self) -> &[VertexId] {
        &self.vertices[1..self.vertices.len() - 1]
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() <= 2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TourSet {
    pub tours: Vec<Tour>,
}

impl TourSet {
    pub fn empty(env: &Environment) -> Self {
        TourSet {
            tours: (0..env.num_robots()).map(|k| Tour::empty(env, k)).collect(),
        }
    }

    /// Checks every per-tour invariant against `env`.
    pub fn validate(&self, env: &Environment) -> Result<(), TourError> {
        if self.tours.len() != env.num_robots() {
            return Err(TourError::TourCount {
                expected: env.num_robots(),
                found: self.tours.len(),
            });
        }
        for (k, tour) in self.tours.iter().enumerate() {
            if tour.robot != k {
                return Err(TourError::RobotOrder { position: k, robot: tour.robot });
            }
            let v = &tour.vertices;
            if v.len() < 2 || v[0] != env.depot() || v[v.len() - 1] != env.depot() {
                return Err(TourError::NotClosed { robot: k });
            }
            let mut seen = vec![false; env.num_vertices()];
            for &u in tour.stops() {
                let vertex = env.vertex(u).map_err(|_| TourError::UnknownVertex(u))?;
                if vertex.robot != Some(k) {
                    return Err(TourError::OutsidePartition { robot: k, vertex: u });
                }
                if core::mem::replace(&mut seen[u], true) {
                    return Err(TourError::Repeated { robot: k, vertex: u });
                }
            }
            let length = route_length(env, v);
            if (length - tour.length).abs() > 1e-9 * (1.0 + length) {
                return Err(TourError::StaleLength { robot: k });
            }
            if !within_budget(length, env.budget(k)) {
                return Err(TourError::OverBudget {
                    robot: k,
                    length,
                    budget: env.budget(k),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TourError {
    #[error("expected {expected} tours, found {found}")]
    TourCount { expected: usize, found: usize },
    #[error("tour at position {position} belongs to robot {robot}")]
    RobotOrder { position: usize, robot: usize },
    #[error("tour of robot {robot} does not start and end at the depot")]
    NotClosed { robot: usize },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("robot {robot} visits vertex {vertex} outside its partition")]
    OutsidePartition { robot: usize, vertex: VertexId },
    #[error("robot {robot} visits vertex {vertex} twice")]
    Repeated { robot: usize, vertex: VertexId },
    #[error("stored length of robot {robot}'s tour is stale")]
    StaleLength { robot: usize },
    #[error("robot {robot} travels {length} over budget {budget}")]
    OverBudget { robot: usize, length: f64, budget: f64 },
}

/// Anything that turns a weight vector into a feasible tour set.
pub trait Planner {
    fn plan(&self, env: &Environment, weights: &WeightVector) -> TourSet;
}

impl<P: Planner + ?Sized> Planner for &P {
    fn plan(&self, env: &Environment, weights: &WeightVector) -> TourSet {
        (**self).plan(env, weights)
    }
}

/// The sequential cost-benefit greedy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyPlanner {
    pub decays: DecaySet,
}

impl GreedyPlanner {
    pub fn new(decays: DecaySet) -> Self {
        GreedyPlanner { decays }
    }
}

impl Planner for GreedyPlanner {
    fn plan(&self, env: &Environment, weights: &WeightVector) -> TourSet {
        solve_gtop(env, weights, &self.decays)
    }
}

pub fn route_length(env: &Environment, route: &[VertexId]) -> f64 {
    route.windows(2).map(|e| env.cost(e[0], e[1])).sum()
}

pub fn tour_length(tour: &Tour, env: &Environment) -> f64 {
    route_length(env, &tour.vertices)
}

/// Plans robots `0..m` in order, feeding each the visit counts accumulated
/// so far.
pub fn solve_gtop(env: &Environment, weights: &WeightVector, decays: &DecaySet) -> TourSet {
    solve_tracked(env, weights, decays).0
}

pub(crate) fn solve_tracked(
    env: &Environment,
    weights: &WeightVector,
    decays: &DecaySet,
) -> (TourSet, Vec<u32>) {
    let mut counts = vec![0u32; env.num_regions()];
    let mut tours = Vec::with_capacity(env.num_robots());
    for robot in 0..env.num_robots() {
        let tour = single_op(env, robot, weights, decays, &counts);
        for &v in tour.stops() {
            if let Some(region) = env.region_of(v) {
                counts[region] += 1;
            }
        }
        tours.push(tour);
    }
    (TourSet { tours }, counts)
}

/// One robot's tour: repeatedly insert the vertex with the best ratio of
/// marginal reward to cheapest-insertion cost while the tour, tightened by
/// 2-opt, still fits the budget. The result is compared against the best
/// single-vertex round trip and the better of the two is returned.
pub fn single_op(
    env: &Environment,
    robot: usize,
    weights: &WeightVector,
    decays: &DecaySet,
    psi_offset: &[u32],
) -> Tour {
    let w = weights.as_slice();
    let budget = env.budget(robot);
    let depot = env.depot();
    let region = |v: VertexId| env.region_of(v).expect("partition vertices have regions");

    let table = CostTable::new(env, robot);
    let mut counts = psi_offset.to_vec();
    let mut route = vec![depot, depot];
    let mut length = 0.0;
    let mut collected = 0.0;
    let mut open: Vec<VertexId> = env.partition(robot).to_vec();

    struct Candidate {
        ratio: f64,
        vertex: VertexId,
        gain: f64,
        position: usize,
        delta: f64,
    }

    loop {
        let mut scored = Vec::with_capacity(open.len());
        let mut dropped = Vec::new();
        for &v in &open {
            let i = region(v);
            let gain = marginal_gain(i, counts[i], w, decays);
            if gain <= GAIN_EPS {
                // gains only shrink as counts grow
                dropped.push(v);
                continue;
            }
            let (position, delta) = cheapest_insertion(&table, &route, v);
            scored.push(Candidate {
                ratio: gain / delta.max(MIN_INSERTION_COST),
                vertex: v,
                gain,
                position,
                delta,
            });
        }
        scored.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.vertex.cmp(&b.vertex)));

        let mut accepted = None;
        for c in &scored {
            if within_budget(length + c.delta, budget) {
                route.insert(c.position, c.vertex);
                accepted = Some(c);
                break;
            }
            let mut trial = route.clone();
            trial.insert(c.position, c.vertex);
            two_opt(&table, &mut trial);
            if within_budget(table.route_length(&trial), budget) {
                route = trial;
                accepted = Some(c);
                break;
            }
            // a superset of the current stops only gets longer
            dropped.push(c.vertex);
        }
        open.retain(|v| !dropped.contains(v));
        let Some(c) = accepted else {
            break;
        };
        two_opt(&table, &mut route);
        length = table.route_length(&route);
        counts[region(c.vertex)] += 1;
        collected += c.gain;
        open.retain(|&v| v != c.vertex);
    }

    let best_single = env
        .partition(robot)
        .iter()
        .filter(|&&v| within_budget(2.0 * env.cost(depot, v), budget))
        .map(|&v| {
            let i = region(v);
            (v, marginal_gain(i, psi_offset[i], w, decays))
        })
        .fold(None, |best: Option<(VertexId, f64)>, (v, g)| match best {
            Some((_, bg)) if bg >= g => best,
            _ => Some((v, g)),
        });
    if let Some((v, g)) = best_single {
        if g > collected + GAIN_EPS {
            return Tour::from_stops(env, robot, &[v]);
        }
    }

    Tour {
        robot,
        vertices: route,
        length,
    }
}

/// Edge costs among the depot and one robot's partition.
struct CostTable {
    local: Vec<usize>,
    n: usize,
    costs: Vec<f64>,
}

impl CostTable {
    fn new(env: &Environment, robot: usize) -> Self {
        let mut members = vec![env.depot()];
        members.extend_from_slice(env.partition(robot));
        let mut local = vec![usize::MAX; env.num_vertices()];
        for (i, &v) in members.iter().enumerate() {
            local[v] = i;
        }
        let n = members.len();
        let mut costs = vec![0.0; n * n];
        for (i, &u) in members.iter().enumerate() {
            for (j, &v) in members.iter().enumerate() {
                costs[i * n + j] = env.cost(u, v);
            }
        }
        CostTable { local, n, costs }
    }

    fn cost(&self, u: VertexId, v: VertexId) -> f64 {
        self.costs[self.local[u] * self.n + self.local[v]]
    }

    fn route_length(&self, route: &[VertexId]) -> f64 {
        route.windows(2).map(|e| self.cost(e[0], e[1])).sum()
    }
}

/// Best position to insert `v` into `route` and the length increase.
fn cheapest_insertion(table: &CostTable, route: &[VertexId], v: VertexId) -> (usize, f64) {
    let mut best = (1, f64::INFINITY);
    for (i, e) in route.windows(2).enumerate() {
        let delta = table.cost(e[0], v) + table.cost(v, e[1]) - table.cost(e[0], e[1]);
        if delta < best.1 {
            best = (i + 1, delta);
        }
    }
    best
}

/// First-improvement 2-opt with both depot endpoints held fixed.
fn two_opt(table: &CostTable, route: &mut [VertexId]) {
    let n = route.len();
    if n < 5 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..n - 2 {
            for j in i + 1..n - 1 {
                let (a, b) = (route[i - 1], route[i]);
                let (c, d) = (route[j], route[j + 1]);
                let delta = table.cost(a, c) + table.cost(b, d) - table.cost(a, b) - table.cost(c, d);
                if delta < -TWO_OPT_EPS {
                    route[i..=j].reverse();
                    improved = true;
                }
            }
        }
    }
}
