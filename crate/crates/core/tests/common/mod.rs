//! Independent oracles: exhaustive GTOP and LP vertex enumeration.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tourpref_core::gtop::within_budget;
use tourpref_core::rewards::{dot, features_from_counts};
use tourpref_core::scenario::{BudgetRule, RegionSpec};
use tourpref_core::{
    DecaySet, Environment, Planner, Point, Polyhedron, Tour, TourSet, VertexId, WeightVector,
};

/// A small random environment with at most `max_vertices` non-depot
/// vertices (replicas included).
pub fn tiny_env(seed: u64, robots: usize, max_vertices: usize) -> Environment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_points = (max_vertices / robots).max(1);
    let n_points = rng.random_range(1..=max_points);
    let n_regions = rng.random_range(1..=n_points.min(3));
    let mut regions: Vec<RegionSpec> = (0..n_regions)
        .map(|id| RegionSpec { id: id as u64, points: Vec::new() })
        .collect();
    for p in 0..n_points {
        let r = if p < n_regions { p } else { rng.random_range(0..n_regions) };
        regions[r]
            .points
            .push(Point::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)));
    }
    let factor = rng.random_range(0.8..2.5);
    Environment::build(Point::new(0.0, 0.0), regions, robots, BudgetRule::Factor(factor)).unwrap()
}

pub fn random_weights(dim: usize, rng: &mut impl Rng) -> WeightVector {
    WeightVector((0..dim).map(|_| rng.random_range(0.0..1.0)).collect())
}

fn counts_of(env: &Environment, visited: &[VertexId]) -> Vec<u32> {
    let mut counts = vec![0u32; env.num_regions()];
    for &v in visited {
        if let Some(r) = env.region_of(v) {
            counts[r] += 1;
        }
    }
    counts
}

/// `w · φ(S)` for a multiset of visited vertices.
pub fn set_reward(env: &Environment, visited: &[VertexId], w: &WeightVector, decays: &DecaySet) -> f64 {
    dot(features_from_counts(&counts_of(env, visited), decays).as_slice(), w.as_slice())
}

/// Every subset of a robot's partition that fits its budget, with a
/// shortest visiting order (Held-Karp).
fn feasible_routes(env: &Environment, robot: usize) -> Vec<Vec<VertexId>> {
    let part = env.partition(robot);
    let n = part.len();
    let depot = env.depot();
    let full = 1usize << n;
    let mut best = vec![vec![f64::INFINITY; n]; full];
    let mut prev = vec![vec![usize::MAX; n]; full];
    for j in 0..n {
        best[1 << j][j] = env.cost(depot, part[j]);
    }
    for mask in 1..full {
        for last in 0..n {
            let here = best[mask][last];
            if !here.is_finite() {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let c = here + env.cost(part[last], part[next]);
                if c < best[m2][next] {
                    best[m2][next] = c;
                    prev[m2][next] = last;
                }
            }
        }
    }
    let mut out = vec![Vec::new()];
    for mask in 1..full {
        let (mut last, mut len) = (usize::MAX, f64::INFINITY);
        for j in 0..n {
            let c = best[mask][j] + env.cost(part[j], depot);
            if c < len {
                len = c;
                last = j;
            }
        }
        if !within_budget(len, env.budget(robot)) {
            continue;
        }
        let mut order = Vec::new();
        let mut m = mask;
        while last != usize::MAX {
            order.push(part[last]);
            let p = prev[m][last];
            m &= !(1 << last);
            last = p;
        }
        order.reverse();
        out.push(order);
    }
    out
}

/// Exhaustive GTOP: the best joint choice of feasible routes.
pub fn brute_force_gtop(env: &Environment, w: &WeightVector, decays: &DecaySet) -> (TourSet, f64) {
    let routes: Vec<Vec<Vec<VertexId>>> =
        (0..env.num_robots()).map(|r| feasible_routes(env, r)).collect();
    let mut pick = vec![0usize; routes.len()];
    let mut best: Option<(Vec<usize>, f64)> = None;
    loop {
        let visited: Vec<VertexId> =
            pick.iter().zip(&routes).flat_map(|(&i, rs)| rs[i].iter().copied()).collect();
        let value = set_reward(env, &visited, w, decays);
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((pick.clone(), value));
        }
        let mut r = 0;
        loop {
            if r == pick.len() {
                let (choice, value) = best.unwrap();
                let tours = choice
                    .iter()
                    .enumerate()
                    .map(|(robot, &i)| Tour::from_stops(env, robot, &routes[robot][i]))
                    .collect();
                return (TourSet { tours }, value);
            }
            pick[r] += 1;
            if pick[r] < routes[r].len() {
                break;
            }
            pick[r] = 0;
            r += 1;
        }
    }
}

pub struct BruteForcePlanner {
    pub decays: DecaySet,
}

impl Planner for BruteForcePlanner {
    fn plan(&self, env: &Environment, weights: &WeightVector) -> TourSet {
        brute_force_gtop(env, weights, &self.decays).0
    }
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}

/// Optimum of `max c · w` over the polyhedron by enumerating every vertex.
pub fn vertex_enumeration_max(c: &[f64], poly: &Polyhedron) -> f64 {
    let d = poly.dim();
    // rows a · w ≥ b
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        rows.push((e.clone(), 0.0));
        e[i] = -1.0;
        rows.push((e, -1.0));
    }
    for cut in poly.cuts() {
        rows.push((cut.direction.clone(), 0.0));
    }
    let mut combos = Vec::new();
    combinations(rows.len(), d, 0, &mut Vec::new(), &mut combos);
    let mut best = f64::NEG_INFINITY;
    for combo in combos {
        let a = combo.iter().map(|&i| rows[i].0.clone()).collect();
        let b = combo.iter().map(|&i| rows[i].1).collect();
        let Some(x) = solve_square(a, b) else { continue };
        let feasible = rows.iter().all(|(a, b)| dot(a, &x) >= b - 1e-9);
        if feasible {
            best = best.max(dot(c, &x));
        }
    }
    best
}
