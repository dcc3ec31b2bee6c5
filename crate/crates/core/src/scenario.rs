//! Monitoring environments: a depot, regions of interest, robot partitions
//! and travel budgets on the complete Euclidean graph.
//!
//! Every sampled location is replicated once per robot, so a vertex encodes
//! both *where* and *who*: robot `k` may only visit vertices of its own
//! partition, and all replicas of a location carry the same region index.
//! The depot belongs to no region and no partition.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitDisc};
use serde::{Deserialize, Serialize};

pub type VertexId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn key(&self) -> (u64, u64) {
        // +0.0 and -0.0 must collide
        ((self.x + 0.0).to_bits(), (self.y + 0.0).to_bits())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub position: Point,
    /// Index into [`Environment::regions`]; `None` only for the depot.
    pub region: Option<usize>,
    /// Owning robot; `None` only for the depot.
    pub robot: Option<usize>,
}

/// A region as supplied by a caller: an external id and its sampled points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub id: u64,
    pub points: Vec<Point>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: u64,
    pub points: Vec<Point>,
    /// Mean of `points`.
    pub center: Point,
    /// All replicas of all points, across every robot partition.
    pub vertices: Vec<VertexId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BudgetRule {
    /// Every robot gets `factor` times the depot-to-furthest-region-mean distance.
    Factor(f64),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("at least one robot is required")]
    NoRobots,
    #[error("at least one region is required")]
    NoRegions,
    #[error("region {region} has no points")]
    EmptyRegion { region: u64 },
    #[error("region id {region} is used more than once")]
    DuplicateRegion { region: u64 },
    #[error("point ({x}, {y}) lies in both region {first} and region {second}")]
    RegionOverlap {
        first: u64,
        second: u64,
        x: f64,
        y: f64,
    },
    #[error("region {region} has a non-finite coordinate")]
    NonFinitePoint { region: u64 },
    #[error("depot has a non-finite coordinate")]
    NonFiniteDepot,
    #[error("expected {expected} budgets, found {found}")]
    BudgetCount { expected: usize, found: usize },
    #[error("budget of robot {robot} must be positive and finite, got {value}")]
    InvalidBudget { robot: usize, value: f64 },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("invalid scenario config: {0}")]
    InvalidConfig(&'static str),
}

/// A validated monitoring environment. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    vertices: Vec<Vertex>,
    depot: VertexId,
    regions: Vec<Region>,
    partitions: Vec<Vec<VertexId>>,
    budgets: Vec<f64>,
    budget_rule: BudgetRule,
}

impl Environment {
    /// Builds the replicated vertex set and checks every invariant.
    ///
    /// Vertex ids are assigned depot first, then region by region, point by
    /// point, robot by robot.
    pub fn build(
        depot: Point,
        regions: Vec<RegionSpec>,
        num_robots: usize,
        budget_rule: BudgetRule,
    ) -> Result<Self, ScenarioError> {
        if num_robots == 0 {
            return Err(ScenarioError::NoRobots);
        }
        if regions.is_empty() {
            return Err(ScenarioError::NoRegions);
        }
        if !depot.is_finite() {
            return Err(ScenarioError::NonFiniteDepot);
        }

        let mut ids = BTreeMap::new();
        let mut owner: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        for spec in &regions {
            if ids.insert(spec.id, ()).is_some() {
                return Err(ScenarioError::DuplicateRegion { region: spec.id });
            }
            if spec.points.is_empty() {
                return Err(ScenarioError::EmptyRegion { region: spec.id });
            }
            for p in &spec.points {
                if !p.is_finite() {
                    return Err(ScenarioError::NonFinitePoint { region: spec.id });
                }
                if let Some(&first) = owner.get(&p.key()) {
                    if first != spec.id {
                        return Err(ScenarioError::RegionOverlap {
                            first,
                            second: spec.id,
                            x: p.x,
                            y: p.y,
                        });
                    }
                }
                owner.insert(p.key(), spec.id);
            }
        }

        let mut vertices = Vec::new();
        vertices.push(Vertex {
            id: 0,
            position: depot,
            region: None,
            robot: None,
        });
        let mut partitions = alloc::vec![Vec::new(); num_robots];
        let mut built = Vec::with_capacity(regions.len());
        for (index, spec) in regions.into_iter().enumerate() {
            let mut members = Vec::with_capacity(spec.points.len() * num_robots);
            for p in &spec.points {
                for (robot, partition) in partitions.iter_mut().enumerate() {
                    let id = vertices.len();
                    vertices.push(Vertex {
                        id,
                        position: *p,
                        region: Some(index),
                        robot: Some(robot),
                    });
                    partition.push(id);
                    members.push(id);
                }
            }
            let n = spec.points.len() as f64;
            let (sx, sy) = spec
                .points
                .iter()
                .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
            built.push(Region {
                id: spec.id,
                center: Point::new(sx / n, sy / n),
                points: spec.points,
                vertices: members,
            });
        }

        let mut env = Environment {
            vertices,
            depot: 0,
            regions: built,
            partitions,
            budgets: Vec::new(),
            budget_rule: budget_rule.clone(),
        };
        env.budgets = match budget_rule {
            BudgetRule::Factor(factor) => {
                let b = factor * env.max_region_distance();
                alloc::vec![b; num_robots]
            }
            BudgetRule::Explicit(b) => {
                if b.len() != num_robots {
                    return Err(ScenarioError::BudgetCount {
                        expected: num_robots,
                        found: b.len(),
                    });
                }
                b
            }
        };
        for (robot, &value) in env.budgets.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ScenarioError::InvalidBudget { robot, value });
            }
        }
        Ok(env)
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, id: VertexId) -> Result<&Vertex, ScenarioError> {
        self.vertices.get(id).ok_or(ScenarioError::UnknownVertex(id))
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn depot(&self) -> VertexId {
        self.depot
    }

    pub fn depot_position(&self) -> Point {
        self.vertices[self.depot].position
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn num_robots(&self) -> usize {
        self.partitions.len()
    }

    /// Vertices robot `robot` may visit, in ascending id order.
    pub fn partition(&self, robot: usize) -> &[VertexId] {
        &self.partitions[robot]
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn budget(&self, robot: usize) -> f64 {
        self.budgets[robot]
    }

    pub fn budget_rule(&self) -> &BudgetRule {
        &self.budget_rule
    }

    /// Region index of `v`, `None` for the depot.
    pub fn region_of(&self, v: VertexId) -> Option<usize> {
        self.vertices[v].region
    }

    /// Edge cost without bounds checking beyond slice indexing.
    #[inline]
    pub fn cost(&self, u: VertexId, v: VertexId) -> f64 {
        if u == v {
            return 0.0;
        }
        self.vertices[u].position.distance(&self.vertices[v].position)
    }

    /// Euclidean edge cost `l(u, v)`.
    pub fn distance(&self, u: VertexId, v: VertexId) -> Result<f64, ScenarioError> {
        let a = self.vertex(u)?;
        let b = self.vertex(v)?;
        if u == v {
            return Ok(0.0);
        }
        Ok(a.position.distance(&b.position))
    }

    /// Distance from the depot to the mean location of region `i`.
    pub fn region_distance(&self, i: usize) -> f64 {
        self.depot_position().distance(&self.regions[i].center)
    }

    pub fn max_region_distance(&self) -> f64 {
        (0..self.regions.len())
            .map(|i| self.region_distance(i))
            .fold(0.0, f64::max)
    }

    /// Region specs as supplied, without replication.
    pub fn region_specs(&self) -> Vec<RegionSpec> {
        self.regions
            .iter()
            .map(|r| RegionSpec {
                id: r.id,
                points: r.points.clone(),
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min: Point,
    pub max: Point,
}

impl Default for Arena {
    fn default() -> Self {
        Arena {
            min: Point::new(0.0, 0.0),
            max: Point::new(100.0, 100.0),
        }
    }
}

/// Parameters for [`generate_random_scenario`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_regions: usize,
    pub min_points: usize,
    pub max_points: usize,
    pub num_robots: usize,
    pub budget_factor: f64,
    pub arena: Arena,
    /// Depot location; `None` puts it at the arena's lower-left corner.
    pub depot: Option<Point>,
    /// Points of a region are scattered uniformly in a disc of this radius
    /// around the region center.
    pub region_radius: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_regions: 20,
            min_points: 1,
            max_points: 5,
            num_robots: 4,
            budget_factor: 2.0,
            arena: Arena::default(),
            depot: None,
            region_radius: 4.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.num_regions == 0 {
            return Err(ScenarioError::InvalidConfig("num_regions must be at least 1"));
        }
        if self.num_robots == 0 {
            return Err(ScenarioError::InvalidConfig("num_robots must be at least 1"));
        }
        if self.min_points < 1 || self.max_points > 5 || self.min_points > self.max_points {
            return Err(ScenarioError::InvalidConfig(
                "points per region must be a range within [1, 5]",
            ));
        }
        if !(self.budget_factor > 0.0 && self.budget_factor.is_finite()) {
            return Err(ScenarioError::InvalidConfig("budget_factor must be positive"));
        }
        let a = &self.arena;
        if !(a.min.is_finite() && a.max.is_finite() && a.min.x < a.max.x && a.min.y < a.max.y) {
            return Err(ScenarioError::InvalidConfig("arena must be a non-empty box"));
        }
        if !(self.region_radius >= 0.0 && self.region_radius.is_finite()) {
            return Err(ScenarioError::InvalidConfig("region_radius must be non-negative"));
        }
        Ok(())
    }

    pub fn depot_position(&self) -> Point {
        self.depot.unwrap_or(self.arena.min)
    }
}

/// Samples region centers uniformly in the arena and scatters each region's
/// points around its center. Deterministic in `config.seed`.
pub fn generate_random_scenario(config: &ScenarioConfig) -> Result<Environment, ScenarioError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let a = config.arena;
    let mut regions = Vec::with_capacity(config.num_regions);
    for id in 0..config.num_regions {
        let center = Point::new(
            rng.random_range(a.min.x..a.max.x),
            rng.random_range(a.min.y..a.max.y),
        );
        let count = rng.random_range(config.min_points..=config.max_points);
        let points = (0..count)
            .map(|_| {
                let [dx, dy]: [f64; 2] = UnitDisc.sample(&mut rng);
                Point::new(
                    center.x + dx * config.region_radius,
                    center.y + dy * config.region_radius,
                )
            })
            .collect();
        regions.push(RegionSpec {
            id: id as u64,
            points,
        });
    }
    Environment::build(
        config.depot_position(),
        regions,
        config.num_robots,
        BudgetRule::Factor(config.budget_factor),
    )
}
