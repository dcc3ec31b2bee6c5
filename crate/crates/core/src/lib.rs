//! Planning budget-constrained multi-robot monitoring tours under a reward
//! that is learned from pairwise choices.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the
//! experiment harness, the HTTP service and the CLI live in the `tourpref`
//! companion crate.
//!
//! Module map:
//!
//! - [`scenario`]: environments (depot, regions, robot partitions, budgets)
//!   and the random instance generator.
//! - [`rewards`]: decaying basis functions, feature vectors and simulated
//!   ground-truth users.
//! - [`polyhedron`]: the weight polyhedron cut out by past answers, an exact
//!   simplex solver over it, and probable-region sampling.
//! - [`gtop`]: sequential cost-benefit greedy for the team orienteering
//!   problem with a decaying reward.
//! - [`users`]: deterministic and Boltzmann response models.
//! - [`querygen`]: max-regret queries and the competing query strategies.
//! - [`session`]: the learning loop and the richer-input baselines.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod gtop;
pub mod polyhedron;
pub mod querygen;
pub mod rewards;
pub mod scenario;
pub mod session;
pub mod users;

mod simplex;

pub use gtop::{solve_gtop, GreedyPlanner, Planner, Tour, TourSet};
pub use polyhedron::{Cut, LpResult, Polyhedron, Sense};
pub use rewards::{DecaySet, FeatureVector, GroundTruthUser, WeightVector};
pub use scenario::{Environment, Point, ScenarioConfig, VertexId};
pub use session::{LoopConfig, SessionState, Strategy};
pub use users::{Choice, QueryOutcome, UserModel};
