//! Cooperative game abstractions.
//!
//! Characteristic functions are represented either exactly, as a dense
//! table over all `2^n` coalitions ([`Game`]), or as an order-k
//! interaction model ([`CgaModel`]) whose value on a coalition is the sum
//! of the interaction weights of its subsets. On top of those sit:
//!
//! - [`shapley`]: closed-form and brute-force Shapley values;
//! - [`identification`]: design matrices, rank-based identifiability and
//!   the misspecification projection;
//! - [`estimation`]: least-squares, low-rank pairwise and Bradley-Terry fits;
//! - [`analysis`]: the Shapley matrix, its spectrum and the error bounds;
//! - [`allocation`]: least-core deficits, sampling and subgradient checks;
//! - [`io`]: CSV and JSON file formats.

pub mod allocation;
pub mod analysis;
pub mod coalition;
pub mod error;
pub mod estimation;
pub mod game;
pub mod identification;
pub mod io;
mod linalg;
pub mod shapley;

pub use coalition::{Coalition, PlayerUniverse};
pub use error::{Error, Result};
pub use game::{random_cga, weights_from_game, Allocation, CgaModel, CharacteristicFunction, Game};
pub use allocation::{exact_max_deficit, improve_allocation, sampled_least_core_value, LeastCoreEstimate, SampleBudget};
pub use estimation::{FitConfig, FitMeta, Fitted, MatchupDataset, PerformanceDataset};
pub use shapley::{group_shapley, shapley_bruteforce, shapley_from_weights};
