//! The Shapley linear map, its spectrum, and how errors in a
//! characteristic function propagate into Shapley values.

mod bounds;
mod coverage;
mod matrix;
mod montecarlo;

pub use bounds::{l1_bounds, l2_worst_bound, BoundCheck, BoundOutcome, L1Report};
pub use coverage::pmac_coverage;
pub use matrix::{shapley_matrix, shapley_matrix_entry, spectrum, top_singular_direction, ShapleyMatrix, SpectrumReport};
pub use montecarlo::{mc_average_case, McReport, NoiseExperiment, NormKind, RadiusLaw};

/// Largest `n` for which the `n x 2^n` Shapley matrix is materialized.
pub const MATRIX_LIMIT: usize = 14;
/// Largest `n` accepted by the Monte Carlo experiments.
pub const MC_LIMIT: usize = 12;
