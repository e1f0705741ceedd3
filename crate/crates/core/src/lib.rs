//! Quantile-quantile embedding: reshapes the distribution of a point sample
//! into a chosen reference distribution, either exactly or up to location and
//! scale per dimension, while keeping local distances close to the original.
//!
//! The pipeline is
//! 1. draw or load a reference sample ([`reference`]),
//! 2. pair every point with a reference point by fuzzy qq matching ([`matching`]),
//! 3. move the points towards their partners with diagonal quasi-Newton steps
//!    on a cost with a distance-preservation term ([`transform`]),
//! 4. measure the result ([`metrics`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); file I/O works in
//! `f64`. The `*64` aliases name the common instantiations.

pub mod embedding;
pub mod error;
pub mod io;
pub mod matching;
pub mod matrix;
pub mod metrics;
pub mod quantiles;
pub mod reference;
pub mod scalar;
pub mod transform;
pub mod types;

pub use embedding::{pca_init, EmbeddingInit, Pca};
pub use error::{QqeError, Result};
pub use matching::{fuzzy_match, solve_assignment, CostMatrix};
pub use matrix::Matrix;
pub use metrics::{hsic, kl_divergence, mmd_squared, qq_line_diagnostics, recall_at_k, KernelSpec, MetricsReport};
pub use quantiles::{compute_positions, empirical_quantile, spatial_ranks, PositionScheme};
pub use reference::{resize_reference, sample_reference, shape_sampler, CdfTable, ReferenceKind, ReferenceSpec, StandardFamily};
pub use scalar::Scalar;
pub use transform::{transform, transform_supervised, LineFit, SupervisedOutput, Timings, TransformOutput};
pub use types::{
    validate_dataset, Dataset, GradientForm, MatchResult, Mode, NeighborGraph, Permutation, Snapshot, StopReason,
    TransformConfig, Trajectory,
};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type MatchResult64 = MatchResult<f64>;
pub type TransformOutput64 = TransformOutput<f64>;
