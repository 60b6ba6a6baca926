//! Detection of singular points (intersections, boundaries, cone points) in
//! point clouds sampled from stratified spaces.
//!
//! Each point's neighborhood is rescaled to the unit ball, projected onto its
//! principal directions, and compared with the uniform distribution on a
//! disk through a closed-form kernel MMD. Monte-Carlo null tables turn the
//! statistic into a p-value; small p-values flag singularities.

pub mod dct;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod mmd;
pub mod null;
pub mod scoring;
pub mod synth;
pub mod tuning;
pub mod uniformity;

pub use error::{Error, Result};
pub use geometry::PointCloud;
pub use mmd::{KernelKind, PowerSeriesKernel};
pub use null::{NullCache, NullTable};
pub use uniformity::{Hyperparams, NeighborhoodRule, UniformityResult};
