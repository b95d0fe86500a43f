//! Skill–dataset–module network analysis toolkit.
//!
//! The pipeline goes from raw skill annotations and pruning records (real or
//! produced by the built-in toy pruner) to bipartite matrices, one-mode
//! projections, consensus community detection, spectral and role diagnostics,
//! partition-comparison metrics, statistical validation, and fine-tuning
//! target selection.

pub mod alignment;
pub mod bipartite;
pub mod community;
pub mod finetune;
pub mod ingest;
pub mod matrix;
pub mod projection;
pub mod roles;
pub mod spectral;
pub mod stats;
pub mod synth;
pub mod toyprune;

pub use community::{ConsensusResult, Partition, WeightedGraph};
pub use matrix::{Axis, BipartiteMatrix, ProjectionMatrix};
