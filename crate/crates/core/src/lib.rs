//! Evaluation harness for 3D multi-organ abdominal segmentation benchmarks.
//!
//! The crate is organised as a pipeline:
//!
//! - [`volume`]: NIfTI-1 label maps, the 13-organ taxonomy and RAS canonicalisation.
//! - [`metrics`]: per-organ DSC, normalized surface distance (NSD), volumetry and
//!   an exact anisotropic Euclidean distance transform.
//! - [`profiler`]: serial, resource-sampled execution of candidate algorithms and
//!   the time / GPU-memory / CPU-utilisation area-under-curve reductions.
//! - [`ranking`]: rank-then-aggregate leaderboards.
//! - [`stats`]: Kendall's tau-b, bootstrap ranking stability and the Wilcoxon
//!   signed-rank test.
//! - [`harness`]: manifest-driven orchestration used by the `segbench` CLI.

// 3×3 and 4×4 affine code reads best with explicit indices
#![allow(clippy::needless_range_loop)]

pub mod harness;
pub mod mask;
pub mod metrics;
pub mod profiler;
pub mod ranking;
pub mod stats;
pub mod volume;

pub use mask::Mask;
pub use volume::{LabelVolume, OrganId};
