//! Dataset engineering and verifiable-reward RL math for GUI grounding.
//!
//! The pipeline stages are:
//!
//! 1. [`ingest`]: parse heterogeneous annotation sources into the unified
//!    [`schema::GroundingSample`] record with `[0, 1]` coordinates.
//! 2. [`filter`]: drop annotations that are not backed by detected UI elements
//!    (coverage score against a detection set).
//! 3. [`entropy`]: score layout complexity and bucket samples by difficulty.
//! 4. [`overlay`]: synthesize occluded multi-window composites.
//! 5. [`resolution`]: apply train/inference resolution caps.
//! 6. [`rlvr`]: binary point-in-box reward, group-normalized advantages, the
//!    clipped GRPO surrogate, pass-rate filtering and a desk-scale simulator.
//! 7. [`eval`]: per-category point-in-box accuracy tables.
//!
//! Geometry and numeric kernels are generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix the scalar to `f64`, which is what the manifests use.

// `!(x > 0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod error;
pub mod eval;
pub mod filter;
pub mod geometry;
pub mod ingest;
pub mod overlay;
pub mod pipeline;
pub mod prompt;
pub mod resolution;
pub mod rlvr;
pub mod scalar;
pub mod schema;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Normalized point with `f64` coordinates.
pub type Point = geometry::NormPoint<f64>;
/// Normalized box with `f64` coordinates.
pub type Rect = geometry::NormBox<f64>;
/// Normalized point with `f32` coordinates.
pub type Point32 = geometry::NormPoint<f32>;
/// Normalized box with `f32` coordinates.
pub type Rect32 = geometry::NormBox<f32>;

pub type EntropyConfig = entropy::EntropyConfig<f64>;
pub type EntropyReport = entropy::EntropyReport<f64>;
pub type DetectionSet = filter::DetectionSet<f64>;
pub type Rollout = rlvr::Rollout<f64>;
pub type GroupRollout = rlvr::GroupRollout<f64>;
