//! Cross-modal mask reasoning for open-vocabulary 3D semantic segmentation.
//!
//! A 3D point branch and a condition-driven 2D mask branch are trained on
//! synthetic indoor scenes. Back-projected 2D masks pool 3D features into
//! mask embeddings that are pulled toward a frozen vision-language space, and
//! the two branches are fused per point for the final prediction.

pub mod embedspace;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod losses;
pub mod maskops;
pub mod numeric;
pub mod pipeline;
pub mod scenegen;

pub use error::{Error, Result};
