//! Gaussian splatting with a learned per-Gaussian segmentation feature field.
//!
//! The crate trains feature-augmented 3D Gaussians jointly on color and
//! per-view instance masks, renders 2D instance masks by clustering splatted
//! features, and extracts per-object sub-models from a feature prompt.

pub mod assignment;
pub mod error;
pub mod hull;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rasterizer;
pub mod rng;
pub mod segmentation;
pub mod synth;
pub mod trainer;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{Camera, Gaussian, SceneModel, FEATURE_DIM};
pub use rasterizer::{rasterize, rasterize_backward, RenderOutput};
