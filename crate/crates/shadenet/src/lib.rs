//! Learned screen-space shading at desk scale.
//!
//! This crate turns deferred-shading attribute buffers (positions, normals,
//! depth, albedo, direct light) into shaded effect images with a small
//! U-shaped convolutional network, and ships everything needed to produce
//! such a network from nothing:
//!
//! - [`tensor`]: the dense `(channels, height, width)` tensor every other
//!   module is built on.
//! - [`layers`]: grouped convolution, leaky ReLU, 2x2 mean pooling and
//!   bilinear 2x up-sampling, with explicit backward passes.
//! - [`unet`]: the U-shaped network builder, forward and backward.
//! - [`loss`]: tiled SSIM / DSSIM plus L1/L2 and blends, with gradients.
//! - [`optim`]: the adaptive per-parameter update rule.
//! - [`render`]: procedural scenes, a small ray caster for G-buffers, and
//!   Monte-Carlo ground truth for ambient occlusion and depth-of-field.
//! - [`dataset`]: PFM storage, the JSON manifest, dihedral augmentation and
//!   scene-disjoint splits.
//! - [`train`]: the mini-batch loop, curves and checkpoints.
//! - [`runtime`]: inference over G-buffers, effect composition, radius
//!   rescaling, evaluation, benchmarking and PNG export.
//!
//! The `book/` directory of the repository walks through the concepts
//! chapter by chapter; its code snippets compile against this crate and
//! run as doc-tests of the companion `shadenet-book` crate.

pub mod dataset;
pub mod error;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod render;
pub mod runtime;
pub mod tensor;
pub mod train;
pub mod unet;

pub use error::{Error, Result};
pub use tensor::{Batch, FlipAxis, Tensor};
