//! Heterogeneous CT acquisition simulation and 3D GAN-based normalization.
//!
//! The crate is organised bottom-up:
//!
//! - [`volume`]: the volumetric data model, HU scaling and the `CTVOL1` file format.
//! - [`sim`]: phantoms, parallel-beam projection, sinogram dose noise and FBP.
//! - [`neural`]: a small tensor/backprop core for 3D convolutional networks.
//! - [`gan`]: generator/discriminator, hinge-GAN training and tiled inference.
//! - [`metrics`]: tri-planar PSNR, SSIM and a random-feature perceptual distance.
//! - [`radiomics`]: per-slice texture features, normalized errors and the
//!   Wilcoxon signed-rank test.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod gan;
pub mod metrics;
pub mod neural;
pub mod radiomics;
pub mod sim;
pub mod volume;

pub use volume::{Image2, Plane, RoiBox, Volume};
