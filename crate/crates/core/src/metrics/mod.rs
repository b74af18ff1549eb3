//! Image quality metrics evaluated slice-wise along the three anatomical planes.
//!
//! All metrics expect images on the [0, 1] scale (see [`crate::volume::hu_to_unit`]).

mod perceptual;
mod quality;
mod report;

pub use perceptual::{perceptual_distance, SrfPd, SRF_PD_SEED};
pub use quality::{psnr, ssim, SSIM_C1, SSIM_C2, SSIM_WINDOW};
pub use report::{evaluate_volume_pair, Metric, MetricAccumulator, MetricCell, MetricReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("image {rows}x{cols} is smaller than the required {min}x{min}")]
    Undersized {
        rows: usize,
        cols: usize,
        min: usize,
    },
}

pub type Result<T> = std::result::Result<T, MetricError>;
