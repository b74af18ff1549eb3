//! Volumetric GAN normalizer: EDSR-style generator with z up-sampling, a
//! spectrally normalized discriminator, hinge-loss training and tiled
//! whole-volume inference.

mod config;
mod discriminator;
mod generator;
mod infer;
mod layers;
mod loss;
mod patches;
mod train;

pub use config::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
pub use discriminator::{build_discriminator, DiscForward, Discriminator, EffectiveWeights};
pub use generator::{build_generator, Generator, GeneratorCache};
pub use infer::{blend_profile, blend_weight_sum, normalize_volume, tile_starts, TileLayout};
pub use loss::{d_loss, g_loss, DLoss, GLoss};
pub use patches::{sample_patch_pairs, sample_patch_pairs_with, PatchPair};
pub use train::{
    generator_from_checkpoint, train, IterationLog, TrainData, TrainSummary, Trainer,
    ValidationScores, VolumePair, LOG_HEADER,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricError;
use crate::neural::NeuralError;
use crate::volume::VolumeError;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("patch sampling failed: {0}")]
    Sampling(String),
    #[error("non-finite loss at iteration {iteration} (last checkpoint: {})",
        .last_checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    NonFiniteLoss {
        iteration: u64,
        last_checkpoint: Option<PathBuf>,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GanError>;
