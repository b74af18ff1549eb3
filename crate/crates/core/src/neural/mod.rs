//! Minimal tensor and backpropagation core for 3D convolutional networks.
//!
//! There is no general autodiff tape: each operation exposes a forward and a
//! hand-written backward function, and models wire them together.

mod activation;
mod adam;
mod checkpoint;
mod conv;
mod dense;
mod init;
mod loss;
mod param;
mod spectral;
mod tensor;
mod upshuffle;

pub use activation::{leaky_relu, leaky_relu_backward};
pub use adam::{adam_step, AdamConfig};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, NamedTensor,
};
pub use conv::{conv3d_backward, conv3d_forward, Conv3dGrads, ConvGeometry};
pub use dense::{global_avg_pool, global_avg_pool_backward, linear, linear_backward};
pub use init::he_normal;
pub use loss::l1_loss;
pub use param::Parameter;
pub use spectral::{spectral_normalize, spectral_sigma, SpectralState, SIGMA_FLOOR};
pub use tensor::Tensor;
pub use upshuffle::{z_downshuffle, z_upshuffle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid optimizer config: {0}")]
    Config(String),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("bad checkpoint magic {0:?}")]
    BadMagic([u8; 6]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;
