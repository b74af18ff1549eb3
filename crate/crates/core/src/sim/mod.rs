//! CT acquisition simulation.
//!
//! Phantoms are rendered on a 0.5 mm z-grid, slab-averaged to the requested
//! slice thickness, forward projected with a parallel-beam model, degraded
//! with dose-dependent sinogram noise and reconstructed by filtered back
//! projection.

mod acquisition;
mod noise;
mod phantom;
mod projector;
mod sinogram;

pub use acquisition::{simulate_acquisition, AcquisitionConfig};
pub use noise::{dose_noise_variance, inject_dose_noise, inject_dose_noise_slice};
pub use phantom::{
    generate_phantom, LungSpec, NoduleRoi, NoduleSpec, Phantom, PhantomSpec, TissueHu,
    PHANTOM_SLICE_MM,
};
pub use projector::{
    backproject, detector_count, fbp_reconstruct, filter_projections, forward_project, hu_to_mu,
    mu_to_hu, ReconWindow, MU_WATER,
};
pub use sinogram::{decode_sinogram, encode_sinogram, load_sinogram, save_sinogram, Sinogram};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),
    #[error("invalid acquisition config: {0}")]
    InvalidConfig(String),
    #[error("dose fraction must lie in (0, 1], got {0}")]
    DoseOutOfRange(f64),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bad sinogram magic {0:?}")]
    BadMagic([u8; 6]),
    #[error("unsupported sinogram version {0}")]
    UnsupportedVersion(u16),
    #[error("sinogram file truncated or inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Volume(#[from] crate::volume::VolumeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
