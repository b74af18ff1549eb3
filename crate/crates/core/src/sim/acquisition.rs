use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::inject_dose_noise_slice;
use super::projector::{fbp_reconstruct, forward_project, hu_to_mu, mu_to_hu, ReconWindow};
use super::{Result, SimError};
use crate::volume::{Image2, Volume};

/// Supported reconstructed slice thicknesses in mm.
pub const SLICE_THICKNESSES: [f32; 2] = [1.0, 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    /// Dose fraction in (0, 1].
    pub dose: f64,
    pub slice_thickness_mm: f32,
    /// Full-dose photon fluence per ray.
    pub n0: f64,
    pub window: ReconWindow,
    pub n_angles: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            dose: 1.0,
            slice_thickness_mm: 1.0,
            n0: 1e5,
            window: ReconWindow::Hann,
            n_angles: 180,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dose > 0.0 && self.dose <= 1.0) {
            return Err(SimError::DoseOutOfRange(self.dose));
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "N0 must be positive, got {}",
                self.n0
            )));
        }
        if self.n_angles < 8 {
            return Err(SimError::InvalidConfig(format!(
                "n_angles must be at least 8, got {}",
                self.n_angles
            )));
        }
        if !SLICE_THICKNESSES.contains(&self.slice_thickness_mm) {
            return Err(SimError::InvalidConfig(format!(
                "slice thickness must be one of {SLICE_THICKNESSES:?} mm, got {}",
                self.slice_thickness_mm
            )));
        }
        Ok(())
    }
}

/// Simulates a CT acquisition of `phantom` (HU on a fine z-grid).
///
/// Phantom layers are averaged into slabs of the requested thickness before
/// projection, so partial-volume mixing happens in the projections.
pub fn simulate_acquisition(phantom: &Volume, cfg: &AcquisitionConfig) -> Result<Volume> {
    cfg.validate()?;
    let [nz, ny, nx] = phantom.dims();
    let [sz, sy, sx] = phantom.spacing();
    if ny != nx || sy != sx {
        return Err(SimError::Shape(format!(
            "in-plane grid must be square with isotropic pixels, got {ny}x{nx} @ {sy}x{sx} mm"
        )));
    }
    let ratio = cfg.slice_thickness_mm / sz;
    let factor = ratio.round() as usize;
    if factor == 0 || (ratio - factor as f32).abs() > 1e-4 {
        return Err(SimError::Shape(format!(
            "slice thickness {} mm is not a multiple of the phantom spacing {sz} mm",
            cfg.slice_thickness_mm
        )));
    }
    if nz % factor != 0 {
        return Err(SimError::Shape(format!(
            "phantom z extent {nz} is not divisible by the slab factor {factor}"
        )));
    }
    let out_nz = nz / factor;
    let plane = ny * nx;

    let slices: Vec<Result<Vec<f32>>> = (0..out_nz)
        .into_par_iter()
        .map(|slab| {
            let mut mu = Image2::zeros(ny, nx);
            for layer in slab * factor..(slab + 1) * factor {
                for (m, &hu) in mu.data.iter_mut().zip(phantom.axial(layer)) {
                    *m += hu;
                }
            }
            for m in mu.data.iter_mut() {
                *m = hu_to_mu(*m / factor as f32);
            }
            let mut sino = forward_project(&mu, sx, cfg.n_angles, sx)?;
            inject_dose_noise_slice(&mut sino.data, slab as u64, cfg.dose, cfg.n0, cfg.seed)?;
            let rec = fbp_reconstruct(&sino, 0, cfg.window, nx, sx)?;
            Ok(rec.data.into_iter().map(mu_to_hu).collect())
        })
        .collect();

    let mut voxels = Vec::with_capacity(out_nz * plane);
    for s in slices {
        voxels.extend(s?);
    }
    Ok(Volume::new(
        [out_nz, ny, nx],
        [cfg.slice_thickness_mm, sy, sx],
        voxels,
    )?)
}
