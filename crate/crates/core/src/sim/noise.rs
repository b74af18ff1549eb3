//! Dose-reduction noise in the projection domain.
//!
//! At full-dose fluence `N0` a ray with line integral `p` records
//! `N = d·N0·exp(-p)` photons at dose fraction `d`. Propagating Poisson
//! counting noise through `p̂ = -ln(N / (d·N0))` gives a variance of
//! `exp(p) / (d·N0)`; the full-dose scan already carries `exp(p) / N0`, so the
//! excess injected here is `(1/d - 1)·exp(p) / N0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Result, SimError, Sinogram};

/// Excess variance added to a ray with line integral `p`.
#[inline]
pub fn dose_noise_variance(p: f64, dose: f64, n0: f64) -> f64 {
    (1.0 / dose - 1.0) * p.exp() / n0
}

fn check_dose(dose: f64, n0: f64) -> Result<()> {
    if !(dose > 0.0 && dose <= 1.0) {
        return Err(SimError::DoseOutOfRange(dose));
    }
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(SimError::InvalidConfig(format!(
            "N0 must be positive, got {n0}"
        )));
    }
    Ok(())
}

/// Adds dose noise to one projection slice in place.
///
/// The random stream is keyed on `(seed, slice_index)` and consumed in ray
/// order, so the result does not depend on how slices are scheduled.
pub fn inject_dose_noise_slice(
    data: &mut [f32],
    slice_index: u64,
    dose: f64,
    n0: f64,
    seed: u64,
) -> Result<()> {
    check_dose(dose, n0)?;
    if dose == 1.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slice_index);
    for p in data.iter_mut() {
        let sigma = dose_noise_variance(*p as f64, dose, n0).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        *p = (*p as f64 + sigma * z) as f32;
    }
    Ok(())
}

pub fn inject_dose_noise(s: &Sinogram, dose: f64, n0: f64, seed: u64) -> Result<Sinogram> {
    check_dose(dose, n0)?;
    let mut out = s.clone();
    for slice in 0..s.n_slices {
        inject_dose_noise_slice(out.slice_mut(slice), slice as u64, dose, n0, seed)?;
    }
    Ok(out)
}
