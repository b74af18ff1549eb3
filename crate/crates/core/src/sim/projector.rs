//! Parallel-beam forward projection and filtered back projection.
//!
//! Image coordinates are in mm with the origin at the image centre; pixel
//! `(r, c)` sits at `y = (r - (n-1)/2)·px`, `x = (c - (n-1)/2)·px`. Detector
//! `j` sits at `t = (j - (nd-1)/2)·dt` and projection angle `θ` integrates
//! along the direction `(-sin θ, cos θ)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{Result, SimError, Sinogram};
use crate::volume::Image2;

/// Linear attenuation of water in 1/mm at the simulated effective energy.
pub const MU_WATER: f32 = 0.0195;

#[inline]
pub fn hu_to_mu(hu: f32) -> f32 {
    (MU_WATER * (1.0 + hu / 1000.0)).max(0.0)
}

#[inline]
pub fn mu_to_hu(mu: f32) -> f32 {
    1000.0 * (mu / MU_WATER - 1.0)
}

/// Apodization applied on top of the ramp filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ReconWindow {
    Ramp,
    /// The "medium" kernel.
    #[default]
    Hann,
    SheppLogan,
}

impl ReconWindow {
    /// Gain at normalized frequency `f ∈ [0, 0.5]` (cycles per sample).
    fn gain(self, f: f64) -> f64 {
        match self {
            ReconWindow::Ramp => 1.0,
            ReconWindow::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
            ReconWindow::SheppLogan => {
                if f == 0.0 {
                    1.0
                } else {
                    (PI * f).sin() / (PI * f)
                }
            }
        }
    }
}

/// Number of detector bins covering the diagonal of an `n × n` image.
pub fn detector_count(n: usize) -> usize {
    (std::f64::consts::SQRT_2 * n as f64).ceil() as usize + 1
}

#[inline]
fn bilinear(img: &Image2, fr: f64, fc: f64) -> f64 {
    // zero outside the image support
    if fr <= -1.0 || fc <= -1.0 || fr >= img.rows as f64 || fc >= img.cols as f64 {
        return 0.0;
    }
    let r0 = fr.floor();
    let c0 = fc.floor();
    let wr = fr - r0;
    let wc = fc - c0;
    let r0 = r0 as isize;
    let c0 = c0 as isize;
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= img.rows as isize || c >= img.cols as isize {
            0.0
        } else {
            img.data[r as usize * img.cols + c as usize] as f64
        }
    };
    (1.0 - wr) * ((1.0 - wc) * at(r0, c0) + wc * at(r0, c0 + 1))
        + wr * ((1.0 - wc) * at(r0 + 1, c0) + wc * at(r0 + 1, c0 + 1))
}

/// Line integrals of `image` (attenuation per mm) along parallel rays.
///
/// Rays are sampled every half pixel with bilinear interpolation and the sum
/// is scaled by the step length in mm.
pub fn forward_project(
    image: &Image2,
    pixel_mm: f32,
    n_angles: usize,
    detector_spacing: f32,
) -> Result<Sinogram> {
    if image.rows != image.cols {
        return Err(SimError::Shape(format!(
            "forward projection needs a square image, got {}x{}",
            image.rows, image.cols
        )));
    }
    if n_angles == 0 {
        return Err(SimError::Shape("n_angles must be positive".into()));
    }
    let n = image.rows;
    let nd = detector_count(n);
    let mut sino = Sinogram::zeros(1, n_angles, nd, detector_spacing);
    let px = pixel_mm as f64;
    let dt = detector_spacing as f64;
    let centre = (n as f64 - 1.0) / 2.0;
    let dcentre = (nd as f64 - 1.0) / 2.0;
    let step = 0.5; // pixels
    let half_len = n as f64 * std::f64::consts::FRAC_1_SQRT_2 + 1.0; // pixels
    let n_steps = (2.0 * half_len / step).ceil() as usize + 1;

    for k in 0..n_angles {
        let theta = k as f64 * PI / n_angles as f64;
        let (sin, cos) = theta.sin_cos();
        let row = &mut sino.data[k * nd..(k + 1) * nd];
        for (j, out) in row.iter_mut().enumerate() {
            let t = (j as f64 - dcentre) * dt / px; // pixels
            let mut acc = 0.0;
            for i in 0..n_steps {
                let s = -half_len + i as f64 * step;
                let x = t * cos - s * sin;
                let y = t * sin + s * cos;
                acc += bilinear(image, y + centre, x + centre);
            }
            *out = (acc * step * px) as f32;
        }
    }
    Ok(sino)
}

/// Precomputed ramp × window filter for one detector geometry.
struct ProjectionFilter {
    len: usize,
    response: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl ProjectionFilter {
    fn new(n_detectors: usize, spacing: f64, window: ReconWindow) -> Self {
        let len = (2 * n_detectors).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(len);
        let ifft = planner.plan_fft_inverse(len);

        // band-limited ramp in the spatial domain, circularly wrapped
        let mut kernel = vec![Complex::new(0.0, 0.0); len];
        kernel[0].re = 1.0 / (4.0 * spacing * spacing);
        for n in (1..n_detectors).step_by(2) {
            let v = -1.0 / (n as f64 * PI * spacing).powi(2);
            kernel[n].re = v;
            kernel[len - n].re = v;
        }
        fft.process(&mut kernel);
        let response = kernel
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let f = k.min(len - k) as f64 / len as f64;
                h.re * window.gain(f)
            })
            .collect();
        ProjectionFilter {
            len,
            response,
            fft,
            ifft,
        }
    }

    fn apply(&self, proj: &[f32], spacing: f64, out: &mut [f64]) {
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (b, &p) in buf.iter_mut().zip(proj) {
            b.re = p as f64;
        }
        self.fft.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&self.response) {
            *b *= h;
        }
        self.ifft.process(&mut buf);
        let scale = spacing / self.len as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }
}

/// Ramp-filters every projection of slice `slice` of `sino`.
pub fn filter_projections(sino: &Sinogram, slice: usize, window: ReconWindow) -> Vec<f64> {
    let nd = sino.n_detectors;
    let dt = sino.detector_spacing as f64;
    let filter = ProjectionFilter::new(nd, dt, window);
    let data = sino.slice(slice);
    let mut filtered = vec![0.0; data.len()];
    for k in 0..sino.n_angles {
        filter.apply(
            &data[k * nd..(k + 1) * nd],
            dt,
            &mut filtered[k * nd..(k + 1) * nd],
        );
    }
    filtered
}

/// Unweighted back projection of `projections` (angle-major) onto an
/// `n × n` grid, with linear interpolation between detector bins.
pub fn backproject(
    projections: &[f64],
    n_angles: usize,
    n_detectors: usize,
    detector_spacing: f32,
    n: usize,
    pixel_mm: f32,
) -> Image2 {
    let px = pixel_mm as f64;
    let dt = detector_spacing as f64;
    let centre = (n as f64 - 1.0) / 2.0;
    let dcentre = (n_detectors as f64 - 1.0) / 2.0;
    let mut acc = vec![0.0f64; n * n];
    for k in 0..n_angles {
        let theta = k as f64 * PI / n_angles as f64;
        let (sin, cos) = theta.sin_cos();
        let proj = &projections[k * n_detectors..(k + 1) * n_detectors];
        for r in 0..n {
            let y = (r as f64 - centre) * px;
            let row = &mut acc[r * n..(r + 1) * n];
            for (c, a) in row.iter_mut().enumerate() {
                let x = (c as f64 - centre) * px;
                let pos = (x * cos + y * sin) / dt + dcentre;
                if pos < 0.0 || pos > (n_detectors - 1) as f64 {
                    continue;
                }
                let j = pos.floor() as usize;
                let w = pos - j as f64;
                let v = if j + 1 < n_detectors {
                    (1.0 - w) * proj[j] + w * proj[j + 1]
                } else {
                    proj[j]
                };
                *a += v;
            }
        }
    }
    Image2::new(n, n, acc.into_iter().map(|v| v as f32).collect())
}

/// Filtered back projection of one sinogram slice onto an `n × n` grid of
/// attenuation values (1/mm).
pub fn fbp_reconstruct(
    sino: &Sinogram,
    slice: usize,
    window: ReconWindow,
    n: usize,
    pixel_mm: f32,
) -> Result<Image2> {
    sino.validate()?;
    if slice >= sino.n_slices {
        return Err(SimError::Shape(format!(
            "slice {slice} out of range for {} slices",
            sino.n_slices
        )));
    }
    let filtered = filter_projections(sino, slice, window);
    let mut img = backproject(
        &filtered,
        sino.n_angles,
        sino.n_detectors,
        sino.detector_spacing,
        n,
        pixel_mm,
    );
    let scale = (PI / sino.n_angles as f64) as f32;
    img.data.iter_mut().for_each(|v| *v *= scale);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Disk with area-weighted (8×8 supersampled) edge pixels.
    fn disk(n: usize, radius_px: f64, mu: f32) -> Image2 {
        let c = (n as f64 - 1.0) / 2.0;
        let mut img = Image2::zeros(n, n);
        for r in 0..n {
            for col in 0..n {
                let mut inside = 0;
                for a in 0..8 {
                    for b in 0..8 {
                        let y = r as f64 - 0.5 + (a as f64 + 0.5) / 8.0 - c;
                        let x = col as f64 - 0.5 + (b as f64 + 0.5) / 8.0 - c;
                        if (x * x + y * y).sqrt() <= radius_px {
                            inside += 1;
                        }
                    }
                }
                img.set(r, col, mu * inside as f32 / 64.0);
            }
        }
        img
    }

    #[test]
    fn hu_mu_round_trip() {
        assert_eq!(hu_to_mu(-1000.0), 0.0);
        assert_eq!(hu_to_mu(-1500.0), 0.0);
        assert!((hu_to_mu(0.0) - MU_WATER).abs() < 1e-9);
        for hu in [-800.0f32, -50.0, 0.0, 40.0, 700.0] {
            assert!((mu_to_hu(hu_to_mu(hu)) - hu).abs() < 1e-2);
        }
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let s = forward_project(&Image2::zeros(16, 16), 1.0, 12, 1.0).unwrap();
        assert!(s.data.iter().all(|&v| v == 0.0));
        assert_eq!(s.n_detectors, detector_count(16));
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(
            forward_project(&Image2::zeros(4, 5), 1.0, 8, 1.0),
            Err(SimError::Shape(_))
        ));
    }

    #[test]
    fn disk_chord_length_every_angle() {
        // odd-sized grid puts a detector exactly on the rotation centre
        let n = 65;
        let r = 20.0;
        let mu = 0.02;
        let px = 0.8;
        let s = forward_project(&disk(n, r, mu), px, 32, px).unwrap();
        let centre_det = (s.n_detectors - 1) / 2;
        let expected = 2.0 * r * px as f64 * mu as f64;
        for k in 0..s.n_angles {
            let v = s.data[k * s.n_detectors + centre_det] as f64;
            assert!(
                ((v - expected) / expected).abs() < 0.02,
                "angle {k}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn projection_is_linear() {
        let a = disk(24, 7.0, 0.01);
        let mut b = Image2::zeros(24, 24);
        for (i, v) in b.data.iter_mut().enumerate() {
            *v = ((i * 37) % 11) as f32 * 0.001;
        }
        let mut ab = a.clone();
        for (x, y) in ab.data.iter_mut().zip(&b.data) {
            *x += y;
        }
        let sa = forward_project(&a, 1.0, 16, 1.0).unwrap();
        let sb = forward_project(&b, 1.0, 16, 1.0).unwrap();
        let sab = forward_project(&ab, 1.0, 16, 1.0).unwrap();
        for i in 0..sab.data.len() {
            assert!((sab.data[i] - sa.data[i] - sb.data[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn one_hot_backprojection_peaks_along_ray() {
        let n = 65;
        let nd = detector_count(n);
        assert_eq!(nd % 2, 1);
        let n_angles = 8;
        let mut proj = vec![0.0; n_angles * nd];
        // angle 0 integrates along y, so detector offset maps to x
        let centre_det = (nd - 1) / 2;
        proj[centre_det + 4] = 1.0;
        let img = backproject(&proj, n_angles, nd, 1.0, n, 1.0);
        assert!(img.data.iter().all(|&v| v >= 0.0));
        let c = (n - 1) / 2;
        for r in 0..n {
            assert_eq!(img.get(r, c + 4), 1.0);
        }
        assert_eq!(img.get(c, c), 0.0);
    }

    #[test]
    fn zero_sinogram_reconstructs_zero() {
        let s = Sinogram::zeros(1, 16, detector_count(20), 1.0);
        let img = fbp_reconstruct(&s, 0, ReconWindow::Hann, 20, 1.0).unwrap();
        assert!(img.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fbp_is_linear() {
        let s = forward_project(&disk(32, 10.0, 0.02), 1.0, 60, 1.0).unwrap();
        let mut s2 = s.clone();
        s2.data.iter_mut().for_each(|v| *v *= 2.0);
        for w in [
            ReconWindow::Ramp,
            ReconWindow::Hann,
            ReconWindow::SheppLogan,
        ] {
            let a = fbp_reconstruct(&s, 0, w, 32, 1.0).unwrap();
            let b = fbp_reconstruct(&s2, 0, w, 32, 1.0).unwrap();
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!((2.0 * x - y).abs() <= 1e-6 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn disk_round_trip_rmse() {
        let n = 64;
        let mu = 0.02f32;
        let radius = 20.0;
        let img = disk(n, radius, mu);
        let s = forward_project(&img, 1.0, 180, 1.0).unwrap();
        for w in [
            ReconWindow::Hann,
            ReconWindow::Ramp,
            ReconWindow::SheppLogan,
        ] {
            let rec = fbp_reconstruct(&s, 0, w, n, 1.0).unwrap();
            let c = (n as f64 - 1.0) / 2.0;
            let (mut se, mut count) = (0.0f64, 0usize);
            for r in 0..n {
                for col in 0..n {
                    let d = ((r as f64 - c).powi(2) + (col as f64 - c).powi(2)).sqrt();
                    if d <= radius - 2.0 {
                        se += ((rec.get(r, col) - mu) as f64).powi(2);
                        count += 1;
                    }
                }
            }
            let rmse = (se / count as f64).sqrt();
            assert!(rmse < 0.05 * mu as f64, "{w:?}: rmse {rmse}");
        }
    }
}
