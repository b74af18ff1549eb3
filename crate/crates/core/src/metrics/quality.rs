use super::{MetricError, Result};
use crate::volume::Image2;

/// Side length of the Gaussian SSIM window.
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

fn check_shapes(a: &Image2, b: &Image2) -> Result<()> {
    if !a.same_shape(b) {
        return Err(MetricError::Shape(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB for data range 1.
///
/// Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image2, b: &Image2) -> Result<f64> {
    check_shapes(a, b)?;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.data.len().max(1) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Valid-mode separable filtering of a row-major `rows × cols` map.
fn filter_valid(src: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let oc = cols + 1 - k;
    let or = rows + 1 - k;
    let mut horiz = vec![0.0; rows * oc];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        for c in 0..oc {
            horiz[r * oc + c] = taps.iter().zip(&row[c..c + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for r in 0..or {
        for (t, tap) in taps.iter().enumerate() {
            let src_row = &horiz[(r + t) * oc..(r + t + 1) * oc];
            for (o, v) in out[r * oc..(r + 1) * oc].iter_mut().zip(src_row) {
                *o += tap * v;
            }
        }
    }
    out
}

/// Mean structural similarity over all fully-contained 11×11 Gaussian windows.
pub fn ssim(a: &Image2, b: &Image2) -> Result<f64> {
    check_shapes(a, b)?;
    if a.rows < SSIM_WINDOW || a.cols < SSIM_WINDOW {
        return Err(MetricError::Undersized {
            rows: a.rows,
            cols: a.cols,
            min: SSIM_WINDOW,
        });
    }
    let taps = gaussian_taps();
    let (rows, cols) = (a.rows, a.cols);
    let x: Vec<f64> = a.data.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.data.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let [mx, my, mxx, myy, mxy] =
        [&x, &y, &xx, &yy, &xy].map(|m| filter_valid(m, rows, cols, &taps));
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = (mxx[i] - ux * ux).max(0.0);
        let vy = (myy[i] - uy * uy).max(0.0);
        let cov = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / mx.len() as f64)
}
