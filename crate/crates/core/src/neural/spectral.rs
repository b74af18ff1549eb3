//! Spectral normalisation by power iteration.
//!
//! A weight of shape `(Cout, ...)` is viewed as a `Cout × rest` matrix `W`.
//! The persistent left singular vector estimate `u` is refined with
//! `v = normalize(Wᵀu)`, `u = normalize(Wv)`, and `σ = uᵀWv` estimates the
//! largest singular value. The effective weight is `W / σ`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{NeuralError, Parameter, Result, Tensor};

/// Lower bound on σ, guarding all-zero weights.
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    /// Unit-norm left singular vector estimate, length `Cout`.
    pub u: Vec<f32>,
    /// σ used by the most recent normalisation.
    pub sigma: f32,
}

impl SpectralState {
    pub fn random(rows: usize, rng: &mut impl Rng) -> Self {
        let mut u: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        if normalize(&mut u) == 0.0 {
            u[0] = 1.0;
        }
        SpectralState {
            u: u.into_iter().map(|v| v as f32).collect(),
            sigma: 1.0,
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn matrix_dims(w: &Tensor) -> (usize, usize) {
    let rows = w.shape()[0];
    (rows, w.len() / rows.max(1))
}

fn wt_u(w: &[f32], rows: usize, cols: usize, u: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0f64; cols];
    for r in 0..rows {
        let ur = u[r];
        for (acc, &x) in v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *acc += ur * x as f64;
        }
    }
    v
}

fn w_v(w: &[f32], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(v)
                .map(|(&x, &y)| x as f64 * y)
                .sum()
        })
        .collect()
}

/// σ estimate `uᵀWv` with `v = normalize(Wᵀu)`, leaving `u` untouched.
pub fn spectral_sigma(w: &Tensor, u: &[f32]) -> f64 {
    let (rows, cols) = matrix_dims(w);
    let u: Vec<f64> = u.iter().map(|&x| x as f64).collect();
    let mut v = wt_u(w.data(), rows, cols, &u);
    normalize(&mut v);
    let wv = w_v(w.data(), rows, cols, &v);
    u.iter().zip(&wv).map(|(a, b)| a * b).sum::<f64>()
}

/// Runs `n_power_iters` power iterations on `p`'s spectral state and
/// returns the effective weight `W / σ`.
///
/// With zero iterations the stored `u` is used as-is.
pub fn spectral_normalize(p: &mut Parameter, n_power_iters: usize) -> Result<Tensor> {
    let (rows, cols) = matrix_dims(&p.value);
    let state = p.spectral.as_mut().ok_or_else(|| {
        NeuralError::Shape(format!("parameter `{}` has no spectral state", p.name))
    })?;
    if state.u.len() != rows {
        return Err(NeuralError::Shape(format!(
            "spectral vector length {} != {rows} rows in `{}`",
            state.u.len(),
            p.name
        )));
    }
    let w = p.value.data();
    let mut u: Vec<f64> = state.u.iter().map(|&x| x as f64).collect();
    let mut v = wt_u(w, rows, cols, &u);
    normalize(&mut v);
    for _ in 0..n_power_iters {
        let mut nu = w_v(w, rows, cols, &v);
        if normalize(&mut nu) == 0.0 {
            break;
        }
        u = nu;
        v = wt_u(w, rows, cols, &u);
        normalize(&mut v);
    }
    let wv = w_v(w, rows, cols, &v);
    let sigma = u
        .iter()
        .zip(&wv)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .max(SIGMA_FLOOR);
    state.u = u.into_iter().map(|x| x as f32).collect();
    state.sigma = sigma as f32;
    let mut eff = p.value.clone();
    let inv = (1.0 / sigma) as f32;
    eff.data_mut().iter_mut().for_each(|x| *x *= inv);
    Ok(eff)
}
