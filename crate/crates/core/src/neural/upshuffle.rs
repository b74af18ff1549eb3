//! Channel-to-depth rearrangement used for z super-resolution.
//!
//! Channels `(2c, 2c+1)` of depth `d` become depths `(2d, 2d+1)` of channel
//! `c`. Pure data movement: no arithmetic.

use super::{NeuralError, Result, Tensor};

pub fn z_upshuffle(x: &Tensor) -> Result<Tensor> {
    let [n, c2, d, h, w] = x.shape();
    if c2 % 2 != 0 {
        return Err(NeuralError::Shape(format!(
            "z_upshuffle needs an even channel count, got {c2}"
        )));
    }
    let c = c2 / 2;
    let plane = h * w;
    let mut out = Tensor::zeros([n, c, 2 * d, h, w]);
    for s in 0..n {
        let src = x.sample(s);
        let dst = out.sample_mut(s);
        for ch in 0..c {
            for r in 0..2 {
                for z in 0..d {
                    let from = ((2 * ch + r) * d + z) * plane;
                    let to = (ch * 2 * d + 2 * z + r) * plane;
                    dst[to..to + plane].copy_from_slice(&src[from..from + plane]);
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`z_upshuffle`]; also its backward pass.
pub fn z_downshuffle(y: &Tensor) -> Result<Tensor> {
    let [n, c, d2, h, w] = y.shape();
    if d2 % 2 != 0 {
        return Err(NeuralError::Shape(format!(
            "z_downshuffle needs an even depth, got {d2}"
        )));
    }
    let d = d2 / 2;
    let plane = h * w;
    let mut out = Tensor::zeros([n, 2 * c, d, h, w]);
    for s in 0..n {
        let src = y.sample(s);
        let dst = out.sample_mut(s);
        for ch in 0..c {
            for r in 0..2 {
                for z in 0..d {
                    let to = ((2 * ch + r) * d + z) * plane;
                    let from = (ch * 2 * d + 2 * z + r) * plane;
                    dst[to..to + plane].copy_from_slice(&src[from..from + plane]);
                }
            }
        }
    }
    Ok(out)
}
