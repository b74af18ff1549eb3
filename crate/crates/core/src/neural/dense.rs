use super::{NeuralError, Result, Tensor};

/// Mean over (D, H, W) per sample and channel; returns `(N, C)` row-major.
pub fn global_avg_pool(x: &Tensor) -> Vec<f32> {
    let n = x.batch();
    let c = x.channels();
    let sp = x.spatial_len();
    let mut out = vec![0.0f32; n * c];
    for s in 0..n {
        let xs = x.sample(s);
        for ch in 0..c {
            let sum: f64 = xs[ch * sp..(ch + 1) * sp].iter().map(|&v| v as f64).sum();
            out[s * c + ch] = (sum / sp as f64) as f32;
        }
    }
    out
}

pub fn global_avg_pool_backward(shape: [usize; 5], dpooled: &[f32]) -> Result<Tensor> {
    let [n, c, d, h, w] = shape;
    if dpooled.len() != n * c {
        return Err(NeuralError::Shape("pool gradient length mismatch".into()));
    }
    let sp = d * h * w;
    let mut dx = Tensor::zeros(shape);
    let scale = 1.0 / sp as f32;
    for s in 0..n {
        let xs = dx.sample_mut(s);
        for ch in 0..c {
            let g = dpooled[s * c + ch] * scale;
            xs[ch * sp..(ch + 1) * sp].iter_mut().for_each(|v| *v = g);
        }
    }
    Ok(dx)
}

/// `out[n] = Σ_c x[n][c]·w[c] + b`, a scalar head. `w` is `(1, C)`.
pub fn linear(x: &[f32], n: usize, w: &[f32], b: f32) -> Vec<f32> {
    let c = w.len();
    (0..n)
        .map(|s| {
            x[s * c..(s + 1) * c]
                .iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .sum::<f32>()
                + b
        })
        .collect()
}

/// Returns `(dx, dw, db)` for [`linear`].
pub fn linear_backward(x: &[f32], w: &[f32], dout: &[f32]) -> (Vec<f32>, Vec<f32>, f32) {
    let c = w.len();
    let n = dout.len();
    let mut dx = vec![0.0f32; n * c];
    let mut dw = vec![0.0f32; c];
    let mut db = 0.0;
    for s in 0..n {
        let g = dout[s];
        db += g;
        for ch in 0..c {
            dx[s * c + ch] = g * w[ch];
            dw[ch] += g * x[s * c + ch];
        }
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_and_head() {
        let x = Tensor::from_vec([1, 2, 1, 1, 2], vec![1.0, 3.0, -2.0, 2.0]).unwrap();
        let p = global_avg_pool(&x);
        assert_eq!(p, vec![2.0, 0.0]);
        let y = linear(&p, 1, &[0.5, 1.0], 0.25);
        assert_eq!(y, vec![1.25]);
        let (dx, dw, db) = linear_backward(&p, &[0.5, 1.0], &[2.0]);
        assert_eq!(dx, vec![1.0, 2.0]);
        assert_eq!(dw, vec![4.0, 0.0]);
        assert_eq!(db, 2.0);
        let dpool = global_avg_pool_backward(x.shape(), &dx).unwrap();
        assert_eq!(dpool.data(), &[0.5, 0.5, 1.0, 1.0]);
    }
}
