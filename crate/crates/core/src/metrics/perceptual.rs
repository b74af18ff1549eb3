//! Seeded random-feature perceptual distance (SRF-PD).
//!
//! A fixed, untrained three-stage 2D conv stack stands in for the pretrained
//! backbone of learned perceptual metrics. Only orderings of SRF-PD values
//! are meaningful; the absolute scale is arbitrary.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MetricError, Result};
use crate::neural::{conv3d_forward, he_normal, leaky_relu, ConvGeometry, Tensor};
use crate::volume::Image2;

pub const SRF_PD_SEED: u64 = 0x4C50_4950;
const STAGE_CHANNELS: [usize; 3] = [8, 16, 32];
const SLOPE: f32 = 0.2;
const MIN_SIDE: usize = 32;
const NORM_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SrfPd {
    weights: Vec<Tensor>,
}

impl SrfPd {
    pub fn with_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 1;
        let weights = STAGE_CHANNELS
            .iter()
            .map(|&cout| {
                let w = he_normal([cout, cin, 1, 3, 3], 1.0, &mut rng);
                cin = cout;
                w
            })
            .collect();
        SrfPd { weights }
    }

    /// The shared instance built from [`SRF_PD_SEED`].
    pub fn standard() -> &'static SrfPd {
        static INSTANCE: OnceLock<SrfPd> = OnceLock::new();
        INSTANCE.get_or_init(|| SrfPd::with_seed(SRF_PD_SEED))
    }

    fn features(&self, img: &Image2) -> Vec<Tensor> {
        let geom = ConvGeometry {
            stride: [1, 2, 2],
            padding: [0, 1, 1],
        };
        let mut x = Tensor::from_vec([1, 1, 1, img.rows, img.cols], img.data.clone())
            .expect("image length matches shape");
        let mut out = Vec::with_capacity(self.weights.len());
        for w in &self.weights {
            x = leaky_relu(
                &conv3d_forward(&x, w, None, geom).expect("valid geometry"),
                SLOPE,
            );
            out.push(x.clone());
        }
        out
    }

    pub fn distance(&self, a: &Image2, b: &Image2) -> Result<f64> {
        if !a.same_shape(b) {
            return Err(MetricError::Shape(format!(
                "{}x{} vs {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        if a.rows < MIN_SIDE || a.cols < MIN_SIDE {
            return Err(MetricError::Undersized {
                rows: a.rows,
                cols: a.cols,
                min: MIN_SIDE,
            });
        }
        let fa = self.features(a);
        let fb = self.features(b);
        let mut total = 0.0;
        for (ta, tb) in fa.iter().zip(&fb) {
            total += stage_distance(ta, tb);
        }
        Ok(total / fa.len() as f64)
    }
}

/// Mean squared difference of per-position unit-normalized feature vectors.
fn stage_distance(a: &Tensor, b: &Tensor) -> f64 {
    let c = a.channels();
    let p = a.spatial_len();
    let (da, db) = (a.data(), b.data());
    let norms = |d: &[f32]| -> Vec<f64> {
        (0..p)
            .map(|i| {
                let s: f64 = (0..c).map(|k| (d[k * p + i] as f64).powi(2)).sum();
                s.sqrt() + NORM_EPS
            })
            .collect()
    };
    let (na, nb) = (norms(da), norms(db));
    let mut sum = 0.0;
    for k in 0..c {
        for i in 0..p {
            let diff = da[k * p + i] as f64 / na[i] - db[k * p + i] as f64 / nb[i];
            sum += diff * diff;
        }
    }
    sum / (c * p) as f64
}

/// SRF-PD between two [0, 1] images using the standard weights.
pub fn perceptual_distance(a: &Image2, b: &Image2) -> Result<f64> {
    SrfPd::standard().distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Image2 {
        Image2::new(
            n,
            n,
            (0..n * n)
                .map(|i| ((i % n) as f32 / n as f32 + (i / n) as f32 / (2 * n) as f32) / 1.5)
                .collect(),
        )
    }

    #[test]
    fn identity_and_symmetry() {
        let a = ramp(32);
        let mut b = a.clone();
        b.data
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v += 0.05 * ((i * 7919) % 13) as f32 / 13.0);
        assert_eq!(perceptual_distance(&a, &a).unwrap(), 0.0);
        let d = perceptual_distance(&a, &b).unwrap();
        assert!(d > 0.0);
        assert_eq!(d, perceptual_distance(&b, &a).unwrap());
    }

    #[test]
    fn undersized_rejected() {
        let a = Image2::zeros(31, 40);
        assert!(matches!(
            perceptual_distance(&a, &a),
            Err(MetricError::Undersized { .. })
        ));
    }

    #[test]
    fn same_seed_same_weights() {
        let a = ramp(32);
        let b = Image2::new(32, 32, vec![0.4; 1024]);
        let d1 = SrfPd::with_seed(SRF_PD_SEED).distance(&a, &b).unwrap();
        let d2 = perceptual_distance(&a, &b).unwrap();
        assert_eq!(d1.to_bits(), d2.to_bits());
    }
}
