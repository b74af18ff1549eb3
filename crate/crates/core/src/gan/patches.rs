use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GanError, Result, TrainConfig};
use crate::neural::Tensor;
use crate::volume::{hu_to_unit_value, Volume};

const ATTEMPTS_PER_PATCH: usize = 1000;

/// Aligned training pair: `x` from the thick low-dose volume, `y` from the
/// thin reference at twice the z-origin. Both `(1, 1, D, H, W)` on [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub x: Tensor,
    pub y: Tensor,
    /// (z, y, x) origin in the low volume.
    pub x_origin: [usize; 3],
    /// (z, y, x) origin in the reference volume.
    pub y_origin: [usize; 3],
}

fn copy_patch(v: &Volume, origin: [usize; 3], dims: [usize; 3]) -> Tensor {
    let [pd, ph, pw] = dims;
    let mut data = Vec::with_capacity(pd * ph * pw);
    for z in origin[0]..origin[0] + pd {
        for y in origin[1]..origin[1] + ph {
            let start = v.index(z, y, origin[2]);
            data.extend_from_slice(&v.voxels()[start..start + pw]);
        }
    }
    Tensor::from_vec([1, 1, pd, ph, pw], data).expect("patch length matches")
}

/// Fraction of patch voxels above `threshold`.
pub(crate) fn body_fraction(
    v: &Volume,
    origin: [usize; 3],
    dims: [usize; 3],
    threshold: f32,
) -> f64 {
    let [pd, ph, pw] = dims;
    let mut count = 0usize;
    for z in origin[0]..origin[0] + pd {
        for y in origin[1]..origin[1] + ph {
            let start = v.index(z, y, origin[2]);
            count += v.voxels()[start..start + pw]
                .iter()
                .filter(|&&u| u > threshold)
                .count();
        }
    }
    count as f64 / (pd * ph * pw) as f64
}

/// Rejection-samples `n` body patches with the supplied generator.
///
/// `low` and `reference` are on the [0, 1] scale; the HU body threshold of
/// `cfg` is mapped onto that scale.
pub fn sample_patch_pairs_with(
    low: &Volume,
    reference: &Volume,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    n: usize,
) -> Result<Vec<PatchPair>> {
    let [lz, ly, lx] = low.dims();
    if reference.dims() != [2 * lz, ly, lx] {
        return Err(GanError::Shape(format!(
            "reference dims {:?} must be (2·{lz}, {ly}, {lx})",
            reference.dims()
        )));
    }
    let [pd, ph, pw] = cfg.patch_dims;
    if pd > lz || ph > ly || pw > lx {
        return Err(GanError::Shape(format!(
            "patch {:?} exceeds volume {:?}",
            cfg.patch_dims,
            low.dims()
        )));
    }
    let threshold = hu_to_unit_value(cfg.body_threshold_hu);
    let cap = ATTEMPTS_PER_PATCH * n.max(1);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        if attempts == cap {
            return Err(GanError::Sampling(format!(
                "only {} of {n} patches reached body fraction {} after {cap} attempts",
                out.len(),
                cfg.body_fraction
            )));
        }
        attempts += 1;
        let origin = [
            rng.random_range(0..=lz - pd),
            rng.random_range(0..=ly - ph),
            rng.random_range(0..=lx - pw),
        ];
        if body_fraction(low, origin, cfg.patch_dims, threshold) < cfg.body_fraction {
            continue;
        }
        let y_origin = [2 * origin[0], origin[1], origin[2]];
        out.push(PatchPair {
            x: copy_patch(low, origin, cfg.patch_dims),
            y: copy_patch(reference, y_origin, [2 * pd, ph, pw]),
            x_origin: origin,
            y_origin,
        });
    }
    Ok(out)
}

/// Seeded wrapper around [`sample_patch_pairs_with`].
pub fn sample_patch_pairs(
    low: &Volume,
    reference: &Volume,
    cfg: &TrainConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<PatchPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_patch_pairs_with(low, reference, cfg, &mut rng, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::hu_to_unit;

    fn cfg() -> TrainConfig {
        TrainConfig {
            patch_dims: [2, 4, 4],
            ..Default::default()
        }
    }

    fn half_body(nz: usize) -> Volume {
        let vox = (0..nz * 8 * 8)
            .map(|i| if i % 8 < 4 { 40.0 } else { -1000.0 })
            .collect();
        hu_to_unit(&Volume::new([nz, 8, 8], [1.0; 3], vox).unwrap())
    }

    #[test]
    fn aligned_and_in_body() {
        let low = half_body(4);
        let reference = half_body(8);
        let pairs = sample_patch_pairs(&low, &reference, &cfg(), 9, 20).unwrap();
        assert_eq!(pairs.len(), 20);
        let thr = hu_to_unit_value(-500.0);
        for p in &pairs {
            assert_eq!(p.y_origin[0], 2 * p.x_origin[0]);
            assert_eq!(p.y_origin[1..], p.x_origin[1..]);
            assert_eq!(p.y.shape(), [1, 1, 4, 4, 4]);
            assert!(body_fraction(&low, p.x_origin, [2, 4, 4], thr) >= 0.25);
        }
        assert_eq!(
            pairs,
            sample_patch_pairs(&low, &reference, &cfg(), 9, 20).unwrap()
        );
    }

    #[test]
    fn all_air_fails() {
        let air = |nz| hu_to_unit(&Volume::filled([nz, 8, 8], [1.0; 3], -1000.0).unwrap());
        let r = sample_patch_pairs(&air(4), &air(8), &cfg(), 0, 2);
        assert!(matches!(r, Err(GanError::Sampling(_))));
    }

    #[test]
    fn misaligned_reference_rejected() {
        assert!(sample_patch_pairs(&half_body(4), &half_body(4), &cfg(), 0, 1).is_err());
    }
}
