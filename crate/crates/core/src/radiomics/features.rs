use serde::{Deserialize, Serialize};

use super::{RadiomicsError, Result};
use crate::volume::Image2;

pub const BIN_WIDTH_HU: f64 = 25.0;
/// Floor on `|x|` in [`normalized_error`].
pub const ERROR_EPS: f64 = 1e-8;

const OFFSETS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    Mean,
    Variance,
    Skewness,
    Kurtosis,
    Entropy,
    Contrast,
    Correlation,
    JointEnergy,
    InverseDifferenceMoment,
}

impl Feature {
    pub const ALL: [Feature; 9] = [
        Feature::Mean,
        Feature::Variance,
        Feature::Skewness,
        Feature::Kurtosis,
        Feature::Entropy,
        Feature::Contrast,
        Feature::Correlation,
        Feature::JointEnergy,
        Feature::InverseDifferenceMoment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Mean => "Mean",
            Feature::Variance => "Variance",
            Feature::Skewness => "Skewness",
            Feature::Kurtosis => "Kurtosis",
            Feature::Entropy => "Entropy",
            Feature::Contrast => "Contrast",
            Feature::Correlation => "Correlation",
            Feature::JointEnergy => "JointEnergy",
            Feature::InverseDifferenceMoment => "IDM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub entropy: f64,
    pub contrast: f64,
    pub correlation: f64,
    pub joint_energy: f64,
    pub idm: f64,
}

impl FeatureVector {
    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Mean => self.mean,
            Feature::Variance => self.variance,
            Feature::Skewness => self.skewness,
            Feature::Kurtosis => self.kurtosis,
            Feature::Entropy => self.entropy,
            Feature::Contrast => self.contrast,
            Feature::Correlation => self.correlation,
            Feature::JointEnergy => self.joint_energy,
            Feature::InverseDifferenceMoment => self.idm,
        }
    }
}

/// Fixed-width bin labels of one ROI slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantized {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u32>,
    pub n_bins: usize,
}

/// Bins of [`BIN_WIDTH_HU`] anchored at the slice minimum.
pub fn quantize_roi(slice: &Image2) -> Quantized {
    let min = slice
        .data
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v as f64));
    let labels: Vec<u32> = slice
        .data
        .iter()
        .map(|&v| ((v as f64 - min) / BIN_WIDTH_HU).floor() as u32)
        .collect();
    let n_bins = labels.iter().max().map_or(0, |&m| m as usize + 1);
    Quantized {
        rows: slice.rows,
        cols: slice.cols,
        labels,
        n_bins,
    }
}

/// Normalized, symmetric gray-level co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub n: usize,
    /// Row-major `n × n` probabilities.
    pub p: Vec<f64>,
}

impl Glcm {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

/// Co-occurrences at distance 1 over offsets (0,1), (1,0), (1,1), (1,−1),
/// each pair counted in both directions.
pub fn compute_glcm(q: &Quantized) -> Result<Glcm> {
    if q.labels.len() < 2 {
        return Err(RadiomicsError::Undersized {
            rows: q.rows,
            cols: q.cols,
            need: "at least 2 pixels",
        });
    }
    let n = q.n_bins;
    let mut counts = vec![0u64; n * n];
    for r in 0..q.rows {
        for c in 0..q.cols {
            let a = q.labels[r * q.cols + c] as usize;
            for (dr, dc) in OFFSETS {
                let (r2, c2) = (r as isize + dr, c as isize + dc);
                if r2 < 0 || c2 < 0 || r2 as usize >= q.rows || c2 as usize >= q.cols {
                    continue;
                }
                let b = q.labels[r2 as usize * q.cols + c2 as usize] as usize;
                counts[a * n + b] += 1;
                counts[b * n + a] += 1;
            }
        }
    }
    let total: u64 = counts.iter().sum();
    let p = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(Glcm { n, p })
}

/// First-order and GLCM features of one ROI slice (HU).
///
/// Skewness and kurtosis are 0 and correlation is 1 for constant slices.
pub fn feature_vector(slice: &Image2) -> Result<FeatureVector> {
    if slice.rows < 2 || slice.cols < 2 {
        return Err(RadiomicsError::Undersized {
            rows: slice.rows,
            cols: slice.cols,
            need: "at least 2x2",
        });
    }
    if slice.data.iter().any(|v| !v.is_finite()) {
        return Err(RadiomicsError::NonFinite("ROI slice"));
    }
    let n = slice.data.len() as f64;
    let mean = slice.data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in &slice.data {
        let d = v as f64 - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let (skewness, kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };

    let q = quantize_roi(slice);
    let mut hist = vec![0usize; q.n_bins];
    for &l in &q.labels {
        hist[l as usize] += 1;
    }
    let entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);

    let glcm = compute_glcm(&q)?;
    let k = glcm.n;
    let mut mu = 0.0;
    for i in 0..k {
        for j in 0..k {
            mu += i as f64 * glcm.get(i, j);
        }
    }
    let (mut var, mut cov, mut contrast, mut energy, mut idm) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            let p = glcm.get(i, j);
            if p == 0.0 {
                continue;
            }
            let (di, dj) = (i as f64 - mu, j as f64 - mu);
            let diff = (i as f64 - j as f64).powi(2);
            var += di * di * p;
            cov += di * dj * p;
            contrast += diff * p;
            energy += p * p;
            idm += p / (1.0 + diff);
        }
    }
    let correlation = if var > 1e-12 {
        (cov / var).clamp(-1.0, 1.0)
    } else {
        1.0
    };
    Ok(FeatureVector {
        mean,
        variance: m2,
        skewness,
        kurtosis,
        entropy,
        contrast,
        correlation,
        joint_energy: energy,
        idm,
    })
}

/// `|x̂ − x| / max(|x|, ε)`.
pub fn normalized_error(candidate: f64, reference: f64) -> f64 {
    (candidate - reference).abs() / reference.abs().max(ERROR_EPS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_edges() {
        let q = quantize_roi(&Image2::new(1, 2, vec![-100.0, -76.0]));
        assert_eq!(q.labels, vec![0, 0]);
        let q = quantize_roi(&Image2::new(1, 2, vec![-100.0, -74.0]));
        assert_eq!(q.labels, vec![0, 1]);
        assert_eq!(q.n_bins, 2);
    }

    #[test]
    fn constant_slice() {
        let f = feature_vector(&Image2::new(4, 4, vec![37.0; 16])).unwrap();
        assert_eq!(f.mean, 37.0);
        assert_eq!(f.variance, 0.0);
        assert_eq!(f.entropy, 0.0);
        assert_eq!(f.joint_energy, 1.0);
        assert_eq!(f.idm, 1.0);
        assert_eq!(f.contrast, 0.0);
        assert_eq!(f.correlation, 1.0);
    }

    #[test]
    fn two_by_two_glcm() {
        let q = Quantized {
            rows: 2,
            cols: 2,
            labels: vec![0, 0, 1, 1],
            n_bins: 2,
        };
        let g = compute_glcm(&q).unwrap();
        // (0,1): 0-0, 1-1; (1,0): 0-1 twice; (1,1): 0-1; (1,-1): 0-1; all doubled.
        assert_eq!(g.get(0, 0), 2.0 / 12.0);
        assert_eq!(g.get(1, 1), 2.0 / 12.0);
        assert_eq!(g.get(0, 1), 4.0 / 12.0);
        assert_eq!(g.get(1, 0), 4.0 / 12.0);
    }

    #[test]
    fn checkerboard_texture() {
        let data = (0..36)
            .map(|i| if (i / 6 + i % 6) % 2 == 0 { 0.0 } else { 100.0 })
            .collect();
        let f = feature_vector(&Image2::new(6, 6, data)).unwrap();
        assert!(f.contrast > 0.0);
        assert!(f.idm < 1.0);
        assert!((-1.0..=1.0).contains(&f.correlation));
    }

    #[test]
    fn error_guard() {
        assert_eq!(normalized_error(2.0, 2.0), 0.0);
        assert!((normalized_error(1.1, 1.0) - 0.1).abs() < 1e-12);
        assert!((normalized_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn undersized() {
        assert!(feature_vector(&Image2::new(1, 5, vec![0.0; 5])).is_err());
    }
}
