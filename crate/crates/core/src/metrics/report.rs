use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{perceptual_distance, psnr, ssim, MetricError, Result};
use crate::volume::{extract_plane_slices, hu_to_unit, Image2, Plane, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "PSNR")]
    Psnr,
    #[serde(rename = "SSIM")]
    Ssim,
    #[serde(rename = "SRF-PD")]
    Perceptual,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Psnr, Metric::Ssim, Metric::Perceptual];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Psnr => "PSNR",
            Metric::Ssim => "SSIM",
            Metric::Perceptual => "SRF-PD",
        }
    }

    /// Whether larger values mean better agreement.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Perceptual)
    }

    fn eval(self, a: &Image2, b: &Image2) -> Result<f64> {
        match self {
            Metric::Psnr => psnr(a, b),
            Metric::Ssim => ssim(a, b),
            Metric::Perceptual => perceptual_distance(a, b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCell {
    pub metric: Metric,
    pub plane: Plane,
    /// Mean over contributing slices; `None` when no slice contributed.
    pub mean: Option<f64>,
    pub count: usize,
    /// Slices left out of the mean because PSNR was infinite.
    pub excluded_infinite: usize,
}

/// Metric × plane table of slice-averaged values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cells: Vec<MetricCell>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn cell(&self, metric: Metric, plane: Plane) -> &MetricCell {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.plane == plane)
            .expect("report holds every metric/plane cell")
    }

    pub fn mean(&self, metric: Metric, plane: Plane) -> Option<f64> {
        self.cell(metric, plane).mean
    }

    /// Unweighted mean of the three plane means.
    pub fn plane_average(&self, metric: Metric) -> Option<f64> {
        let vals: Option<Vec<f64>> = Plane::ALL.iter().map(|&p| self.mean(metric, p)).collect();
        vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,plane,mean,count,excluded_infinite\n");
        for c in &self.cells {
            let mean = c.mean.map(|m| format!("{m:.6}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{mean},{},{}",
                c.metric.name(),
                c.plane.short_name(),
                c.count,
                c.excluded_infinite
            );
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
struct Tally {
    sum: f64,
    count: usize,
    infinite: usize,
}

/// Accumulates per-slice metric values across any number of volume pairs.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    tallies: Vec<Tally>,
    warnings: Vec<String>,
}

impl Default for MetricAccumulator {
    fn default() -> Self {
        MetricAccumulator {
            tallies: vec![Tally::default(); 9],
            warnings: Vec::new(),
        }
    }
}

fn slot(metric: Metric, plane: Plane) -> usize {
    let m = Metric::ALL.iter().position(|&x| x == metric).unwrap();
    let p = Plane::ALL.iter().position(|&x| x == plane).unwrap();
    m * 3 + p
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds every slice of `candidate` vs `reference`, both in HU.
    pub fn add_pair(&mut self, candidate: &Volume, reference: &Volume) -> Result<()> {
        if candidate.dims() != reference.dims() {
            return Err(MetricError::Shape(format!(
                "candidate dims {:?} vs reference dims {:?}",
                candidate.dims(),
                reference.dims()
            )));
        }
        let cu = hu_to_unit(candidate);
        let ru = hu_to_unit(reference);
        for plane in Plane::ALL {
            let cs = extract_plane_slices(&cu, plane);
            let rs = extract_plane_slices(&ru, plane);
            for metric in Metric::ALL {
                let values: Vec<Result<f64>> = cs
                    .par_iter()
                    .zip(rs.par_iter())
                    .map(|(a, b)| metric.eval(a, b))
                    .collect();
                let tally = &mut self.tallies[slot(metric, plane)];
                for v in values {
                    match v {
                        Ok(v) if v.is_infinite() => tally.infinite += 1,
                        Ok(v) => {
                            tally.sum += v;
                            tally.count += 1;
                        }
                        Err(MetricError::Undersized { rows, cols, min }) => {
                            self.warnings.push(format!(
                                "{} skipped on {} plane: {rows}x{cols} slices below {min}x{min}",
                                metric.name(),
                                plane.short_name()
                            ));
                            break;
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> MetricReport {
        let mut cells = Vec::with_capacity(9);
        for metric in Metric::ALL {
            for plane in Plane::ALL {
                let t = &self.tallies[slot(metric, plane)];
                cells.push(MetricCell {
                    metric,
                    plane,
                    mean: (t.count > 0).then(|| t.sum / t.count as f64),
                    count: t.count,
                    excluded_infinite: t.infinite,
                });
            }
        }
        MetricReport {
            cells,
            warnings: self.warnings.clone(),
        }
    }
}

/// Tri-planar metrics of one candidate volume against its reference (both HU).
pub fn evaluate_volume_pair(candidate: &Volume, reference: &Volume) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new();
    acc.add_pair(candidate, reference)?;
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(dims: [usize; 3]) -> Volume {
        let n = dims.iter().product();
        let vox = (0..n)
            .map(|i| -600.0 + 400.0 * ((i as f32 * 0.37).sin() + (i as f32 * 0.011).cos()))
            .collect();
        Volume::new(dims, [1.0; 3], vox).unwrap()
    }

    #[test]
    fn identity_report() {
        let v = textured([34, 33, 32]);
        let r = evaluate_volume_pair(&v, &v).unwrap();
        assert_eq!(r.cells.len(), 9);
        for plane in Plane::ALL {
            assert!((r.mean(Metric::Ssim, plane).unwrap() - 1.0).abs() < 1e-9);
            assert_eq!(r.mean(Metric::Perceptual, plane).unwrap(), 0.0);
            let psnr = r.cell(Metric::Psnr, plane);
            assert_eq!(psnr.mean, None);
            assert!(psnr.excluded_infinite > 0);
        }
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn undersized_plane_warns() {
        let v = textured([20, 40, 40]);
        let w = v.map(|x| x + 10.0);
        let r = evaluate_volume_pair(&w, &v).unwrap();
        assert!(r.mean(Metric::Perceptual, Plane::Axial).is_some());
        assert!(r.mean(Metric::Perceptual, Plane::Coronal).is_none());
        assert_eq!(r.warnings.len(), 2);
        assert!(r.mean(Metric::Ssim, Plane::Sagittal).is_some());
    }

    #[test]
    fn dims_mismatch() {
        assert!(evaluate_volume_pair(&textured([4, 32, 32]), &textured([5, 32, 32])).is_err());
    }

    #[test]
    fn csv_layout() {
        let v = textured([32, 32, 32]);
        let csv = evaluate_volume_pair(&v.map(|x| x + 5.0), &v)
            .unwrap()
            .to_csv();
        assert_eq!(csv.lines().count(), 10);
        assert!(csv.contains("SRF-PD,Sa,"));
    }
}
