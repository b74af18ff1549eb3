use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    feature_vector, normalized_error, wilcoxon_signed_rank, Alternative, Feature, FeatureVector,
    RadiomicsError, Result, WilcoxonResult,
};
use crate::volume::{extract_plane_slices, Plane, Volume};

pub const SIGNIFICANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Raw,
    Cnn,
    Gan,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Raw, Method::Cnn, Method::Gan];

    pub fn name(self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::Cnn => "cnn",
            Method::Gan => "gan",
        }
    }
}

/// Pairwise comparisons `(a, b)`, testing errors of `a` against `b`.
pub const COMPARISONS: [(Method, Method); 3] = [
    (Method::Gan, Method::Raw),
    (Method::Gan, Method::Cnn),
    (Method::Cnn, Method::Raw),
];

/// Nodule ROIs of one test case, all in HU with identical dims. `raw` must
/// already be z-matched to the reference grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseRois {
    pub case: String,
    pub reference: Volume,
    pub raw: Volume,
    pub cnn: Volume,
    pub gan: Volume,
}

impl CaseRois {
    fn candidate(&self, m: Method) -> &Volume {
        match m {
            Method::Raw => &self.raw,
            Method::Cnn => &self.cnn,
            Method::Gan => &self.gan,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub feature: Feature,
    pub method: Method,
    pub case: String,
    pub slice: usize,
    pub candidate: f64,
    pub reference: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub feature: Feature,
    pub a: Method,
    pub b: Method,
    pub result: WilcoxonResult,
    pub significant: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub feature: Feature,
    pub method: Method,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub errors: Vec<ErrorSample>,
    pub tests: Vec<PairwiseTest>,
    pub boxplots: Vec<BoxSummary>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// (min, Q1, median, Q3, max); `None` for an empty sample.
pub fn five_number_summary(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some([
        v[0],
        quantile(&v, 0.25),
        quantile(&v, 0.5),
        quantile(&v, 0.75),
        v[v.len() - 1],
    ])
}

fn slice_features(v: &Volume) -> Result<Vec<FeatureVector>> {
    extract_plane_slices(v, Plane::Axial)
        .par_iter()
        .map(feature_vector)
        .collect()
}

impl ComparisonReport {
    pub fn errors_of(&self, feature: Feature, method: Method) -> Vec<f64> {
        self.errors
            .iter()
            .filter(|e| e.feature == feature && e.method == method)
            .map(|e| e.error)
            .collect()
    }

    pub fn boxplot(&self, feature: Feature, method: Method) -> Option<&BoxSummary> {
        self.boxplots
            .iter()
            .find(|b| b.feature == feature && b.method == method)
    }

    pub fn test(&self, feature: Feature, a: Method, b: Method) -> Option<&PairwiseTest> {
        self.tests
            .iter()
            .find(|t| t.feature == feature && t.a == a && t.b == b)
    }

    pub fn errors_csv(&self) -> String {
        let mut s = String::from("feature,method,case,slice,candidate,reference,error\n");
        for e in &self.errors {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.9e},{:.9e},{:.9e}",
                e.feature.name(),
                e.method.name(),
                e.case,
                e.slice,
                e.candidate,
                e.reference,
                e.error
            );
        }
        s
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from("feature,comparison,alternative,n,W,p,significant,method\n");
        for t in &self.tests {
            let _ = writeln!(
                s,
                "{},{}-vs-{},{:?},{},{},{:.6e},{},{:?}",
                t.feature.name(),
                t.a.name(),
                t.b.name(),
                t.result.alternative,
                t.result.n_effective,
                t.result.statistic,
                t.result.p_value,
                t.significant,
                t.result.method
            );
        }
        s
    }

    pub fn boxplot_csv(&self) -> String {
        let mut s = String::from("feature,method,n,min,q1,median,q3,max\n");
        for b in &self.boxplots {
            let _ = writeln!(
                s,
                "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                b.feature.name(),
                b.method.name(),
                b.n,
                b.min,
                b.q1,
                b.median,
                b.q3,
                b.max
            );
        }
        s
    }
}

/// Per-slice feature errors of raw/CNN/GAN ROIs against the reference,
/// pairwise Wilcoxon tests on those errors and box-plot summaries.
pub fn compare_methods(cases: &[CaseRois], alternative: Alternative) -> Result<ComparisonReport> {
    let mut errors = Vec::new();
    for c in cases {
        let dims = c.reference.dims();
        for m in Method::ALL {
            if c.candidate(m).dims() != dims {
                return Err(RadiomicsError::Shape(format!(
                    "case {}: {} ROI {:?} vs reference {:?}",
                    c.case,
                    m.name(),
                    c.candidate(m).dims(),
                    dims
                )));
            }
        }
        let reference = slice_features(&c.reference)?;
        for m in Method::ALL {
            let cand = slice_features(c.candidate(m))?;
            for f in Feature::ALL {
                for (i, (x_hat, x)) in cand.iter().zip(&reference).enumerate() {
                    let (xh, xr) = (x_hat.get(f), x.get(f));
                    errors.push(ErrorSample {
                        feature: f,
                        method: m,
                        case: c.case.clone(),
                        slice: i,
                        candidate: xh,
                        reference: xr,
                        error: normalized_error(xh, xr),
                    });
                }
            }
        }
    }
    let mut report = ComparisonReport {
        errors,
        tests: Vec::new(),
        boxplots: Vec::new(),
    };
    for f in Feature::ALL {
        for m in Method::ALL {
            let e = report.errors_of(f, m);
            if let Some([min, q1, median, q3, max]) = five_number_summary(&e) {
                report.boxplots.push(BoxSummary {
                    feature: f,
                    method: m,
                    n: e.len(),
                    min,
                    q1,
                    median,
                    q3,
                    max,
                });
            }
        }
        for (a, b) in COMPARISONS {
            let ea = report.errors_of(f, a);
            let eb = report.errors_of(f, b);
            if ea.is_empty() {
                continue;
            }
            let pairs: Vec<(f64, f64)> = ea.into_iter().zip(eb).collect();
            let result = wilcoxon_signed_rank(&pairs, alternative)?;
            report.tests.push(PairwiseTest {
                feature: f,
                a,
                b,
                significant: !result.degenerate && result.p_value < SIGNIFICANCE,
                result,
            });
        }
    }
    Ok(report)
}
