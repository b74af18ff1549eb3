//! Per-slice radiomic features of nodule ROIs, normalized feature errors and
//! the paired Wilcoxon signed-rank test.

mod compare;
mod features;
mod wilcoxon;

pub use compare::{
    compare_methods, five_number_summary, BoxSummary, CaseRois, ComparisonReport, ErrorSample,
    Method, PairwiseTest, COMPARISONS, SIGNIFICANCE,
};
pub use features::{
    compute_glcm, feature_vector, normalized_error, quantize_roi, Feature, FeatureVector, Glcm,
    Quantized, BIN_WIDTH_HU, ERROR_EPS,
};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, WilcoxonMethod, WilcoxonResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RadiomicsError {
    #[error("slice of {rows}x{cols} is too small: {need}")]
    Undersized {
        rows: usize,
        cols: usize,
        need: &'static str,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("Wilcoxon test needs at least one pair")]
    NoPairs,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, RadiomicsError>;
