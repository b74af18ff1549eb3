//! Manifest-driven orchestration of the ctnorm pipeline: phantom generation,
//! acquisition simulation, training, normalization and evaluation, plus the
//! table and SVG emitters behind the `ctnorm` binary.

pub mod manifest;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{
    mix_seed, AcquisitionSettings, CaseSpec, EvaluationSettings, ExperimentManifest,
    InferenceSettings, Layout, ModelKind, ScenarioSpec, Split,
};
pub use pipeline::{
    evaluate, evaluate_scenario, normalize_all, normalize_file, phantoms, run_all, scans,
    train_model, CaseVolumes, NormalizeSidecar, Pipeline,
};
pub use report::{boxplot_svg, EvaluationSummary, ScenarioEvaluation, ScenarioSummary};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("refusing to overwrite {0} (use --force)")]
    Exists(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing input {0}")]
    Missing(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Volume {
        path: PathBuf,
        source: ctnorm::volume::VolumeError,
    },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        source: ctnorm::neural::NeuralError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Sim(#[from] ctnorm::sim::SimError),
    #[error(transparent)]
    Gan(#[from] ctnorm::gan::GanError),
    #[error(transparent)]
    Metric(#[from] ctnorm::metrics::MetricError),
    #[error(transparent)]
    Radiomics(#[from] ctnorm::radiomics::RadiomicsError),
    #[error(transparent)]
    VolumeOp(#[from] ctnorm::volume::VolumeError),
}

impl PipelineError {
    /// 2 for a refused overwrite, 3 for invalid configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Exists(_) => 2,
            PipelineError::Config(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
