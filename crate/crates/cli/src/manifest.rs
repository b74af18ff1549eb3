//! Experiment manifests and the on-disk layout they imply.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ctnorm::gan::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
use ctnorm::sim::{AcquisitionConfig, PhantomSpec, ReconWindow, PHANTOM_SLICE_MM};
use serde::{Deserialize, Serialize};

use crate::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: String,
    pub seed: u64,
    pub split: Split,
}

/// A dose / slice-thickness acquisition setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub dose: f64,
    pub slice_thickness_mm: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSettings {
    pub n0: f64,
    pub window: ReconWindow,
    pub n_angles: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferenceSettings {
    /// Input tile (D, H, W).
    pub tile: [usize; 3],
    pub z_overlap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSettings {
    /// Nodule ROI extent (z, y, x) on the reference grid.
    pub roi_extent: [usize; 3],
    /// Scenarios to train, normalize and evaluate; empty means all.
    pub scenarios: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub name: String,
    /// Relative paths are resolved against the manifest file's directory.
    pub output_dir: PathBuf,
    pub seed: u64,
    pub phantom: PhantomSpec,
    /// Random nodules placed per case; 0 keeps the nodules of `phantom`.
    pub nodules_per_case: usize,
    pub cases: Vec<CaseSpec>,
    pub reference: ScenarioSpec,
    pub scenarios: Vec<ScenarioSpec>,
    pub acquisition: AcquisitionSettings,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    pub inference: InferenceSettings,
    pub evaluation: EvaluationSettings,
}

impl Default for ExperimentManifest {
    /// Desk-scale experiment: 12 phantoms split 8/2/2, scenarios A/B/C.
    fn default() -> Self {
        let cases = (0..12)
            .map(|i| CaseSpec {
                id: format!("case{i:02}"),
                seed: i as u64 + 1,
                split: match i {
                    0..=7 => Split::Train,
                    8 | 9 => Split::Val,
                    _ => Split::Test,
                },
            })
            .collect();
        let scenario = |name: &str, dose| ScenarioSpec {
            name: name.into(),
            dose,
            slice_thickness_mm: 2.0,
        };
        ExperimentManifest {
            name: "desk".into(),
            output_dir: PathBuf::from("runs/desk"),
            seed: 2020,
            phantom: PhantomSpec::default(),
            nodules_per_case: 2,
            cases,
            reference: ScenarioSpec {
                name: "reference".into(),
                dose: 1.0,
                slice_thickness_mm: 1.0,
            },
            scenarios: vec![scenario("A", 0.1), scenario("B", 0.25), scenario("C", 0.5)],
            acquisition: AcquisitionSettings {
                n0: 2e3,
                window: ReconWindow::Hann,
                n_angles: 180,
            },
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceSettings {
                tile: [16, 64, 64],
                z_overlap: 4,
            },
            evaluation: EvaluationSettings {
                roi_extent: [30, 32, 32],
                scenarios: Vec::new(),
            },
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// splitmix64 finaliser, used to derive independent seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut m: ExperimentManifest =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        if m.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                m.output_dir = dir.join(&m.output_dir);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.phantom
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if self.cases.is_empty() {
            return Err(invalid("manifest lists no cases"));
        }
        let mut ids = HashSet::new();
        for c in &self.cases {
            if c.id.is_empty() || c.id.contains(['/', '\\']) {
                return Err(invalid(format!("bad case id {:?}", c.id)));
            }
            if !ids.insert(&c.id) {
                return Err(invalid(format!("duplicate case id {}", c.id)));
            }
        }
        if self.cases_in(Split::Train).is_empty() {
            return Err(invalid("no training cases"));
        }
        if self.reference.slice_thickness_mm != 1.0 {
            return Err(invalid("reference slice thickness must be 1.0 mm"));
        }
        let mut names = HashSet::from([self.reference.name.as_str()]);
        for s in &self.scenarios {
            if s.slice_thickness_mm != 2.0 {
                return Err(invalid(format!(
                    "scenario {} must use 2.0 mm slices (the generator doubles z)",
                    s.name
                )));
            }
            if s.name.is_empty() || s.name.contains(['/', '\\']) || !names.insert(&s.name) {
                return Err(invalid(format!(
                    "bad or duplicate scenario name {:?}",
                    s.name
                )));
            }
        }
        for s in std::iter::once(&self.reference).chain(&self.scenarios) {
            self.acquisition_config(s, 0)
                .validate()
                .map_err(|e| invalid(format!("{}: {e}", s.name)))?;
        }
        for name in &self.evaluation.scenarios {
            self.scenario(name)?;
        }
        let slab = (2.0 / PHANTOM_SLICE_MM) as usize;
        if !self.phantom.dims[0].is_multiple_of(slab) {
            return Err(invalid(format!(
                "phantom nz {} must be divisible by {slab}",
                self.phantom.dims[0]
            )));
        }
        self.generator
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.discriminator
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        let low = self.low_dims();
        if (0..3).any(|a| self.train.patch_dims[a] > low[a]) {
            return Err(invalid(format!(
                "patch {:?} exceeds scenario volume {low:?}",
                self.train.patch_dims
            )));
        }
        if !low[0].is_multiple_of(self.train.patch_dims[0]) {
            return Err(invalid(format!(
                "patch depth {} does not divide scenario depth {}",
                self.train.patch_dims[0], low[0]
            )));
        }
        let t = self.inference.tile;
        if (0..3).any(|a| t[a] == 0 || t[a] > low[a]) {
            return Err(invalid(format!(
                "inference tile {t:?} does not fit {low:?}"
            )));
        }
        let e = self.evaluation.roi_extent;
        let r = self.reference_dims();
        if (0..3).any(|a| e[a] == 0 || e[a] > r[a]) {
            return Err(invalid(format!("ROI extent {e:?} does not fit {r:?}")));
        }
        Ok(())
    }

    pub fn cases_in(&self, split: Split) -> Vec<&CaseSpec> {
        self.cases.iter().filter(|c| c.split == split).collect()
    }

    pub fn scenario(&self, name: &str) -> Result<&ScenarioSpec> {
        self.scenarios
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| invalid(format!("unknown scenario {name}")))
    }

    /// Scenarios selected for training and evaluation.
    pub fn active_scenarios(&self) -> Vec<&ScenarioSpec> {
        if self.evaluation.scenarios.is_empty() {
            self.scenarios.iter().collect()
        } else {
            self.scenarios
                .iter()
                .filter(|s| self.evaluation.scenarios.contains(&s.name))
                .collect()
        }
    }

    pub fn acquisition_config(&self, s: &ScenarioSpec, seed: u64) -> AcquisitionConfig {
        AcquisitionConfig {
            dose: s.dose,
            slice_thickness_mm: s.slice_thickness_mm,
            n0: self.acquisition.n0,
            window: self.acquisition.window,
            n_angles: self.acquisition.n_angles,
            seed,
        }
    }

    pub fn phantom_seed(&self, case: &CaseSpec) -> u64 {
        mix_seed(self.seed, case.seed)
    }

    /// Independent noise seed per case and acquisition (0 = reference).
    pub fn scan_seed(&self, case: &CaseSpec, acquisition: usize) -> u64 {
        mix_seed(mix_seed(self.seed, case.seed), 0x5CA0 + acquisition as u64)
    }

    pub fn train_config(&self, scenario_index: usize, kind: ModelKind) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.seed = mix_seed(mix_seed(self.seed, self.train.seed), scenario_index as u64);
        if kind == ModelKind::Cnn {
            cfg.alpha1 = 0.0;
        }
        cfg
    }

    pub fn reference_dims(&self) -> [usize; 3] {
        let [nz, ny, nx] = self.phantom.dims;
        [nz / 2, ny, nx]
    }

    pub fn low_dims(&self) -> [usize; 3] {
        let [nz, ny, nx] = self.phantom.dims;
        [nz / 4, ny, nx]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gan,
    /// Same generator trained with the L1 term only.
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Gan, ModelKind::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gan => "gan",
            ModelKind::Cnn => "cnn",
        }
    }
}

/// Paths of every artifact under the output root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn case_dir(&self, id: &str) -> PathBuf {
        self.root.join("cases").join(id)
    }

    pub fn phantom(&self, id: &str) -> PathBuf {
        self.case_dir(id).join("phantom.ctv")
    }

    pub fn rois(&self, id: &str) -> PathBuf {
        self.case_dir(id).join("rois.json")
    }

    pub fn reference(&self, id: &str) -> PathBuf {
        self.case_dir(id).join("reference.ctv")
    }

    pub fn scenario_input(&self, id: &str, scenario: &str) -> PathBuf {
        self.case_dir(id).join(scenario).join("input.ctv")
    }

    pub fn normalized(&self, id: &str, scenario: &str, kind: ModelKind) -> PathBuf {
        self.case_dir(id)
            .join(scenario)
            .join(format!("{}.ctv", kind.name()))
    }

    pub fn model_dir(&self, scenario: &str, kind: ModelKind) -> PathBuf {
        self.root.join("models").join(scenario).join(kind.name())
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let m = ExperimentManifest::default();
        m.validate().unwrap();
        assert_eq!(m.cases_in(Split::Train).len(), 8);
        assert_eq!(m.cases_in(Split::Val).len(), 2);
        assert_eq!(m.cases_in(Split::Test).len(), 2);
        let back: ExperimentManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_manifests() {
        let mut m = ExperimentManifest::default();
        m.cases[1].id = m.cases[0].id.clone();
        assert!(matches!(m.validate(), Err(PipelineError::Config(_))));
        let mut m = ExperimentManifest::default();
        m.scenarios[0].slice_thickness_mm = 1.0;
        assert!(m.validate().is_err());
        let mut m = ExperimentManifest::default();
        m.train.patch_dims = [64, 32, 32];
        assert!(m.validate().is_err());
        let mut m = ExperimentManifest::default();
        m.evaluation.scenarios = vec!["Z".into()];
        assert!(m.validate().is_err());
    }

    #[test]
    fn seeds_differ() {
        let m = ExperimentManifest::default();
        let c = &m.cases[0];
        assert_ne!(m.scan_seed(c, 0), m.scan_seed(c, 1));
        assert_ne!(m.phantom_seed(c), m.phantom_seed(&m.cases[1]));
        assert_ne!(
            m.train_config(0, ModelKind::Gan).seed,
            m.train_config(1, ModelKind::Gan).seed
        );
        assert_eq!(m.train_config(0, ModelKind::Cnn).alpha1, 0.0);
    }
}
