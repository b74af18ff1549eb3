//! Pipeline stages. Each stage reads the artifacts of the previous one from
//! the manifest's output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ctnorm::gan::{
    generator_from_checkpoint, normalize_volume, train, TrainData, TrainSummary, Trainer,
    VolumePair,
};
use ctnorm::metrics::MetricAccumulator;
use ctnorm::neural::load_checkpoint;
use ctnorm::radiomics::{compare_methods, Alternative, CaseRois};
use ctnorm::sim::{generate_phantom, simulate_acquisition, NoduleRoi};
use ctnorm::volume::{crop_roi, load_volume, resample_z_nearest, save_volume, RoiBox, Volume};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::manifest::{ExperimentManifest, Layout, ModelKind, ScenarioSpec, Split};
use crate::report::{write_reports, EvaluationSummary, ScenarioEvaluation};
use crate::{PipelineError, Result};

/// A manifest together with its output layout and overwrite policy.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub manifest: ExperimentManifest,
    pub layout: Layout,
    pub force: bool,
}

impl Pipeline {
    pub fn new(manifest: ExperimentManifest, force: bool) -> Result<Self> {
        manifest.validate()?;
        let layout = Layout::new(&manifest.output_dir);
        Ok(Pipeline {
            manifest,
            layout,
            force,
        })
    }

    fn guard(&self, paths: &[PathBuf]) -> Result<()> {
        if self.force {
            return Ok(());
        }
        match paths.iter().find(|p| p.exists()) {
            Some(p) => Err(PipelineError::Exists(p.clone())),
            None => Ok(()),
        }
    }

    fn scenario_index(&self, name: &str) -> Result<usize> {
        self.manifest.scenario(name)?;
        Ok(self
            .manifest
            .scenarios
            .iter()
            .position(|s| s.name == name)
            .unwrap())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, text + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(PipelineError::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| PipelineError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_volume(path: &Path, v: &Volume) -> Result<()> {
    create_parent(path)?;
    save_volume(v, path).map_err(|source| PipelineError::Volume {
        path: path.to_path_buf(),
        source,
    })
}

fn read_volume(path: &Path) -> Result<Volume> {
    if !path.exists() {
        return Err(PipelineError::Missing(path.to_path_buf()));
    }
    load_volume(path).map_err(|source| PipelineError::Volume {
        path: path.to_path_buf(),
        source,
    })
}

/// Generates every case phantom and its nodule ROI list.
pub fn phantoms(p: &Pipeline) -> Result<()> {
    let m = &p.manifest;
    let outputs: Vec<PathBuf> = m
        .cases
        .iter()
        .flat_map(|c| [p.layout.phantom(&c.id), p.layout.rois(&c.id)])
        .collect();
    p.guard(&outputs)?;
    let generated: Vec<Result<()>> = m
        .cases
        .par_iter()
        .map(|c| {
            let seed = m.phantom_seed(c);
            let spec = if m.nodules_per_case > 0 {
                m.phantom
                    .clone()
                    .with_random_nodules(m.nodules_per_case, seed)
            } else {
                m.phantom.clone()
            };
            let ph = generate_phantom(&spec, seed)?;
            write_volume(&p.layout.phantom(&c.id), &ph.volume)?;
            write_json(&p.layout.rois(&c.id), &ph.nodules)
        })
        .collect();
    generated.into_iter().collect::<Result<()>>()?;
    info!("generated {} phantoms", m.cases.len());
    Ok(())
}

/// Simulates the reference and every scenario acquisition for each case.
pub fn scans(p: &Pipeline) -> Result<()> {
    let m = &p.manifest;
    let mut outputs = Vec::new();
    for c in &m.cases {
        let phantom = p.layout.phantom(&c.id);
        if !phantom.exists() {
            return Err(PipelineError::Missing(phantom));
        }
        outputs.push(p.layout.reference(&c.id));
        outputs.extend(
            m.scenarios
                .iter()
                .map(|s| p.layout.scenario_input(&c.id, &s.name)),
        );
    }
    p.guard(&outputs)?;
    for c in &m.cases {
        let phantom = read_volume(&p.layout.phantom(&c.id))?;
        let acquisitions = std::iter::once((&m.reference, p.layout.reference(&c.id))).chain(
            m.scenarios
                .iter()
                .map(|s| (s, p.layout.scenario_input(&c.id, &s.name))),
        );
        for (k, (s, path)) in acquisitions.enumerate() {
            let cfg = m.acquisition_config(s, m.scan_seed(c, k));
            let vol = simulate_acquisition(&phantom, &cfg)?;
            write_volume(&path, &vol)?;
        }
        info!("scanned {}", c.id);
    }
    Ok(())
}

fn load_pairs(p: &Pipeline, scenario: &ScenarioSpec, split: Split) -> Result<Vec<VolumePair>> {
    p.manifest
        .cases_in(split)
        .into_iter()
        .map(|c| {
            Ok(VolumePair {
                low: read_volume(&p.layout.scenario_input(&c.id, &scenario.name))?,
                reference: read_volume(&p.layout.reference(&c.id))?,
            })
        })
        .collect()
}

/// Trains the GAN (or the L1-only CNN baseline) for one scenario.
pub fn train_model(
    p: &Pipeline,
    scenario: &str,
    kind: ModelKind,
    resume: bool,
) -> Result<TrainSummary> {
    let idx = p.scenario_index(scenario)?;
    let spec = &p.manifest.scenarios[idx];
    let dir = p.layout.model_dir(scenario, kind);
    let last = dir.join("last.ctw");
    let resume = resume && last.exists();
    if !resume && dir.exists() {
        p.guard(&[last.clone(), dir.join("train_log.csv")])?;
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let train_pairs = load_pairs(p, spec, Split::Train)?;
    let val_pairs = load_pairs(p, spec, Split::Val)?;
    let data = TrainData::new(&train_pairs, &val_pairs)?;
    let cfg = p.manifest.train_config(idx, kind);
    let mut trainer = Trainer::new(p.manifest.generator, p.manifest.discriminator, cfg)?;
    info!(
        "training {} for scenario {scenario} ({} train / {} val cases)",
        kind.name(),
        data.n_train(),
        data.n_val()
    );
    let summary = train(&mut trainer, &data, &dir, resume, &mut |log| {
        if let Some(v) = log.validation {
            info!(
                "{} {scenario} it {}: l1 {:.4e} val PSNR {:.2} SSIM {:.4} SRF-PD {:.4e}",
                kind.name(),
                log.iteration,
                log.g_loss_l1,
                v.psnr,
                v.ssim,
                v.perceptual
            );
        }
    })?;
    Ok(summary)
}

/// Metadata written next to every normalized volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizeSidecar {
    pub checkpoint: PathBuf,
    pub checkpoint_sha256: String,
    pub input: PathBuf,
    pub tile: [usize; 3],
    pub z_overlap: usize,
    pub input_dims: [usize; 3],
    pub output_dims: [usize; 3],
    pub wall_time_s: f64,
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    output.with_extension("json")
}

/// Normalizes one volume file with a generator checkpoint. The tile is
/// clipped to the input dims, so small volumes run as a single tile.
pub fn normalize_file(
    checkpoint: &Path,
    input: &Path,
    output: &Path,
    tile: [usize; 3],
    z_overlap: usize,
    force: bool,
) -> Result<NormalizeSidecar> {
    let sidecar = sidecar_path(output);
    if !force {
        if let Some(existing) = [output, sidecar.as_path()].into_iter().find(|p| p.exists()) {
            return Err(PipelineError::Exists(existing.to_path_buf()));
        }
    }
    if !checkpoint.exists() {
        return Err(PipelineError::Missing(checkpoint.to_path_buf()));
    }
    let bytes = fs::read(checkpoint).map_err(io_err(checkpoint))?;
    let hash = Sha256::digest(&bytes);
    let tensors = load_checkpoint(checkpoint).map_err(|source| PipelineError::Checkpoint {
        path: checkpoint.to_path_buf(),
        source,
    })?;
    let g = generator_from_checkpoint(&tensors)?;
    let low = read_volume(input)?;
    let dims = low.dims();
    let tile = [0, 1, 2].map(|a| tile[a].min(dims[a]));
    let z_overlap = z_overlap.min(tile[0].saturating_sub(1));
    let start = Instant::now();
    let out = normalize_volume(&g, &low, tile, z_overlap)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    write_volume(output, &out)?;
    let meta = NormalizeSidecar {
        checkpoint: checkpoint.to_path_buf(),
        checkpoint_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        input: input.to_path_buf(),
        tile,
        z_overlap,
        input_dims: dims,
        output_dims: out.dims(),
        wall_time_s,
    };
    write_json(&sidecar, &meta)?;
    Ok(meta)
}

/// `best.ctw` when validation produced one, otherwise `last.ctw`.
pub fn model_checkpoint(p: &Pipeline, scenario: &str, kind: ModelKind) -> Result<PathBuf> {
    let dir = p.layout.model_dir(scenario, kind);
    let best = dir.join("best.ctw");
    if best.exists() {
        return Ok(best);
    }
    let last = dir.join("last.ctw");
    if last.exists() {
        Ok(last)
    } else {
        Err(PipelineError::Missing(last))
    }
}

/// Normalizes every test case of every active scenario with both models.
pub fn normalize_all(p: &Pipeline) -> Result<()> {
    let m = &p.manifest;
    let scenarios = m.active_scenarios();
    let tests = m.cases_in(Split::Test);
    let mut outputs = Vec::new();
    for s in &scenarios {
        for c in &tests {
            for kind in ModelKind::ALL {
                let out = p.layout.normalized(&c.id, &s.name, kind);
                outputs.push(sidecar_path(&out));
                outputs.push(out);
            }
        }
    }
    p.guard(&outputs)?;
    for s in &scenarios {
        for kind in ModelKind::ALL {
            let ckpt = model_checkpoint(p, &s.name, kind)?;
            for c in &tests {
                let meta = normalize_file(
                    &ckpt,
                    &p.layout.scenario_input(&c.id, &s.name),
                    &p.layout.normalized(&c.id, &s.name, kind),
                    m.inference.tile,
                    m.inference.z_overlap,
                    true,
                )?;
                info!(
                    "normalized {} {} with {} in {:.1}s",
                    c.id,
                    s.name,
                    kind.name(),
                    meta.wall_time_s
                );
            }
        }
    }
    Ok(())
}

/// One test case of one scenario, all volumes in HU. `raw` is the thick
/// acquisition; `cnn` and `gan` are on the reference grid.
#[derive(Debug, Clone)]
pub struct CaseVolumes {
    pub id: String,
    pub reference: Volume,
    pub raw: Volume,
    pub cnn: Volume,
    pub gan: Volume,
    /// Nodule centres on the reference grid.
    pub nodules: Vec<[usize; 3]>,
}

/// Maps phantom-grid nodule centres to the reference grid.
pub fn reference_centres(
    nodules: &[NoduleRoi],
    phantom_nz: usize,
    reference_nz: usize,
) -> Vec<[usize; 3]> {
    let ratio = phantom_nz / reference_nz.max(1);
    nodules
        .iter()
        .map(|n| {
            let [z, y, x] = n.center_voxel;
            [(z / ratio.max(1)).min(reference_nz - 1), y, x]
        })
        .collect()
}

/// Image-quality metrics and nodule radiomics of one scenario.
pub fn evaluate_scenario(
    scenario: &str,
    cases: &[CaseVolumes],
    roi_extent: [usize; 3],
) -> Result<ScenarioEvaluation> {
    let mut raw = MetricAccumulator::new();
    let mut cnn = MetricAccumulator::new();
    let mut gan = MetricAccumulator::new();
    let mut rois = Vec::new();
    for c in cases {
        let dims = c.reference.dims();
        let raw_matched = resample_z_nearest(&c.raw, dims[0])?;
        raw.add_pair(&raw_matched, &c.reference)?;
        cnn.add_pair(&c.cnn, &c.reference)?;
        gan.add_pair(&c.gan, &c.reference)?;
        for (k, &centre) in c.nodules.iter().enumerate() {
            let extent = [0, 1, 2].map(|a| roi_extent[a].min(dims[a]));
            let roi = RoiBox::centered(centre, extent, dims);
            rois.push(CaseRois {
                case: format!("{}/n{k}", c.id),
                reference: crop_roi(&c.reference, &roi)?,
                raw: crop_roi(&raw_matched, &roi)?,
                cnn: crop_roi(&c.cnn, &roi)?,
                gan: crop_roi(&c.gan, &roi)?,
            });
        }
    }
    let radiomics = compare_methods(&rois, Alternative::TwoSided)?;
    Ok(ScenarioEvaluation {
        scenario: scenario.to_string(),
        n_cases: cases.len(),
        n_rois: rois.len(),
        raw: raw.finish(),
        cnn: cnn.finish(),
        gan: gan.finish(),
        radiomics,
    })
}

fn load_case(p: &Pipeline, id: &str, scenario: &str) -> Result<CaseVolumes> {
    let reference = read_volume(&p.layout.reference(id))?;
    let nodules: Vec<NoduleRoi> = read_json(&p.layout.rois(id))?;
    let nodules = reference_centres(&nodules, p.manifest.phantom.dims[0], reference.dims()[0]);
    Ok(CaseVolumes {
        id: id.to_string(),
        raw: read_volume(&p.layout.scenario_input(id, scenario))?,
        cnn: read_volume(&p.layout.normalized(id, scenario, ModelKind::Cnn))?,
        gan: read_volume(&p.layout.normalized(id, scenario, ModelKind::Gan))?,
        reference,
        nodules,
    })
}

/// Evaluates the test split of every active scenario and writes all reports.
pub fn evaluate(p: &Pipeline) -> Result<EvaluationSummary> {
    let dir = p.layout.reports();
    p.guard(&[dir.join("summary.json")])?;
    let m = &p.manifest;
    let tests = m.cases_in(Split::Test);
    if tests.is_empty() {
        return Err(PipelineError::Config("manifest has no test cases".into()));
    }
    let mut evaluations = Vec::new();
    for s in m.active_scenarios() {
        let cases = tests
            .iter()
            .map(|c| load_case(p, &c.id, &s.name))
            .collect::<Result<Vec<_>>>()?;
        let ev = evaluate_scenario(&s.name, &cases, m.evaluation.roi_extent)?;
        for w in ev
            .raw
            .warnings
            .iter()
            .chain(&ev.cnn.warnings)
            .chain(&ev.gan.warnings)
        {
            warn!("{}: {w}", s.name);
        }
        evaluations.push(ev);
    }
    write_reports(&dir, &m.name, &evaluations)
}

/// Every stage in order: phantoms, scans, both models per active scenario,
/// normalization and evaluation.
pub fn run_all(p: &Pipeline) -> Result<EvaluationSummary> {
    phantoms(p)?;
    scans(p)?;
    let names: Vec<String> = p
        .manifest
        .active_scenarios()
        .iter()
        .map(|s| s.name.clone())
        .collect();
    for s in &names {
        for kind in ModelKind::ALL {
            train_model(p, s, kind, false)?;
        }
    }
    normalize_all(p)?;
    evaluate(p)
}
