use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::patches::sample_patch_pairs_with;
use super::{
    build_discriminator, build_generator, d_loss, g_loss, normalize_volume, Discriminator,
    DiscriminatorConfig, GanError, Generator, GeneratorConfig, Result, TrainConfig,
};
use crate::metrics::{Metric, MetricAccumulator};
use crate::neural::{adam_step, load_checkpoint, save_checkpoint, NamedTensor, Tensor};
use crate::volume::{hu_to_unit, Volume};

const G_SEED_SALT: u64 = 0x4745_4E00;
const D_SEED_SALT: u64 = 0x4449_5300;
const BATCH_SEED_SALT: u64 = 0x4241_5400;
const STITCH_OVERLAP: usize = 4;

pub const LOG_HEADER: &str = "iteration,d_loss,g_loss_adv,g_loss_l1,val_psnr,val_ssim,val_perc";

/// Low-dose/thick acquisition and its reference, both in HU.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumePair {
    pub low: Volume,
    pub reference: Volume,
}

/// Training pairs (kept on the [0, 1] scale) and validation pairs (HU).
#[derive(Debug, Clone)]
pub struct TrainData {
    train: Vec<VolumePair>,
    val: Vec<VolumePair>,
}

impl TrainData {
    pub fn new(train: &[VolumePair], val: &[VolumePair]) -> Result<Self> {
        if train.is_empty() {
            return Err(GanError::Config("no training volumes".into()));
        }
        for p in train.iter().chain(val) {
            let [z, y, x] = p.low.dims();
            if p.reference.dims() != [2 * z, y, x] {
                return Err(GanError::Shape(format!(
                    "reference dims {:?} do not pair with low dims {:?}",
                    p.reference.dims(),
                    p.low.dims()
                )));
            }
        }
        let train = train
            .iter()
            .map(|p| VolumePair {
                low: hu_to_unit(&p.low),
                reference: hu_to_unit(&p.reference),
            })
            .collect();
        Ok(TrainData {
            train,
            val: val.to_vec(),
        })
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn n_val(&self) -> usize {
        self.val.len()
    }
}

/// Plane-averaged validation metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationScores {
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: u64,
    /// `None` for the L1-only baseline, which has no discriminator.
    pub d_loss: Option<f64>,
    pub g_loss_adv: Option<f64>,
    pub g_loss_l1: f64,
    pub validation: Option<ValidationScores>,
}

impl IterationLog {
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.8e}")).unwrap_or_default();
        let val = self
            .validation
            .map(|v| format!("{:.6},{:.6},{:.8e}", v.psnr, v.ssim, v.perceptual))
            .unwrap_or_else(|| ",,".into());
        format!(
            "{},{},{},{:.8e},{val}",
            self.iteration,
            opt(self.d_loss),
            opt(self.g_loss_adv),
            self.g_loss_l1
        )
    }
}

/// Generator, optional discriminator and optimizer bookkeeping.
#[derive(Debug, Clone)]
pub struct Trainer {
    g: Generator,
    d: Option<Discriminator>,
    cfg: TrainConfig,
    iteration: u64,
    g_steps: u64,
    d_steps: u64,
    best_val: Option<f32>,
    best_iteration: u64,
}

impl Trainer {
    pub fn new(gcfg: GeneratorConfig, dcfg: DiscriminatorConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let g = build_generator(gcfg, cfg.seed ^ G_SEED_SALT)?;
        let d = if cfg.adversarial() {
            Some(build_discriminator(dcfg, cfg.seed ^ D_SEED_SALT)?)
        } else {
            dcfg.validate()?;
            None
        };
        Ok(Trainer {
            g,
            d,
            cfg,
            iteration: 0,
            g_steps: 0,
            d_steps: 0,
            best_val: None,
            best_iteration: 0,
        })
    }

    pub fn generator(&self) -> &Generator {
        &self.g
    }

    pub fn discriminator(&self) -> Option<&Discriminator> {
        self.d.as_ref()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Replaces the training config (e.g. to extend `iterations` before resuming).
    pub fn set_config(&mut self, cfg: TrainConfig) -> Result<()> {
        cfg.validate()?;
        if cfg.adversarial() != self.cfg.adversarial() {
            return Err(GanError::Config(
                "cannot switch between GAN and L1-only training".into(),
            ));
        }
        self.cfg = cfg;
        Ok(())
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn best_validation(&self) -> Option<(f32, u64)> {
        self.best_val.map(|v| (v, self.best_iteration))
    }

    pub fn checkpoint(&self) -> Vec<NamedTensor> {
        let gc = self.g.config();
        let mut out = vec![
            NamedTensor::scalar("meta.iteration", self.iteration as f32),
            NamedTensor::scalar("meta.g_steps", self.g_steps as f32),
            NamedTensor::scalar("meta.d_steps", self.d_steps as f32),
            NamedTensor::scalar("meta.alpha1", self.cfg.alpha1 as f32),
            NamedTensor::scalar("meta.alpha2", self.cfg.alpha2 as f32),
            NamedTensor::scalar("meta.best_val_perc", self.best_val.unwrap_or(f32::NAN)),
            NamedTensor::scalar("meta.best_iteration", self.best_iteration as f32),
            NamedTensor::scalar("meta.g.n_resblocks", gc.n_resblocks as f32),
            NamedTensor::scalar("meta.g.channels", gc.channels as f32),
        ];
        if let Some(d) = &self.d {
            let dc = d.config();
            out.push(NamedTensor::scalar(
                "meta.d.stages",
                dc.n_downsample_stages as f32,
            ));
            out.push(NamedTensor::scalar(
                "meta.d.base_channels",
                dc.base_channels as f32,
            ));
        }
        self.g.export(&mut out);
        if let Some(d) = &self.d {
            d.export(&mut out);
        }
        out
    }

    /// Restores parameters, optimizer state and counters from a checkpoint.
    pub fn restore(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        let map = tensor_map(tensors);
        let alpha1 = meta(&map, "meta.alpha1")?;
        if (alpha1 > 0.0) != self.cfg.adversarial() {
            return Err(GanError::Checkpoint(format!(
                "checkpoint alpha1 = {alpha1} does not match the configured alpha1 = {}",
                self.cfg.alpha1
            )));
        }
        self.g.import(&map)?;
        if let Some(d) = &mut self.d {
            d.import(&map)?;
        }
        self.iteration = meta(&map, "meta.iteration")? as u64;
        self.g_steps = meta(&map, "meta.g_steps")? as u64;
        self.d_steps = meta(&map, "meta.d_steps")? as u64;
        let best = meta(&map, "meta.best_val_perc")?;
        self.best_val = (!best.is_nan()).then_some(best);
        self.best_iteration = meta(&map, "meta.best_iteration")? as u64;
        Ok(())
    }

    fn sample_batch(&self, data: &TrainData) -> Result<(Tensor, Tensor)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ BATCH_SEED_SALT);
        rng.set_stream(self.iteration);
        let mut xs = Vec::with_capacity(self.cfg.batch_size);
        let mut ys = Vec::with_capacity(self.cfg.batch_size);
        for _ in 0..self.cfg.batch_size {
            let case = &data.train[rng.random_range(0..data.train.len())];
            let pair = sample_patch_pairs_with(&case.low, &case.reference, &self.cfg, &mut rng, 1)?
                .pop()
                .expect("one pair requested");
            xs.push(pair.x);
            ys.push(pair.y);
        }
        Ok((Tensor::stack(&xs)?, Tensor::stack(&ys)?))
    }

    fn non_finite(&self) -> GanError {
        GanError::NonFiniteLoss {
            iteration: self.iteration + 1,
            last_checkpoint: None,
        }
    }

    /// One discriminator update followed by `d_g_ratio` generator updates.
    pub fn step(&mut self, data: &TrainData) -> Result<IterationLog> {
        let (x, y) = self.sample_batch(data)?;
        let (mut fake, mut cache) = self.g.forward(&x)?;
        let mut d_loss_value = None;

        if let Some(d) = &mut self.d {
            let eff = d.effective_weights(self.cfg.spectral_iters)?;
            let (real_scores, real_cache) = d.forward(&y, &eff)?;
            let (fake_scores, fake_cache) = d.forward(&fake, &eff)?;
            let dl = d_loss(&real_scores, &fake_scores)?;
            if !dl.loss.is_finite() {
                return Err(self.non_finite());
            }
            d.backward(&real_cache, &eff, &dl.d_real)?;
            d.backward(&fake_cache, &eff, &dl.d_fake)?;
            self.d_steps += 1;
            adam_step(&mut d.params_mut(), &self.cfg.adam_d(), self.d_steps)?;
            d_loss_value = Some(dl.loss);
        }

        let mut adv = None;
        let mut l1 = 0.0;
        for r in 0..self.cfg.d_g_ratio {
            if r > 0 {
                (fake, cache) = self.g.forward(&x)?;
            }
            let mut d_fake_adv = None;
            let gl = if let Some(d) = &mut self.d {
                let eff = d.effective_weights(0)?;
                let (scores, fcache) = d.forward(&fake, &eff)?;
                let gl = g_loss(&scores, &fake, &y, self.cfg.alpha1, self.cfg.alpha2)?;
                d_fake_adv = Some(d.backward(&fcache, &eff, &gl.d_scores)?);
                d.zero_grad();
                gl
            } else {
                g_loss(&[], &fake, &y, 0.0, self.cfg.alpha2)?
            };
            if !gl.total.is_finite() {
                return Err(self.non_finite());
            }
            let mut dout = gl.d_output;
            if let Some(da) = d_fake_adv {
                dout.add_assign(&da)?;
            }
            self.g.backward(&cache, &dout)?;
            self.g_steps += 1;
            adam_step(&mut self.g.params_mut(), &self.cfg.adam_g(), self.g_steps)?;
            adv = self.d.as_ref().map(|_| gl.adversarial);
            l1 = gl.l1;
        }
        self.iteration += 1;
        Ok(IterationLog {
            iteration: self.iteration,
            d_loss: d_loss_value,
            g_loss_adv: adv,
            g_loss_l1: l1,
            validation: None,
        })
    }

    /// Normalizes every validation volume and averages metrics over planes.
    pub fn validate(&self, data: &TrainData) -> Result<Option<ValidationScores>> {
        if data.val.is_empty() {
            return Ok(None);
        }
        let mut acc = MetricAccumulator::new();
        for p in &data.val {
            let dims = p.low.dims();
            let tile = std::array::from_fn(|a| self.cfg.val_tile[a].min(dims[a]));
            let out = normalize_volume(&self.g, &p.low, tile, STITCH_OVERLAP)?;
            acc.add_pair(&out, &p.reference)?;
        }
        let r = acc.finish();
        let avg = |m| r.plane_average(m).unwrap_or(f64::NAN);
        Ok(Some(ValidationScores {
            psnr: avg(Metric::Psnr),
            ssim: avg(Metric::Ssim),
            perceptual: avg(Metric::Perceptual),
        }))
    }
}

fn tensor_map(tensors: &[NamedTensor]) -> HashMap<&str, &NamedTensor> {
    tensors.iter().map(|t| (t.name.as_str(), t)).collect()
}

fn meta(map: &HashMap<&str, &NamedTensor>, name: &str) -> Result<f32> {
    map.get(name)
        .and_then(|t| t.data.first().copied())
        .ok_or_else(|| GanError::Checkpoint(format!("missing `{name}`")))
}

/// Rebuilds the generator stored in a training checkpoint.
pub fn generator_from_checkpoint(tensors: &[NamedTensor]) -> Result<Generator> {
    let map = tensor_map(tensors);
    let cfg = GeneratorConfig {
        n_resblocks: meta(&map, "meta.g.n_resblocks")? as usize,
        channels: meta(&map, "meta.g.channels")? as usize,
        z_upsample_factor: 2,
    };
    let mut g = build_generator(cfg, 0)?;
    g.import(&map)?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: u64,
    pub resumed_from: Option<u64>,
    pub last_checkpoint: PathBuf,
    pub best_checkpoint: Option<PathBuf>,
    pub best_val_perceptual: Option<f32>,
    pub log_path: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GanError + '_ {
    move |source| GanError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn save(tensors: &[NamedTensor], path: &Path) -> Result<()> {
    save_checkpoint(tensors, path).map_err(|e| match e {
        crate::neural::NeuralError::Io(source) => GanError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

/// Keeps the header and rows up to `iteration`.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    let mut kept = vec![LOG_HEADER.to_string()];
    if path.exists() {
        let f = File::open(path).map_err(io_err(path))?;
        for line in BufReader::new(f).lines().skip(1) {
            let line = line.map_err(io_err(path))?;
            let it: u64 = line
                .split(',')
                .next()
                .and_then(|s| s.parse().ok())
                .unwrap_or(u64::MAX);
            if it <= iteration {
                kept.push(line);
            }
        }
    }
    fs::write(path, kept.join("\n") + "\n").map_err(io_err(path))
}

/// Runs `trainer` to `cfg.iterations`, writing `last.ctw`, `best.ctw`,
/// periodic `ckpt_<iteration>.ctw` files and `train_log.csv` into `out_dir`.
///
/// With `resume`, an existing `last.ctw` is restored first and the log is
/// cut back to the restored iteration.
pub fn train(
    trainer: &mut Trainer,
    data: &TrainData,
    out_dir: &Path,
    resume: bool,
    on_iteration: &mut dyn FnMut(&IterationLog),
) -> Result<TrainSummary> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let last_path = out_dir.join("last.ctw");
    let best_path = out_dir.join("best.ctw");
    let log_path = out_dir.join("train_log.csv");

    let mut resumed_from = None;
    if resume && last_path.exists() {
        let tensors = load_checkpoint(&last_path).map_err(|e| match e {
            crate::neural::NeuralError::Io(source) => GanError::Io {
                path: last_path.clone(),
                source,
            },
            other => other.into(),
        })?;
        trainer.restore(&tensors)?;
        resumed_from = Some(trainer.iteration());
    }
    truncate_log(&log_path, trainer.iteration())?;
    let mut log_file = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    let mut last_saved = resumed_from.map(|_| last_path.clone());

    let cfg = trainer.config().clone();
    while trainer.iteration() < cfg.iterations {
        let mut log = trainer.step(data).map_err(|e| match e {
            GanError::NonFiniteLoss { iteration, .. } => GanError::NonFiniteLoss {
                iteration,
                last_checkpoint: last_saved.clone(),
            },
            other => other,
        })?;
        let it = log.iteration;
        if cfg.val_every > 0 && it % cfg.val_every == 0 {
            if let Some(v) = trainer.validate(data)? {
                log.validation = Some(v);
                let score = v.perceptual as f32;
                if score.is_finite() && trainer.best_val.is_none_or(|b| score < b) {
                    trainer.best_val = Some(score);
                    trainer.best_iteration = it;
                    save(&trainer.checkpoint(), &best_path)?;
                }
            }
        }
        if (cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) || it == cfg.iterations {
            let ck = trainer.checkpoint();
            save(&ck, &last_path)?;
            if cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0 {
                save(&ck, &out_dir.join(format!("ckpt_{it:06}.ctw")))?;
            }
            last_saved = Some(last_path.clone());
        }
        writeln!(log_file, "{}", log.csv_row()).map_err(io_err(&log_path))?;
        on_iteration(&log);
    }
    if !last_path.exists() {
        save(&trainer.checkpoint(), &last_path)?;
    }
    Ok(TrainSummary {
        iterations: trainer.iteration(),
        resumed_from,
        last_checkpoint: last_path,
        best_checkpoint: best_path.exists().then_some(best_path),
        best_val_perceptual: trainer.best_val,
        log_path,
    })
}
