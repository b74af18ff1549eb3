#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ctnorm::gan::{DiscriminatorConfig, GeneratorConfig, TrainConfig};
use ctnorm_cli::{CaseSpec, ExperimentManifest, Split};

/// Small enough to run every stage in seconds: 32³ phantom at 6 mm pixels,
/// 4 cases split 2/1/1, a 1-block generator and 4 training iterations.
pub fn tiny_manifest(out: &Path) -> ExperimentManifest {
    let mut m = ExperimentManifest {
        name: "tiny".into(),
        output_dir: out.to_path_buf(),
        seed: 7,
        ..Default::default()
    };
    m.phantom.dims = [32, 32, 32];
    m.phantom.pixel_mm = 6.0;
    m.phantom.vessel_count = 4;
    m.cases = (0..4)
        .map(|i| CaseSpec {
            id: format!("t{i}"),
            seed: 100 + i as u64,
            split: [Split::Train, Split::Train, Split::Val, Split::Test][i],
        })
        .collect();
    m.acquisition.n_angles = 32;
    m.generator = GeneratorConfig {
        n_resblocks: 1,
        channels: 4,
        z_upsample_factor: 2,
    };
    m.discriminator = DiscriminatorConfig {
        n_downsample_stages: 2,
        base_channels: 4,
    };
    m.train = TrainConfig {
        lr_g: 1e-4,
        lr_d: 1e-4,
        batch_size: 1,
        iterations: 4,
        patch_dims: [4, 16, 16],
        val_every: 2,
        checkpoint_every: 2,
        val_tile: [8, 32, 32],
        ..Default::default()
    };
    m.inference.tile = [8, 32, 32];
    m.evaluation.roi_extent = [8, 16, 16];
    m.validate().unwrap();
    m
}

pub fn write_manifest(path: &Path, m: &ExperimentManifest) -> PathBuf {
    std::fs::write(path, m.to_json()).unwrap();
    path.to_path_buf()
}

pub fn ctnorm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctnorm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn ctnorm")
}

pub fn ctnorm_ok(args: &[&str]) -> Output {
    let out = ctnorm(args);
    assert!(
        out.status.success(),
        "ctnorm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Relative path and bytes of every file under `root`, sorted by path.
pub fn tree_bytes(root: &Path, skip: &dyn Fn(&Path) -> bool) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !skip(&p) {
                let rel = p.strip_prefix(root).unwrap().to_path_buf();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
