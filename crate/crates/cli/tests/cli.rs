mod common;

use std::fs;

use common::{ctnorm, ctnorm_ok, tiny_manifest, write_manifest};
use ctnorm::neural::load_checkpoint;
use ctnorm::volume::load_volume;
use ctnorm_cli::pipeline::{evaluate_scenario, CaseVolumes};
use ctnorm_cli::{CaseSpec, Layout, ModelKind, NormalizeSidecar, Split};
use tempfile::tempdir;

fn s(p: &std::path::Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn phantom_writes_one_volume_and_roi_list_per_case() {
    let dir = tempdir().unwrap();
    let mut m = tiny_manifest(&dir.path().join("out"));
    m.cases = (0..12)
        .map(|i| CaseSpec {
            id: format!("c{i:02}"),
            seed: i,
            split: if i < 8 {
                Split::Train
            } else if i < 10 {
                Split::Val
            } else {
                Split::Test
            },
        })
        .collect();
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    ctnorm_ok(&["--manifest", s(&mf), "phantom"]);
    let layout = Layout::new(&m.output_dir);
    for c in &m.cases {
        assert!(layout.phantom(&c.id).is_file());
        let rois: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(layout.rois(&c.id)).unwrap()).unwrap();
        assert_eq!(rois.as_array().unwrap().len(), m.nodules_per_case);
    }
    let cases = fs::read_dir(m.output_dir.join("cases")).unwrap().count();
    assert_eq!(cases, 12);

    let again = ctnorm(&["--manifest", s(&mf), "phantom"]);
    assert_eq!(again.status.code(), Some(2));
    ctnorm_ok(&["--manifest", s(&mf), "--force", "phantom"]);
}

#[test]
fn unwritable_output_reports_path_and_exit_1() {
    let dir = tempdir().unwrap();
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, b"not a directory").unwrap();
    let m = tiny_manifest(&blocker.join("out"));
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    let out = ctnorm(&["--manifest", s(&mf), "phantom"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blocker"));
}

#[test]
fn invalid_manifest_exits_3() {
    let dir = tempdir().unwrap();
    let mut m = tiny_manifest(&dir.path().join("out"));
    m.scenarios[0].slice_thickness_mm = 1.0;
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    assert_eq!(
        ctnorm(&["--manifest", s(&mf), "phantom"]).status.code(),
        Some(3)
    );
    fs::write(&mf, "{ not json").unwrap();
    assert_eq!(
        ctnorm(&["--manifest", s(&mf), "scan"]).status.code(),
        Some(3)
    );
}

#[test]
fn scan_writes_reference_and_scenarios_deterministically() {
    let dir = tempdir().unwrap();
    let m = tiny_manifest(&dir.path().join("out"));
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    ctnorm_ok(&["--manifest", s(&mf), "phantom"]);
    ctnorm_ok(&["--manifest", s(&mf), "scan"]);
    let layout = Layout::new(&m.output_dir);
    let mut first = Vec::new();
    for c in &m.cases {
        let reference = load_volume(layout.reference(&c.id)).unwrap();
        assert_eq!(reference.dims(), [16, 32, 32]);
        assert_eq!(reference.spacing()[0], 1.0);
        for sc in &m.scenarios {
            let v = load_volume(layout.scenario_input(&c.id, &sc.name)).unwrap();
            assert_eq!(v.dims()[0] * 2, reference.dims()[0]);
            assert_eq!(v.spacing()[0], 2.0);
            first.push(fs::read(layout.scenario_input(&c.id, &sc.name)).unwrap());
        }
    }
    assert_eq!(first.len(), 4 * 3);
    assert_eq!(
        ctnorm(&["--manifest", s(&mf), "scan"]).status.code(),
        Some(2)
    );
    ctnorm_ok(&["--manifest", s(&mf), "--force", "scan"]);
    let mut k = 0;
    for c in &m.cases {
        for sc in &m.scenarios {
            assert_eq!(
                fs::read(layout.scenario_input(&c.id, &sc.name)).unwrap(),
                first[k]
            );
            k += 1;
        }
    }
}

#[test]
fn train_without_scans_names_missing_file() {
    let dir = tempdir().unwrap();
    let m = tiny_manifest(&dir.path().join("out"));
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    let out = ctnorm(&["--manifest", s(&mf), "train", "--scenario", "B"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("input.ctv"));
    let out = ctnorm(&["--manifest", s(&mf), "train", "--scenario", "Q"]);
    assert_eq!(out.status.code(), Some(3));
}

fn meta(path: &std::path::Path, name: &str) -> f32 {
    load_checkpoint(path)
        .unwrap()
        .into_iter()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("{name} missing"))
        .data[0]
}

#[test]
fn train_baseline_resume_and_normalize() {
    let dir = tempdir().unwrap();
    let m = tiny_manifest(&dir.path().join("out"));
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    ctnorm_ok(&["--manifest", s(&mf), "phantom"]);
    ctnorm_ok(&["--manifest", s(&mf), "scan"]);
    let layout = Layout::new(&m.output_dir);

    ctnorm_ok(&[
        "--manifest",
        s(&mf),
        "--deterministic",
        "train",
        "--scenario",
        "B",
        "--baseline-cnn",
    ]);
    let cnn_last = layout.model_dir("B", ModelKind::Cnn).join("last.ctw");
    assert_eq!(meta(&cnn_last, "meta.alpha1"), 0.0);
    assert_eq!(meta(&cnn_last, "meta.d_steps"), 0.0);

    ctnorm_ok(&[
        "--manifest",
        s(&mf),
        "--deterministic",
        "train",
        "--scenario",
        "B",
    ]);
    let gan_dir = layout.model_dir("B", ModelKind::Gan);
    assert_eq!(meta(&gan_dir.join("last.ctw"), "meta.alpha1"), 1.0);
    let straight = fs::read(gan_dir.join("last.ctw")).unwrap();
    let log = fs::read_to_string(gan_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 4);
    assert_eq!(
        ctnorm(&["--manifest", s(&mf), "train", "--scenario", "B"])
            .status
            .code(),
        Some(2)
    );

    // interrupt after 2 iterations, then resume to 4
    let mut half = m.clone();
    half.train.iterations = 2;
    let hf = write_manifest(&dir.path().join("half.json"), &half);
    ctnorm_ok(&[
        "--manifest",
        s(&hf),
        "--deterministic",
        "--force",
        "train",
        "--scenario",
        "B",
    ]);
    assert_eq!(meta(&gan_dir.join("last.ctw"), "meta.iteration"), 2.0);
    ctnorm_ok(&[
        "--manifest",
        s(&mf),
        "--deterministic",
        "train",
        "--scenario",
        "B",
        "--resume",
    ]);
    assert_eq!(fs::read(gan_dir.join("last.ctw")).unwrap(), straight);
    assert_eq!(
        fs::read_to_string(gan_dir.join("train_log.csv")).unwrap(),
        log
    );

    let input = layout.scenario_input("t3", "B");
    let output = dir.path().join("norm.ctv");
    let ckpt = gan_dir.join("last.ctw");
    ctnorm_ok(&[
        "normalize",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--output",
        s(&output),
        "--tile",
        "64,64,64",
    ]);
    let low = load_volume(&input).unwrap();
    let out = load_volume(&output).unwrap();
    let [z, y, x] = low.dims();
    assert_eq!(out.dims(), [2 * z, y, x]);
    let side: NormalizeSidecar =
        serde_json::from_str(&fs::read_to_string(output.with_extension("json")).unwrap()).unwrap();
    assert_eq!(side.tile, [z, y, x]);
    assert_eq!(side.output_dims, [2 * z, y, x]);
    assert_eq!(side.checkpoint_sha256.len(), 64);
    assert!(side.wall_time_s >= 0.0);
    let again = ctnorm(&[
        "normalize",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&input),
        "--output",
        s(&output),
    ]);
    assert_eq!(again.status.code(), Some(2));
}

#[test]
fn full_run_emits_every_report() {
    let dir = tempdir().unwrap();
    let m = tiny_manifest(&dir.path().join("out"));
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    let out = ctnorm_ok(&["--manifest", s(&mf), "run"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("SRF-PD Ax"));
    let reports = Layout::new(&m.output_dir).reports();

    let table = fs::read_to_string(reports.join("table1.csv")).unwrap();
    assert_eq!(table.lines().count() - 1, 3 * 3 * 3 * 2);
    let cells: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(reports.join("table1.json")).unwrap()).unwrap();
    assert_eq!(cells.as_array().unwrap().len(), 54);
    let metrics = fs::read_to_string(reports.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count() - 1, 3 * 3 * 3 * 3);

    for sc in ["A", "B", "C"] {
        let svgs = fs::read_dir(&reports)
            .unwrap()
            .filter(|e| {
                let n = e.as_ref().unwrap().file_name().into_string().unwrap();
                n.starts_with(&format!("boxplot_{sc}_")) && n.ends_with(".svg")
            })
            .count();
        assert_eq!(svgs, 9);
        let svg = fs::read_to_string(reports.join(format!("boxplot_{sc}_entropy.svg"))).unwrap();
        for method in ["raw", "cnn", "gan"] {
            assert!(svg.contains(&format!(">{method} (n=")));
        }
        let stats = fs::read_to_string(reports.join(format!("radiomics_{sc}_stats.csv"))).unwrap();
        assert_eq!(stats.lines().count() - 1, 9 * 3);
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(reports.join("summary.json")).unwrap()).unwrap();
    let scenarios = summary["scenarios"].as_array().unwrap();
    assert_eq!(scenarios.len(), 3);
    for sc in scenarios {
        assert!(sc.get("perceptual_improvement_pct").is_some());
        assert_eq!(sc["features"].as_array().unwrap().len(), 9);
    }
    ctnorm_ok(&["--manifest", s(&mf), "report"]);
    assert_eq!(
        ctnorm(&["--manifest", s(&mf), "evaluate"]).status.code(),
        Some(2)
    );
}

#[test]
fn identity_candidates_give_perfect_scores() {
    let dir = tempdir().unwrap();
    let m = tiny_manifest(&dir.path().join("out"));
    let mf = write_manifest(&dir.path().join("m.json"), &m);
    ctnorm_ok(&["--manifest", s(&mf), "phantom"]);
    let layout = Layout::new(&m.output_dir);
    let phantom = load_volume(layout.phantom("t3")).unwrap();
    let reference = ctnorm::volume::resample_z_nearest(&phantom, 16).unwrap();
    let case = CaseVolumes {
        id: "t3".into(),
        raw: reference.clone(),
        cnn: reference.clone(),
        gan: reference.clone(),
        reference,
        nodules: vec![[8, 16, 16]],
    };
    let ev = evaluate_scenario("B", &[case], [8, 16, 16]).unwrap();
    for p in ctnorm::volume::Plane::ALL {
        for r in [&ev.raw, &ev.cnn, &ev.gan] {
            let v = r.mean(ctnorm::metrics::Metric::Ssim, p).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "{v}");
            assert_eq!(r.cell(ctnorm::metrics::Metric::Psnr, p).mean, None);
        }
    }
    assert!(!ev.radiomics.errors.is_empty());
    assert!(ev.radiomics.errors.iter().all(|e| e.error == 0.0));
}
