use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::SystemTime;

use synthreg::metrics::noise_magnitude;
use synthreg::modality::{Modality, NoiseSpec};
use synthreg::phantom::{generate_phantom, organ, PhantomSpec};
use synthreg::pipeline::{
    cmd_evaluate, cmd_generate, cmd_sweep, evaluate_pair, model_dir, DatasetConfig, EvaluateConfig, Manifest, PairSpec,
    State, SweepConfig, CSV_SCHEMA, MANIFEST_FILE,
};
use synthreg::registration::{RegistrationConfig, SimilarityMetric};
use synthreg::volume::{read_rvol_file, write_rvol_file, Geometry, LabelMap, ResolvedWindow, Volume};
use synthreg::Error;
use tempfile::TempDir;

fn dataset(root: &Path, n: usize, modalities: Vec<Modality>) -> DatasetConfig {
    DatasetConfig {
        n_models: n,
        modalities,
        output_dir: root.to_path_buf(),
        workers: 1,
        ..Default::default()
    }
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, SystemTime> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            let t = std::fs::metadata(&p).unwrap().modified().unwrap();
            out.insert(p, t);
        }
    }
    out
}

fn quick_sweep(dataset_dir: &Path, pairs: Vec<PairSpec>) -> SweepConfig {
    SweepConfig {
        dataset_dir: dataset_dir.to_path_buf(),
        pairs,
        registration: RegistrationConfig {
            max_iterations: 3,
            ..RegistrationConfig::default().with_sampling(0.01, 0)
        },
        workers: 1,
        ..Default::default()
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthreg"))
}

#[test]
fn ct_only_generation_writes_the_expected_files_and_is_idempotent() {
    let tmp = TempDir::new().unwrap();
    let cfg = dataset(tmp.path(), 2, vec![Modality::Ct]);
    let first = cmd_generate(&cfg).unwrap();
    assert_eq!(first.written, vec![0, 1]);
    for m in 0..2 {
        let dir = model_dir(tmp.path(), m);
        let mut names: Vec<String> = std::fs::read_dir(&dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(
            names,
            [
                "ct_exhale.rvol",
                "ct_inhale.rvol",
                "field_inhale.rvol",
                "labels_exhale.rvol",
                "labels_inhale.rvol",
                MANIFEST_FILE
            ]
        );
        let man = Manifest::load(&dir).unwrap();
        assert_eq!(man.entries.len(), 5);
        assert!(man.verify(&dir));
    }

    let before = files_under(tmp.path());
    let second = cmd_generate(&cfg).unwrap();
    assert_eq!(second.skipped, vec![0, 1]);
    assert!(second.written.is_empty());
    assert_eq!(files_under(tmp.path()), before);
}

#[test]
fn damaged_model_is_regenerated() {
    let tmp = TempDir::new().unwrap();
    let cfg = dataset(tmp.path(), 1, vec![Modality::Ct]);
    cmd_generate(&cfg).unwrap();
    let victim = model_dir(tmp.path(), 0).join("ct_inhale.rvol");
    let good = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, b"truncated").unwrap();
    assert_eq!(cmd_generate(&cfg).unwrap().written, vec![0]);
    assert_eq!(std::fs::read(&victim).unwrap(), good);
}

#[test]
fn manifest_volumes_share_geometry() {
    let tmp = TempDir::new().unwrap();
    cmd_generate(&dataset(tmp.path(), 1, Modality::ALL.to_vec())).unwrap();
    let dir = model_dir(tmp.path(), 0);
    let man = Manifest::load(&dir).unwrap();
    assert_eq!(man.modalities(), Modality::ALL.to_vec());
    for e in &man.entries {
        let path = dir.join(&e.file);
        let header = std::fs::read(&path).unwrap();
        let line = header.split(|&b| b == b'\n').next().unwrap();
        let h: serde_json::Value = serde_json::from_slice(line).unwrap();
        let g = Geometry::new(
            serde_json::from_value(h["dims"].clone()).unwrap(),
            serde_json::from_value(h["spacing"].clone()).unwrap(),
            serde_json::from_value(h["origin"].clone()).unwrap(),
        )
        .unwrap();
        assert_eq!(g, man.geometry, "{}", e.file);
    }
    for s in State::BOTH {
        assert!(man.labels_for(Modality::Mri, s).unwrap().arms);
        assert!(!man.labels_for(Modality::Ct, s).unwrap().arms);
    }
}

#[test]
fn generation_is_byte_identical_across_runs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let mods = vec![Modality::Cbct, Modality::Mri];
    cmd_generate(&dataset(a.path(), 1, mods.clone())).unwrap();
    cmd_generate(&dataset(b.path(), 1, mods)).unwrap();
    let man = Manifest::load(model_dir(a.path(), 0)).unwrap();
    for e in &man.entries {
        let x = std::fs::read(model_dir(a.path(), 0).join(&e.file)).unwrap();
        let y = std::fs::read(model_dir(b.path(), 0).join(&e.file)).unwrap();
        assert!(x == y, "{} differs", e.file);
    }
}

#[test]
fn sweep_row_counts_follow_the_settings() {
    let tmp = TempDir::new().unwrap();
    cmd_generate(&dataset(tmp.path(), 1, vec![Modality::Ct, Modality::Cbct])).unwrap();
    let mono = quick_sweep(
        tmp.path(),
        vec![PairSpec {
            moving: Modality::Ct,
            metrics: vec![SimilarityMetric::Mmi, SimilarityMetric::Nc, SimilarityMetric::Ms],
        }],
    );
    let s = cmd_sweep(&mono).unwrap();
    assert_eq!(s.rows.len(), 18);
    assert_eq!(s.failed_rows(), 0);
    assert_eq!(s.summary.len(), 18);

    let multi = SweepConfig {
        output_dir: Some(tmp.path().join("sweep_cbct")),
        ..quick_sweep(
            tmp.path(),
            vec![PairSpec {
                moving: Modality::Cbct,
                metrics: vec![SimilarityMetric::Mmi, SimilarityMetric::Nc],
            }],
        )
    };
    let s = cmd_sweep(&multi).unwrap();
    assert_eq!(s.rows.len(), 12);
    for r in &s.summary {
        assert!(r.p10_post_dsc <= r.mean_post_dsc + 1e-12 || r.n == 1);
        assert!(r.p10_post_dsc <= r.p90_post_dsc);
    }
    let csv = std::fs::read_to_string(tmp.path().join("sweep_cbct").join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_SCHEMA));
    assert!(lines.next().unwrap().starts_with("model,pair,metric,grid_spacing_mm,pre_dsc"));
    assert_eq!(lines.count(), 12);
    let summary = std::fs::read_to_string(tmp.path().join("sweep_cbct").join("summary.csv")).unwrap();
    let header = summary.lines().nth(1).unwrap();
    for col in ["mean_post_dsc", "p10_post_dsc", "p90_post_dsc"] {
        assert!(header.contains(col));
    }
}

#[test]
fn ms_for_a_multimodal_pair_is_a_config_error() {
    let cfg = SweepConfig {
        pairs: vec![PairSpec {
            moving: Modality::Mri,
            metrics: vec![SimilarityMetric::Ms],
        }],
        ..Default::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert!(matches!(cmd_sweep(&cfg), Err(Error::Config(_))));
}

#[test]
fn noiseless_dataset_evaluates_to_zero_noise() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = dataset(tmp.path(), 1, vec![Modality::Ct]);
    cfg.ct.noise = NoiseSpec::none();
    cmd_generate(&cfg).unwrap();
    let s = cmd_evaluate(&EvaluateConfig::new(tmp.path())).unwrap();
    assert!(s.skipped.is_empty());
    assert_eq!(s.report.volumes.len(), 2);
    for metrics in s.report.volumes.values() {
        assert_eq!(metrics["nm"], 0.0);
        assert_eq!(metrics["mae"], 0.0);
        assert!((metrics["ssim"] - 1.0).abs() < 1e-9);
    }
    let out = tmp.path().join("evaluation");
    for f in ["metrics.json", "metrics.csv", "summary.csv", "histogram_ct.csv", "nps_ct.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn noisy_ct_dataset_hits_the_noise_target() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = dataset(tmp.path(), 1, vec![Modality::Ct]);
    cfg.ct.noise = NoiseSpec::textured(39.0, 0.08);
    cmd_generate(&cfg).unwrap();
    let s = cmd_evaluate(&EvaluateConfig::new(tmp.path())).unwrap();
    let (mean, _, n) = s.aggregate[&Modality::Ct]["nm"];
    assert_eq!(n, 2);
    assert!((37.0..=41.0).contains(&mean), "aggregate nm {mean}");
}

#[test]
fn identical_pair_is_a_perfect_row() {
    let l = generate_phantom(&PhantomSpec::new(1), &Geometry::centered([48, 48, 16], [4.0; 3]).unwrap()).unwrap();
    let v = l.map(|id| (id as f32 / 13.0) * 1.6 - 0.8).unwrap();
    let w = ResolvedWindow::new(-1024.0, 1500.0).unwrap();
    let m = evaluate_pair(&v, &v, &l, &w).unwrap();
    assert_eq!(m["mae"], 0.0);
    assert!((m["ssim"] - 1.0).abs() < 1e-9);
    assert!((m["fsim"] - 1.0).abs() < 1e-9);
    assert_eq!((m["epr"], m["egr"]), (1.0, 0.0));
    assert_eq!(m["nm"], noise_magnitude(&v, &l, organ::LIVER).unwrap() * w.native_per_unit());
}

#[test]
fn binary_reports_config_errors_with_exit_code_one() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"pairs": [{"moving": "mri", "metrics": ["MS"]}]}"#).unwrap();
    let status = bin().args(["sweep", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));
    std::fs::write(&bad, "{ not json").unwrap();
    let status = bin().args(["generate", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn binary_generates_and_computes_losses() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ds");
    let cfg = tmp.path().join("gen.json");
    std::fs::write(&cfg, r#"{"modalities": ["ct"], "workers": 1}"#).unwrap();
    let status = bin()
        .args(["generate", "--n-models", "1", "--resolution", "desk", "--seed", "5", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let man = Manifest::load(model_dir(&out, 0)).unwrap();
    assert_eq!(man.modalities(), vec![Modality::Ct]);

    let g = Geometry::centered([8, 8, 3], [1.0; 3]).unwrap();
    let zeros = Volume::filled(g, 0.0).unwrap();
    let ones = Volume::filled(g, 1.0).unwrap();
    for (name, v) in [("x", &zeros), ("gx", &ones), ("y", &zeros), ("fy", &zeros)] {
        write_rvol_file(v, tmp.path().join(format!("{name}.rvol"))).unwrap();
    }
    let losses = tmp.path().join("losses.json");
    let p = |n: &str| tmp.path().join(format!("{n}.rvol")).display().to_string();
    std::fs::write(
        &losses,
        serde_json::json!({"x": p("x"), "gx": p("gx"), "y": p("y"), "fy": p("fy"), "adversarial": 1.0, "cycle": 2.0})
            .to_string(),
    )
    .unwrap();
    let o = bin().args(["losses", "--config"]).arg(&losses).output().unwrap();
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["intensity"], 1.0);
    assert_eq!(r["gdl_forward"], 0.0);
    // 1 + 10 * 2 + 10 * 1
    assert_eq!(r["total"], 31.0);
}

#[test]
fn labels_written_match_the_phantom() {
    let tmp = TempDir::new().unwrap();
    let cfg = dataset(tmp.path(), 1, vec![Modality::Ct]);
    cmd_generate(&cfg).unwrap();
    let stored: LabelMap = read_rvol_file(model_dir(tmp.path(), 0).join("labels_exhale.rvol")).unwrap();
    let fresh = generate_phantom(&cfg.phantom_for(0).with_arms(false), &Geometry::desk()).unwrap();
    assert_eq!(stored, fresh);
}
