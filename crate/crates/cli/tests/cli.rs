use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pgan_cli::grid::generate_cell;
use pgan_cli::{grid_size, GRID_MARGIN};
use pgan_core::metrics::MetricsReport;
use pgan_core::synthdata::{Dataset, DatasetManifest, MANIFEST_FILE};
use pgan_core::trainer::{load_checkpoint, TrainSummary, FINAL_CHECKPOINT, SUMMARY_FILE};
use tempfile::TempDir;

fn pgan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgan")).current_dir(dir).args(args).output().expect("spawn pgan")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = pgan(dir, args);
    assert!(out.status.success(), "pgan {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

const MICRO_NET: &str = r#"{"base_width": 4, "depth": 3, "shared_prefix": 2}"#;

/// Tiny dataset plus a two-step training run at `res`.
fn trained(tmp: &Path, res: u32, test: usize, seg: bool) -> (PathBuf, PathBuf) {
    ok(tmp, &["synth", "--out", "ds", "--train", "4", "--test", &test.to_string(), "--res", &res.to_string(), "--seed", "5"]);
    let cfg = format!(
        r#"{{"dataset": "ds", "out": "run", "train": {{"epochs": 1, "batch_size": 2, "seg_conditioning": {seg}, "net": {MICRO_NET}}}}}"#
    );
    fs::write(tmp.join("cfg.json"), cfg).unwrap();
    ok(tmp, &["train", "--config", "cfg.json"]);
    (tmp.join("ds"), tmp.join("run").join(FINAL_CHECKPOINT))
}

#[test]
fn synth_defaults_echo_and_disjoint_seeds() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(tmp.path(), &["synth", "--out", "ds"]);
    assert!(stdout.contains("\"train_size\": 512") && stdout.contains("\"test_size\": 128") && stdout.contains("\"resolution\": 32"));
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(tmp.path().join("ds").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.records.len(), 640);
    let d = Dataset::read(&tmp.path().join("ds")).unwrap();
    assert_eq!((d.train.len(), d.test.len()), (512, 128));
    let train: std::collections::HashSet<u64> = d.train.iter().map(|p| p.seed).collect();
    assert!(d.test.iter().all(|p| !train.contains(&p.seed)));
}

#[test]
fn synth_is_byte_deterministic() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        ok(tmp.path(), &["synth", "--mode", "top2ego", "--out", out, "--train", "6", "--test", "3", "--seed", "11"]);
    }
    let (a, b) = (tree_bytes(&tmp.path().join("a")), tree_bytes(&tmp.path().join("b")));
    assert_eq!(a.len(), 1 + 9 * 4);
    assert_eq!(a, b);
}

#[test]
fn resolution_24_is_accepted_by_synth_and_rejected_by_train() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["synth", "--out", "ds", "--train", "2", "--test", "1", "--res", "24"]);
    let out = pgan(tmp.path(), &["train", "--dataset", "ds", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("24"), "{err}");
    assert!(!tmp.path().join("run").join(FINAL_CHECKPOINT).exists());
}

#[test]
fn exit_codes_distinguish_usage_from_runtime_errors() {
    let tmp = TempDir::new().unwrap();
    let missing = pgan(tmp.path(), &["train", "--dataset", "no_such_dir"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("no_such_dir"));

    fs::write(tmp.path().join("bad.json"), r#"{"dataset": "ds", "train": {"epochz": 3}}"#).unwrap();
    let bad = pgan(tmp.path(), &["train", "--config", "bad.json"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("epochz"));

    fs::write(tmp.path().join("range.json"), r#"{"dataset": "ds", "train": {"adam_beta1": 1.5}}"#).unwrap();
    let range = pgan(tmp.path(), &["train", "--config", "range.json"]);
    assert_eq!(range.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&range.stderr).contains("adam_beta1"));

    assert_eq!(pgan(tmp.path(), &["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(pgan(tmp.path(), &["synth", "--out", "x", "--res", "4"]).status.code(), Some(2));

    ok(tmp.path(), &["synth", "--out", "ds", "--train", "2", "--test", "2", "--res", "16"]);
    fs::write(tmp.path().join("broken.pgan"), b"PGAN-not-really").unwrap();
    let corrupt = pgan(tmp.path(), &["grid", "--checkpoint", "broken.pgan", "--dataset", "ds", "--n", "1", "--out", "g.png"]);
    assert_eq!(corrupt.status.code(), Some(1));
}

#[test]
fn train_echoes_config_and_writes_outputs() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = trained(tmp.path(), 16, 2, false);
    let run = tmp.path().join("run");
    for f in ["final.pgan", "loss_log.csv", "summary.json", "config.json", "run_config.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let echoed: serde_json::Value = serde_json::from_slice(&fs::read(run.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(echoed["train"]["learning_rate"], 2e-4);
    assert_eq!(echoed["train"]["weights"]["lambda3"], 100.0);
    assert!(load_checkpoint::<f32>(&ckpt).is_ok());
}

#[test]
fn eval_reproduces_training_reconstruction_and_schema() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = trained(tmp.path(), 16, 4, false);
    ok(tmp.path(), &["train-classifier", "--dataset", "ds", "--out", "cls.bin", "--epochs", "1", "--extra", "0"]);
    let ck = ckpt.to_str().unwrap();
    ok(
        tmp.path(),
        &["eval", "--checkpoint", ck, "--dataset", "ds", "--classifier", "cls.bin", "--out", "ev/train.json", "--split", "train"],
    );
    let summary: TrainSummary = serde_json::from_slice(&fs::read(tmp.path().join("run").join(SUMMARY_FILE)).unwrap()).unwrap();
    let full: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("ev/train.evaluation.json")).unwrap()).unwrap();
    let l1 = full["reconstruction_l1"].as_f64().unwrap();
    assert!((l1 - summary.final_reconstruction_l1).abs() < 1e-5, "{l1} vs {}", summary.final_reconstruction_l1);

    ok(tmp.path(), &["eval", "--checkpoint", ck, "--dataset", "ds", "--classifier", "cls.bin", "--out", "ev/test.json"]);
    let report: serde_json::Map<String, serde_json::Value> =
        serde_json::from_slice(&fs::read(tmp.path().join("ev/test.json")).unwrap()).unwrap();
    let keys: Vec<&str> = report.keys().map(String::as_str).collect();
    let mut expected = MetricsReport::FIELDS.to_vec();
    expected.sort();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(sorted, expected);
    assert_eq!(report["n"], 4);
    let csv = fs::read_to_string(tmp.path().join("ev/test.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), MetricsReport::FIELDS.join(","));
}

#[test]
fn eval_rejects_resolution_mismatch() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = trained(tmp.path(), 16, 2, false);
    ok(tmp.path(), &["synth", "--out", "big", "--train", "2", "--test", "2", "--res", "32"]);
    ok(tmp.path(), &["train-classifier", "--dataset", "big", "--out", "cls32.bin", "--epochs", "1", "--extra", "0"]);
    let out = pgan(
        tmp.path(),
        &["eval", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "ds", "--classifier", "cls32.bin", "--out", "r.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resolution"));
}

#[test]
fn grid_layout_determinism_and_cells() {
    let tmp = TempDir::new().unwrap();
    let (ds, ckpt) = trained(tmp.path(), 32, 10, false);
    let ck = ckpt.to_str().unwrap();
    let first = ok(tmp.path(), &["grid", "--checkpoint", ck, "--dataset", "ds", "--n", "8", "--seed", "4", "--out", "g1.png"]);
    ok(tmp.path(), &["grid", "--checkpoint", ck, "--dataset", "ds", "--n", "8", "--seed", "4", "--out", "g2.png"]);
    let (g1, g2) = (fs::read(tmp.path().join("g1.png")).unwrap(), fs::read(tmp.path().join("g2.png")).unwrap());
    assert_eq!(g1, g2);

    let img = image::open(tmp.path().join("g1.png")).unwrap().to_rgb8();
    let m = GRID_MARGIN;
    assert_eq!(img.dimensions(), (3 * 32 + 4 * m, 8 * 32 + 9 * m));
    assert_eq!(img.dimensions(), grid_size(3, 8, 32));

    let rows: Vec<usize> = pgan_cli::select_rows(10, 8, 4).unwrap();
    assert!(first.contains(&format!("{rows:?}")));
    let dataset = Dataset::read(&ds).unwrap();
    let state = load_checkpoint::<f32>(&ckpt).unwrap();
    for (r, &idx) in rows.iter().enumerate() {
        let pair = &dataset.test[idx];
        let expected = [pair.exo.clone(), generate_cell(&state, pair).unwrap(), pair.ego.clone()];
        for (c, cell) in expected.iter().enumerate() {
            let (x0, y0) = (m + c as u32 * (32 + m), m + r as u32 * (32 + m));
            for y in 0..32 {
                for x in 0..32 {
                    assert_eq!(img.get_pixel(x0 + x, y0 + y), cell.get_pixel(x, y), "row {r} col {c}");
                }
            }
        }
    }
    assert_eq!(*img.get_pixel(0, 0), image::Rgb([255, 255, 255]));
    assert_ne!(pgan_cli::select_rows(10, 8, 5).unwrap(), rows);
    assert_eq!(pgan(tmp.path(), &["grid", "--checkpoint", ck, "--dataset", "ds", "--n", "11", "--out", "g3.png"]).status.code(), Some(2));
}

#[test]
fn seg_conditioned_grid_has_a_fourth_column() {
    let tmp = TempDir::new().unwrap();
    let (_, ckpt) = trained(tmp.path(), 16, 3, true);
    ok(tmp.path(), &["grid", "--checkpoint", ckpt.to_str().unwrap(), "--dataset", "ds", "--n", "3", "--out", "g.png"]);
    let img = image::open(tmp.path().join("g.png")).unwrap();
    assert_eq!((img.width(), img.height()), grid_size(4, 3, 16));
}

#[test]
fn generate_matches_the_grid_cell() {
    let tmp = TempDir::new().unwrap();
    let (ds, ckpt) = trained(tmp.path(), 16, 2, false);
    let dataset = Dataset::read(&ds).unwrap();
    let exo = ds.join(&dataset.manifest.records[4].exo);
    ok(tmp.path(), &["generate", "--checkpoint", ckpt.to_str().unwrap(), "--input", exo.to_str().unwrap(), "--out", "one.png"]);
    let got = image::open(tmp.path().join("one.png")).unwrap().to_rgb8();
    let state = load_checkpoint::<f32>(&ckpt).unwrap();
    assert_eq!(got, generate_cell(&state, &dataset.test[0]).unwrap());
}

#[test]
fn ablation_writes_a_comparison_report() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["synth", "--out", "ds", "--train", "4", "--test", "2", "--res", "16"]);
    let cfg = format!(r#"{{"dataset": "ds", "out": "abl", "train": {{"batch_size": 2, "net": {MICRO_NET}}}}}"#);
    fs::write(tmp.path().join("cfg.json"), cfg).unwrap();
    let stdout = ok(tmp.path(), &["ablate", "--config", "cfg.json", "--max-steps", "2"]);
    assert!(stdout.contains("ordering by held-out reconstruction L1"));
    let report: pgan_cli::AblationReport = serde_json::from_slice(&fs::read(tmp.path().join("abl/ablation.json")).unwrap()).unwrap();
    let names: Vec<&str> = report.rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["full", "no_cross_cycle", "no_contextual"]);
    assert_eq!(report.row("no_cross_cycle").unwrap().lambda4, 0.0);
    assert_eq!(report.row("no_contextual").unwrap().lambda6, 0.0);
    assert_eq!(report.row("full").unwrap().lambda4, 10.0);
    assert!(report.rows.iter().all(|r| r.steps == 2 && r.seed == 0 && r.test_reconstruction_l1.is_finite()));
    let csv = fs::read_to_string(tmp.path().join("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(tmp.path().join("abl/full").join(FINAL_CHECKPOINT).exists());
}
