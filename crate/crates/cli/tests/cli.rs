use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hoi_core::dataset::{read_jsonl, read_records, InstructionSample};
use hoi_core::kinematics::{AssetLibrary, SkeletonTemplate};
use hoi_core::metrics::{eval_state, PartwiseReport};
use hoi_core::HoiState;

fn fhoi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhoi"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = fhoi(dir, args);
    assert!(
        out.status.success(),
        "fhoi {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const TINY: &[&str] = &["--d-model", "16", "--layers", "1", "--heads", "2", "--ff-width", "32", "--feature-width", "8", "--point-count", "16"];

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// A small corpus with instruction files.
    fn new(pairs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let p = pairs.to_string();
        ok(dir.path(), &["gen-data", "--out", "data.jsonl", "--pairs", &p, "--seed", "3"]);
        ok(dir.path(), &["build-instructions", "--data", "data.jsonl", "--out-dir", "inst"]);
        Self { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec!["train", "--instructions", "inst", "--out", out];
        args.extend_from_slice(TINY);
        args.extend_from_slice(extra);
        fhoi(self.path(), &args)
    }
}

#[test]
fn gen_data_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--out", "a.jsonl", "--pairs", "100", "--seed", "7"]);
    ok(dir.path(), &["gen-data", "--out", "b.jsonl", "--pairs", "100", "--seed", "7"]);
    let a = std::fs::read(dir.path().join("a.jsonl")).unwrap();
    let b = std::fs::read(dir.path().join("b.jsonl")).unwrap();
    assert_eq!(a, b);
    assert_eq!(read_records(&dir.path().join("a.jsonl")).unwrap().len(), 100);
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["outputs"][0]["bytes"], a.len());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"out": "x.jsonl", "corpus": {"pairs": 30, "seed": 1}}"#).unwrap();
    ok(dir.path(), &["gen-data", "--config", "c.json", "--pairs", "20"]);
    assert_eq!(read_records(&dir.path().join("x.jsonl")).unwrap().len(), 20);
    let bad = fhoi(dir.path(), &["gen-data", "--config", "c.json", "--pairs", "many"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn images_are_written_and_referenced() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-data", "--out", "d/data.jsonl", "--pairs", "10", "--images"]);
    let recs = read_records(&dir.path().join("d/data.jsonl")).unwrap();
    let rel = recs[0].current_image.as_ref().unwrap();
    assert!(dir.path().join("d").join(rel).exists());
}

#[test]
fn instruction_files_cover_tasks_and_splits() {
    let ws = Workspace::new(40);
    for task in ["understand", "reason", "generate", "reconstruct"] {
        for split in ["train", "test"] {
            let f = ws.path().join(format!("inst/{task}_{split}.jsonl"));
            let samples: Vec<InstructionSample> = read_jsonl(&f).unwrap();
            assert!(!samples.is_empty(), "{task} {split}");
            samples.iter().for_each(|s| s.validate().unwrap());
        }
    }
    assert!(ws.path().join("inst/manifest.json").exists());
}

#[test]
fn untrained_eval_equals_independent_no_motion_baseline() {
    let ws = Workspace::new(40);
    let t = ws.train("m.ckpt", &["--steps", "0"]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    ok(ws.path(), &["eval", "--checkpoint", "m.ckpt", "--instructions", "inst", "--task", "generate", "--out", "r.csv", "--n-points", "32"]);

    let samples: Vec<InstructionSample> = read_jsonl(&ws.path().join("inst/generate_test.jsonl")).unwrap();
    let (skel, assets) = (SkeletonTemplate::default(), AssetLibrary::standard());
    let reports: Vec<PartwiseReport> = samples
        .iter()
        .map(|s| eval_state(&s.reference_state, s.target_state.as_ref().unwrap(), &skel, &assets, 32, 0).unwrap())
        .collect();
    let expected = reports.iter().map(|r| r.averaged).sum::<f64>() / reports.len() as f64;

    let mut rdr = csv::Reader::from_path(ws.path().join("r.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let col = headers.iter().position(|h| h == "Averaged").unwrap();
    let got: f64 = row[col].parse().unwrap();
    assert!((got - expected).abs() < 1e-5, "{got} vs {expected}");
    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(sidecar["unit"], "cm");
    assert_eq!(sidecar["n_points"], 32);
}

#[test]
fn rollout_of_still_transitions_keeps_the_state() {
    let ws = Workspace::new(20);
    assert!(ws.train("z.ckpt", &["--steps", "0"]).status.success());
    let recs = read_records(&ws.path().join("data.jsonl")).unwrap();
    let still = "the person remains still . the head remains still . the left arm remains still .";
    std::fs::write(ws.path().join("t.txt"), format!("{still}\n{still}\n{still}\n")).unwrap();
    ok(ws.path(), &["rollout", "--checkpoint", "z.ckpt", "--data", "data.jsonl", "--record", &recs[0].id, "--transitions", "t.txt", "--out", "roll.jsonl"]);
    let steps: Vec<serde_json::Value> = read_jsonl(&ws.path().join("roll.jsonl")).unwrap();
    assert_eq!(steps.len(), 4);
    let states: Vec<HoiState> = steps.iter().map(|s| serde_json::from_value(s["state"].clone()).unwrap()).collect();
    assert!(states.iter().all(|s| *s == states[0]));
    assert_eq!(states[0], recs[0].current.canonicalized().unwrap());
}

#[test]
fn infer_prints_one_response() {
    let ws = Workspace::new(20);
    assert!(ws.train("z.ckpt", &["--steps", "0"]).status.success());
    let out = ok(ws.path(), &["infer", "--checkpoint", "z.ckpt", "--instructions", "inst/generate_test.jsonl", "--max-new-tokens", "4"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["task"], "generate");
    assert!(v["response"]["state"].is_object());
}

#[test]
fn training_is_reproducible_and_resumable() {
    let ws = Workspace::new(20);
    for name in ["a.ckpt", "b.ckpt"] {
        assert!(ws.train(name, &["--steps", "4", "--batch-size", "4", "--seed", "5"]).status.success());
    }
    let a = std::fs::read(ws.path().join("a.ckpt")).unwrap();
    assert_eq!(a, std::fs::read(ws.path().join("b.ckpt")).unwrap());
    assert!(ws.train("h.ckpt", &["--steps", "2", "--batch-size", "4", "--seed", "5"]).status.success());
    let resumed = fhoi(ws.path(), &["train", "--instructions", "inst", "--out", "c.ckpt", "--resume", "h.ckpt", "--steps", "4", "--batch-size", "4", "--seed", "5"]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    assert_eq!(a, std::fs::read(ws.path().join("c.ckpt")).unwrap());
}

#[test]
fn adapters_train_and_merge() {
    let ws = Workspace::new(20);
    assert!(ws.train("base.ckpt", &["--steps", "1"]).status.success());
    let out = fhoi(ws.path(), &["train", "--instructions", "inst", "--out", "lora.ckpt", "--init", "base.ckpt", "--lora-rank", "2", "--steps", "2", "--merge-lora"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (model, state) = hoi_model::checkpoint::load(&ws.path().join("lora.ckpt")).unwrap();
    assert_eq!(model.config.lora_rank, 0);
    assert!(state.is_none());
}

#[test]
fn numeric_failure_exits_4_and_cleans_up() {
    let ws = Workspace::new(20);
    let out = ws.train("boom.ckpt", &["--steps", "20", "--lr", "1e300", "--clip-norm", "1e300"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ws.path().join("boom.ckpt").exists());
    assert!(!ws.path().join("boom.loss.csv").exists());
    assert!(ws.path().join("boom.nan.json").exists());
    assert_eq!(String::from_utf8_lossy(&out.stderr).trim().lines().count(), 1);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fhoi(dir.path(), &["gen-data", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(fhoi(dir.path(), &["build-instructions", "--data", "missing.jsonl", "--out-dir", "o"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.jsonl"), "{\"schema_version\": 1}\n").unwrap();
    let out = fhoi(dir.path(), &["build-instructions", "--data", "bad.jsonl", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("o").exists(), "partial output directory left behind");
}

#[test]
fn commands_leave_inputs_untouched() {
    let ws = Workspace::new(20);
    let snapshot = |p: PathBuf| std::fs::read(p).unwrap();
    let data = snapshot(ws.path().join("data.jsonl"));
    let inst = snapshot(ws.path().join("inst/generate_test.jsonl"));
    assert!(ws.train("m.ckpt", &["--steps", "1"]).status.success());
    ok(ws.path(), &["eval", "--baseline", "--instructions", "inst", "--task", "generate", "--out", "b.csv"]);
    assert_eq!(data, snapshot(ws.path().join("data.jsonl")));
    assert_eq!(inst, snapshot(ws.path().join("inst/generate_test.jsonl")));
    let clobber = fhoi(ws.path(), &["gen-data", "--out", "data.jsonl", "--grammar", "data.jsonl"]);
    assert_ne!(clobber.status.code(), Some(0));
    assert_eq!(data, snapshot(ws.path().join("data.jsonl")));
}
