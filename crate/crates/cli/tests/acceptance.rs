//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to stderr.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hoi_core::dataset::{
    generate_corpus, read_jsonl, read_records, to_instruction, validate_record, write_jsonl, CorpusConfig, Describer, InstructionSample,
    Task,
};
use hoi_core::kinematics::{forward_kinematics, AssetLibrary, SkeletonTemplate};
use hoi_core::metrics::{bleu4, chamfer, chamfer_raw, rouge, RougeVariant};
use hoi_core::rotation::rotation_matrix;
use hoi_core::{apply_offset, state_offset, HoiState, HumanPose, ObjectPose, HUMAN_DIM, NUM_JOINTS};
use hoi_core::kinematics::PointSet;
use hoi_model::loss::{batch_loss, LossWeights};
use hoi_model::tape::Tape;
use hoi_model::{collate, Model, ModelConfig, ModelSample, SampleContext, Vocabulary};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: &str, elapsed: Duration) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n} [{name}]: {verdict} ({detail}; {:.1}s)",
        elapsed.as_secs_f64()
    );
}

fn fhoi(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_fhoi"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "fhoi {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn csv_value(path: &Path, column: &str) -> f64 {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let i = headers.iter().position(|h| h == column).unwrap_or_else(|| panic!("no column {column}"));
    row[i].parse().unwrap()
}

fn sidecar_perplexity(csv_path: &Path) -> f64 {
    let text = std::fs::read_to_string(csv_path.with_extension("json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["config"]["run"]["perplexity"].as_f64().unwrap()
}

/// Series expansion of exp([r]x) with scaling and squaring.
fn expm(r: &Vector3<f64>) -> Matrix3<f64> {
    let k = Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0) / 64.0;
    let (mut term, mut sum) = (Matrix3::identity(), Matrix3::identity());
    for n in 1..40 {
        term = term * k / n as f64;
        sum += term;
    }
    for _ in 0..6 {
        sum = sum * sum;
    }
    sum
}

fn max_abs(m: Matrix3<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn random_vec(rng: &mut ChaCha8Rng, r: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_pose(rng: &mut ChaCha8Rng) -> HumanPose {
    let mut theta = [0.0; HUMAN_DIM];
    theta.iter_mut().for_each(|t| *t = rng.random_range(-1.8..1.8));
    HumanPose::new(theta).unwrap()
}

#[test]
fn c1_metric_oracles() {
    let start = Instant::now();
    let cands = ["the cat sat on the mat", "a dog runs in the park"];
    let refs = ["the cat is on the mat", "a dog runs in the green park"];
    // Clipped matches over candidate n-grams, summed over both sentences:
    // 1-grams 11/12, 2-grams 7/10, 3-grams 4/8, 4-grams 2/6.
    // Candidate length 12, reference length 13.
    let expected_bleu = 100.0 * (1.0f64 - 13.0 / 12.0).exp() * (11.0 / 12.0 * 7.0 / 10.0 * 4.0 / 8.0 * 2.0 / 6.0f64).powf(0.25);
    let bleu = bleu4(&cands, &refs).unwrap();
    let (r, _) = rouge(&["a b c"], &["a x b y c"], RougeVariant::Recall).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let na = rng.random_range(1..=50);
        let nb = rng.random_range(1..=50);
        let a: Vec<[f64; 3]> = (0..na).map(|_| random_vec(&mut rng, 1.0).into()).collect();
        let b: Vec<[f64; 3]> = (0..nb).map(|_| random_vec(&mut rng, 1.0).into()).collect();
        let directed = |x: &[[f64; 3]], y: &[[f64; 3]]| {
            let mut total = 0.0;
            for p in x {
                let mut best = f64::INFINITY;
                for q in y {
                    let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
                    best = best.min(d);
                }
                total += best;
            }
            total / x.len() as f64
        };
        let oracle = 0.5 * (directed(&a, &b) + directed(&b, &a));
        worst = worst.max((chamfer_raw(&a, &b).unwrap() - oracle).abs());
        let (pa, pb) = (
            PointSet::new(a.iter().map(|p| Vector3::from(*p)).collect()).unwrap(),
            PointSet::new(b.iter().map(|p| Vector3::from(*p)).collect()).unwrap(),
        );
        worst = worst.max((chamfer(&pa, &pb) / 100.0 - oracle).abs());
    }
    let elapsed = start.elapsed();
    let pass = (bleu - expected_bleu).abs() < 1e-6 && r == 60.0 && worst < 1e-9 && elapsed.as_secs() < 10;
    report(
        1,
        "metric oracles",
        pass,
        &format!("bleu {bleu:.6} vs {expected_bleu:.6}, rouge {r}, chamfer max err {worst:.1e}"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn c2_gradient_suite() {
    let start = Instant::now();
    let cfg = ModelConfig::tiny();
    assert_eq!(cfg.layers, 2);
    let ctx = SampleContext::standard(cfg.point_count);
    let corpus = CorpusConfig {
        pairs: 4,
        ..CorpusConfig::default()
    };
    let recs = generate_corpus(&corpus, &ctx.skeleton, &ctx.assets, &Describer::standard()).unwrap();
    let samples: Vec<ModelSample> = recs
        .iter()
        .take(2)
        .flat_map(|r| Task::ALL.map(|t| to_instruction(r, t)))
        .map(|s| ModelSample::from_instruction(&s, &ctx).unwrap())
        .collect();
    let vocab = Vocabulary::build(samples.iter().flat_map(|s| [s.prompt.as_str(), s.target_text.as_str()]));
    let mut model = Model::new(cfg, vocab).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for p in model.params.iter_mut() {
        p.value.data.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
    }
    let refs: Vec<&ModelSample> = samples.iter().take(4).collect();
    let batch = collate(&refs, &model.vocab, &model.config).unwrap();
    let loss_of = |m: &Model| {
        let mut t = Tape::new();
        let bl = batch_loss(m, &mut t, &batch, &refs, LossWeights::default()).unwrap();
        t.value(bl.total).item()
    };
    let mut t = Tape::new();
    let bl = batch_loss(&model, &mut t, &batch, &refs, LossWeights::default()).unwrap();
    assert!(bl.pose > 0.0, "fixture must exercise the pose loss");
    let grads = t.backward(bl.total);

    let names: Vec<&String> = grads.keys().collect();
    let h = 1e-5;
    let (mut checked, mut failed, mut worst) = (0, 0, 0.0f64);
    while checked < 60 {
        let name = names[rng.random_range(0..names.len())];
        let g = &grads[name];
        let k = rng.random_range(0..g.data.len());
        let mut m = model.clone();
        m.params.get_mut(name).value.data[k] += h;
        let plus = loss_of(&m);
        m.params.get_mut(name).value.data[k] -= 2.0 * h;
        let minus = loss_of(&m);
        let fd = (plus - minus) / (2.0 * h);
        let scale = fd.abs().max(g.data[k].abs());
        let rel = if scale < 1e-7 { 0.0 } else { (fd - g.data[k]).abs() / scale };
        worst = worst.max(rel);
        failed += usize::from(rel >= 1e-3);
        checked += 1;
    }
    let elapsed = start.elapsed();
    let pass = failed == 0 && elapsed.as_secs() < 120;
    report(2, "gradient suite", pass, &format!("{checked} params, worst rel err {worst:.2e}"), elapsed);
    assert!(pass);
}

#[test]
fn c3_kinematics_suite() {
    let start = Instant::now();
    let skel = SkeletonTemplate::default();
    let rest: Vec<Vector3<f64>> = (0..NUM_JOINTS)
        .map(|j| {
            let mut chain = vec![j];
            while let Some(p) = skel.parent_of(*chain.last().unwrap()) {
                chain.push(p);
            }
            // Root first, matching the order the offsets accumulate along the tree.
            chain.iter().rev().fold(Vector3::zeros(), |acc, &c| acc + Vector3::from(skel.rest_offsets[c]))
        })
        .collect();
    let zero = forward_kinematics(&HumanPose::zero(), &skel);
    let rest_ok = zero.iter().zip(&rest).all(|(a, b)| a == b);

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut rigid_err: f64 = 0.0;
    let mut locality_ok = true;
    for _ in 0..100 {
        let pose = random_pose(&mut rng);
        let base = forward_kinematics(&pose, &skel);
        let r = random_vec(&mut rng, 1.5);
        let mut rotated = pose.clone();
        let root = expm(&r) * expm(&pose.joint(0));
        rotated.set_joint(0, hoi_core::rotation::matrix_to_axis_angle(&root));
        let moved = forward_kinematics(&rotated, &skel);
        let rot = expm(&r);
        for j in 0..NUM_JOINTS {
            let expected = base[0] + rot * (base[j] - base[0]);
            rigid_err = rigid_err.max((moved[j] - expected).amax());
        }

        let j = rng.random_range(0..NUM_JOINTS);
        let mut bent = pose.clone();
        bent.set_joint(j, pose.joint(j) + random_vec(&mut rng, 0.5));
        let after = forward_kinematics(&bent, &skel);
        for k in 0..NUM_JOINTS {
            let below = k != j && skel.is_descendant(k, j);
            locality_ok &= if below { after[k] != base[k] } else { after[k] == base[k] };
        }
    }
    let elapsed = start.elapsed();
    let pass = rest_ok && rigid_err < 1e-9 && locality_ok && elapsed.as_secs() < 10;
    report(
        3,
        "kinematics suite",
        pass,
        &format!("rest exact {rest_ok}, rigidity err {rigid_err:.1e}, locality {locality_ok}"),
        elapsed,
    );
    assert!(pass);
}

#[test]
fn c4_offset_algebra() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let state = |rng: &mut ChaCha8Rng| {
        let obj = ObjectPose::new(random_vec(rng, 2.0), random_vec(rng, 1.8)).unwrap();
        HoiState::new(random_pose(rng), obj, "box")
    };
    let (mut rot_err, mut translation_exact) = (0.0f64, true);
    for _ in 0..1000 {
        let (a, b) = (state(&mut rng), state(&mut rng));
        let back = apply_offset(&a, &state_offset(&a, &b).unwrap()).unwrap();
        for j in 0..NUM_JOINTS {
            rot_err = rot_err.max(max_abs(rotation_matrix(&back.human.joint(j)) - expm(&b.human.joint(j))));
        }
        rot_err = rot_err.max(max_abs(rotation_matrix(&back.object.rotation) - expm(&b.object.rotation)));
        translation_exact &= back.object.translation == b.object.translation;
    }
    let elapsed = start.elapsed();
    let pass = rot_err < 1e-12 && translation_exact && elapsed.as_secs() < 10;
    report(
        4,
        "offset algebra",
        pass,
        &format!("1000 pairs, rotation err {rot_err:.1e}, translations exact {translation_exact}"),
        elapsed,
    );
    assert!(pass);
}

const SMALL_MODEL: &[&str] = &["--d-model", "64", "--layers", "2", "--heads", "4", "--ff-width", "256", "--lr", "1e-3", "--batch-size", "16"];

fn prepare(dir: &Path) {
    fhoi(dir, &["gen-data", "--out", "data.jsonl", "--pairs", "2000", "--seed", "0", "--train-fraction", "0.9"]);
    fhoi(dir, &["build-instructions", "--data", "data.jsonl", "--out-dir", "inst"]);
}

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--instructions", "inst", "--out", out];
    args.extend_from_slice(SMALL_MODEL);
    args.extend_from_slice(extra);
    fhoi(dir, &args);
}

fn eval(dir: &Path, ckpt: &str, task: &str, out: &str, extra: &[&str]) {
    let mut args = vec!["eval", "--checkpoint", ckpt, "--instructions", "inst", "--task", task, "--out", out];
    args.extend_from_slice(extra);
    fhoi(dir, &args);
}

#[test]
fn c5_end_to_end_toy_run() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let gen = ["--tasks", "generate", "--seed", "0"];

    train(dir, "init.ckpt", &[&gen[..], &["--steps", "0"]].concat());
    eval(dir, "init.ckpt", "generate", "init.csv", &[]);
    let t0 = Instant::now();
    train(dir, "offset.ckpt", &[&gen[..], &["--steps", "1500"]].concat());
    let train_time = t0.elapsed();
    train(dir, "absolute.ckpt", &[&gen[..], &["--steps", "1500", "--offset-regression", "false"]].concat());
    eval(dir, "offset.ckpt", "generate", "offset.csv", &[]);
    eval(dir, "absolute.ckpt", "generate", "absolute.csv", &[]);
    fhoi(dir, &["eval", "--baseline", "--instructions", "inst", "--task", "generate", "--out", "baseline.csv"]);

    let (ppl0, ppl) = (sidecar_perplexity(&dir.join("init.csv")), sidecar_perplexity(&dir.join("offset.csv")));
    let base = csv_value(&dir.join("baseline.csv"), "Averaged");
    let offset = csv_value(&dir.join("offset.csv"), "Averaged");
    let absolute = csv_value(&dir.join("absolute.csv"), "Averaged");
    let drop = 1.0 - ppl / ppl0;
    let (a, b, c) = (drop >= 0.4, offset <= 0.6 * base, offset <= absolute);
    let pass = a && b && c && train_time.as_secs() <= 900;
    report(
        5,
        "end-to-end toy run",
        pass,
        &format!(
            "perplexity {ppl0:.2} -> {ppl:.3} ({:.0}% drop) {a}; chamfer offset {offset:.3} vs baseline {base:.3} ({:.0}%) {b}; \
             absolute {absolute:.3} {c}; train {:.0}s",
            100.0 * drop,
            100.0 * offset / base,
            train_time.as_secs_f64()
        ),
        start.elapsed(),
    );
    assert!(pass);
}

#[test]
fn c6_multi_task_direction() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in ["0", "1", "2"] {
        let common = ["--epochs", "2", "--seed", seed];
        train(dir, "single.ckpt", &[&common[..], &["--tasks", "understand"]].concat());
        train(dir, "joint.ckpt", &common);
        let limit = ["--limit", "100", "--max-new-tokens", "96"];
        eval(dir, "single.ckpt", "understand", "single.csv", &limit);
        eval(dir, "joint.ckpt", "understand", "joint.csv", &limit);
        let single = csv_value(&dir.join("single.csv"), "BLEU-4");
        let joint = csv_value(&dir.join("joint.csv"), "BLEU-4");
        wins += usize::from(joint >= single);
        detail.push(format!("seed {seed}: joint {joint:.2} vs single {single:.2}"));
    }
    let pass = wins >= 2;
    report(6, "multi-task direction", pass, &format!("{wins}/3 seeds; {}", detail.join(", ")), start.elapsed());
    assert!(pass);
}

#[test]
fn c7_determinism_and_formats() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for name in ["a", "b"] {
        fhoi(dir, &["gen-data", "--out", &format!("{name}.jsonl"), "--pairs", "300", "--seed", "9"]);
    }
    let same_data = std::fs::read(dir.join("a.jsonl")).unwrap() == std::fs::read(dir.join("b.jsonl")).unwrap();

    fhoi(dir, &["gen-data", "--out", "data.jsonl", "--pairs", "60", "--seed", "9"]);
    fhoi(dir, &["build-instructions", "--data", "data.jsonl", "--out-dir", "inst"]);
    let tiny = ["--d-model", "16", "--layers", "1", "--heads", "2", "--ff-width", "32", "--steps", "3", "--seed", "4"];
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let ckpt = format!("{name}.ckpt");
        let mut args = vec!["train", "--instructions", "inst", "--out", &ckpt];
        args.extend_from_slice(&tiny);
        fhoi(dir, &args);
        for task in ["understand", "generate"] {
            let out = format!("{name}_{task}.csv");
            eval(dir, &ckpt, task, &out, &["--max-new-tokens", "24"]);
            csvs.push(std::fs::read(dir.join(out)).unwrap());
        }
    }
    let same_eval = csvs[0] == csvs[2] && csvs[1] == csvs[3];

    let skel = SkeletonTemplate::default();
    let assets = AssetLibrary::standard();
    let recs = generate_corpus(&CorpusConfig::default(), &skel, &assets, &Describer::standard()).unwrap();
    let invalid = recs.iter().filter(|r| !validate_record(r).is_ok()).count();
    let written = read_records(&dir.join("data.jsonl")).unwrap();
    let invalid = invalid + written.iter().filter(|r| !validate_record(r).is_ok()).count();

    let mut round_trip = true;
    for task in Task::ALL {
        let samples: Vec<InstructionSample> = recs.iter().take(50).map(|r| to_instruction(r, task)).collect();
        let path = dir.join(format!("{}.jsonl", task.name()));
        write_jsonl(&path, &samples).unwrap();
        let back: Vec<InstructionSample> = read_jsonl(&path).unwrap();
        round_trip &= back == samples && back.iter().all(|s| s.validate().is_ok());
        for s in &samples {
            let text = serde_json::to_string(s).unwrap();
            round_trip &= serde_json::from_str::<InstructionSample>(&text).unwrap() == *s;
        }
    }
    let elapsed = start.elapsed();
    let pass = same_data && same_eval && invalid == 0 && round_trip && elapsed.as_secs() < 60;
    report(
        7,
        "determinism and formats",
        pass,
        &format!(
            "dataset identical {same_data}, eval identical {same_eval}, {} records with {invalid} invalid, formats round-trip {round_trip}",
            recs.len() + written.len()
        ),
        elapsed,
    );
    assert!(pass);
}
