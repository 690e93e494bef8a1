use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hoi_core::dataset::Task;
use hoi_core::kinematics::{sample_part_points, transform_object_points};
use hoi_core::metrics::{RunReport, RunScore};
use hoi_core::{BodyPart, HoiState};
use hoi_model::checkpoint;
use hoi_model::eval::{eval_run, no_motion_baseline, perplexity, write_report, EvalConfig, Prediction};
use hoi_model::{ModelConfig, ModelSample, SampleContext};
use serde::{Deserialize, Serialize};

use super::{instruction_file, read_instructions, require, require_input, Run};
use crate::args::EvalArgs;
use crate::failure::{CliResult, Failure};
use crate::layered::Layered;
use crate::outputs::Outputs;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCommandConfig {
    pub checkpoint: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub split: String,
    pub task: Option<Task>,
    pub out: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub points_dir: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub baseline: bool,
    pub limit: Option<usize>,
    pub eval: EvalConfig,
}

impl Default for EvalCommandConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            instructions: None,
            split: "test".into(),
            task: None,
            out: None,
            predictions: None,
            points_dir: None,
            image_root: None,
            baseline: false,
            limit: None,
            eval: EvalConfig::default(),
        }
    }
}

/// Sidecar path for a report: same stem, `.json` extension.
pub fn sidecar_path(report: &Path) -> PathBuf {
    report.with_extension("json")
}

fn write_points(path: &Path, pred: &HoiState, gt: &HoiState, ctx: &SampleContext, n: usize, seed: u64) -> CliResult<()> {
    let mut text = String::new();
    for (label, state) in [("pred", pred), ("gt", gt)] {
        for part in BodyPart::EVALUATED {
            for p in sample_part_points(&state.human, &ctx.skeleton, part.key(), n, seed)?.iter() {
                let _ = writeln!(text, "{label} {} {:.6} {:.6} {:.6}", part.key(), p.x, p.y, p.z);
            }
        }
        let asset = ctx.assets.get(&state.object_id)?;
        for p in transform_object_points(&asset.points, &state.object)?.iter() {
            let _ = writeln!(text, "{label} object {:.6} {:.6} {:.6}", p.x, p.y, p.z);
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    let mut l = Layered::load(args.config.as_deref())?;
    let task = args.task.map(|t| t.parse::<Task>().map_err(|e| Failure::usage(e.to_string()))).transpose()?;
    l.set("checkpoint", args.checkpoint)
        .set("instructions", args.instructions)
        .set("split", args.split)
        .set("task", task)
        .set("out", args.out)
        .set("predictions", args.predictions)
        .set("points_dir", args.points_dir)
        .set("image_root", args.image_root)
        .set("baseline", args.baseline.then_some(true))
        .set("limit", args.limit)
        .set("eval.method", args.method)
        .set("eval.max_new_tokens", args.max_new_tokens)
        .set("eval.n_points", args.n_points)
        .set("eval.seed", args.eval_seed)
        .set("eval.rouge", args.rouge);
    let mut cfg: EvalCommandConfig = l.resolve()?;
    let task = *require(&cfg.task, "task")?;
    let dir = require(&cfg.instructions, "instructions")?.clone();
    let out = require(&cfg.out, "out")?.clone();
    if cfg.eval.n_points == 0 {
        return Err(Failure::usage("n_points must be positive"));
    }
    if cfg.baseline && cfg.eval.method == EvalConfig::default().method {
        cfg.eval.method = "no-motion".into();
    }

    let data_path = instruction_file(&dir, task, &cfg.split);
    let mut inputs = vec![data_path.clone()];
    let model = if cfg.baseline {
        if !task.has_target_state() {
            return Err(Failure::usage(format!("the no-motion baseline only applies to pose tasks, not {task}")));
        }
        None
    } else {
        let ckpt = require(&cfg.checkpoint, "checkpoint")?;
        require_input(ckpt)?;
        inputs.push(ckpt.clone());
        Some(checkpoint::load(ckpt)?.0)
    };
    let point_count = model.as_ref().map_or(ModelConfig::default().point_count, |m| m.config.point_count);
    let ctx = SampleContext {
        image_root: cfg.image_root.clone(),
        ..SampleContext::standard(point_count)
    };
    let mut instructions = read_instructions(&data_path)?;
    if let Some(n) = cfg.limit {
        instructions.truncate(n);
    }
    let samples = instructions
        .iter()
        .map(|s| ModelSample::from_instruction(s, &ctx))
        .collect::<hoi_core::Result<Vec<_>>>()?;

    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let run = Run::start("eval", &input_refs);
    let mut outputs = Outputs::new(&input_refs);
    let out = outputs.claim(&out)?;
    let sidecar = outputs.claim(&sidecar_path(&out))?;

    let (report, predictions, ppl) = match &model {
        None => {
            let base = no_motion_baseline(&samples, task, &ctx, cfg.eval.n_points, cfg.eval.seed)?;
            let report = RunReport {
                method: cfg.eval.method.clone(),
                task: task.name().into(),
                samples: samples.len(),
                malformed: 0,
                score: RunScore::Geometry(base),
            };
            let preds: Vec<Prediction> = samples
                .iter()
                .map(|s| Prediction {
                    id: s.id.clone(),
                    text: String::new(),
                    target_text: s.target_text.clone(),
                    state: Some(s.reference_state.clone()),
                    malformed: false,
                    truncated: false,
                })
                .collect();
            (report, preds, None)
        }
        Some(m) => {
            let o = eval_run(m, &samples, task, &ctx, &cfg.eval)?;
            (o.report, o.predictions, Some(perplexity(m, &samples, 16)?))
        }
    };
    let truncated = predictions.iter().filter(|p| p.truncated).count();
    let extra = serde_json::json!({
        "checkpoint": cfg.checkpoint,
        "instructions": dir,
        "split": cfg.split,
        "baseline": cfg.baseline,
        "perplexity": ppl,
        "truncated": truncated,
    });
    write_report(&report, &out, &sidecar, &cfg.eval, extra)?;
    log::info!("{}: {:?} ({} malformed)", task, report.score, report.malformed);

    if let Some(p) = &cfg.predictions {
        let p = outputs.claim(p)?;
        hoi_core::dataset::write_jsonl(&p, &predictions)?;
    }
    if let Some(dir) = &cfg.points_dir {
        if task.has_target_state() {
            outputs.claim_dir(dir)?;
            for (s, p) in samples.iter().zip(&predictions) {
                let (Some(pred), Some(gt)) = (&p.state, &s.target_state) else {
                    continue;
                };
                let path = outputs.claim(&dir.join(format!("{}.xyz", s.id)))?;
                write_points(&path, pred, gt, &ctx, cfg.eval.n_points, cfg.eval.seed)?;
            }
        } else {
            log::warn!("{task} has no states; no point clouds written");
        }
    }
    run.finish(&mut outputs, &cfg, Some(cfg.eval.seed), &out)?;
    outputs.commit();
    Ok(())
}
