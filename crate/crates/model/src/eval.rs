use std::path::Path;

use hoi_core::dataset::Task;
use hoi_core::metrics::{eval_state, text_score, write_sidecar, PartwiseReport, ReportSidecar, RougeVariant, RunReport, RunScore};
use hoi_core::{HoiError, HoiState, Result};
use serde::{Deserialize, Serialize};

use crate::collate::collate;
use crate::infer::Decoder;
use crate::loss::{batch_loss, LossWeights};
use crate::model::Model;
use crate::sample::{ModelSample, SampleContext};
use crate::tape::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub method: String,
    pub max_new_tokens: usize,
    /// Points sampled per body part.
    pub n_points: usize,
    pub seed: u64,
    pub rouge: RougeVariant,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            method: "model".into(),
            max_new_tokens: 256,
            n_points: 256,
            seed: 0,
            rouge: RougeVariant::Recall,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
    pub target_text: String,
    pub state: Option<HoiState>,
    pub malformed: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutput {
    pub report: RunReport,
    pub predictions: Vec<Prediction>,
}

fn task_samples<'a>(samples: &'a [ModelSample], task: Task) -> Result<Vec<&'a ModelSample>> {
    let picked: Vec<&ModelSample> = samples.iter().filter(|s| s.task() == Some(task)).collect();
    if picked.is_empty() {
        return Err(HoiError::Validation(format!("no {task} samples to evaluate")));
    }
    Ok(picked)
}

/// Scores predicted states against targets, dropping the object column when
/// the object pose was an input.
pub fn geometry_report(
    pairs: &[(&HoiState, &HoiState)],
    task: Task,
    ctx: &SampleContext,
    n_points: usize,
    seed: u64,
) -> Result<PartwiseReport> {
    let reports = pairs
        .iter()
        .map(|(pred, gt)| {
            let r = eval_state(pred, gt, &ctx.skeleton, &ctx.assets, n_points, seed)?;
            Ok(if task == Task::Reconstruct { r.without_object() } else { r })
        })
        .collect::<Result<Vec<_>>>()?;
    PartwiseReport::mean(&reports)
}

/// The report obtained by predicting the reference state unchanged.
pub fn no_motion_baseline(samples: &[ModelSample], task: Task, ctx: &SampleContext, n_points: usize, seed: u64) -> Result<PartwiseReport> {
    if !task.has_target_state() {
        return Err(HoiError::Domain(format!("{task} has no target state")));
    }
    let picked = task_samples(samples, task)?;
    let pairs = picked
        .iter()
        .map(|s| {
            let gt = s.target_state.as_ref().ok_or_else(|| HoiError::Validation(format!("{} lacks a target state", s.id)))?;
            Ok((&s.reference_state, gt))
        })
        .collect::<Result<Vec<_>>>()?;
    geometry_report(&pairs, task, ctx, n_points, seed)
}

/// Generates a response for every sample of `task` and scores the run.
pub fn eval_run(model: &Model, samples: &[ModelSample], task: Task, ctx: &SampleContext, cfg: &EvalConfig) -> Result<EvalOutput> {
    let picked = task_samples(samples, task)?;
    let decoder = Decoder::new(model);
    let mut predictions = Vec::with_capacity(picked.len());
    for s in &picked {
        let r = decoder.generate(s, cfg.max_new_tokens)?;
        predictions.push(Prediction {
            id: s.id.clone(),
            text: r.text,
            target_text: s.target_text.clone(),
            state: r.state,
            malformed: r.malformed,
            truncated: r.truncated,
        });
    }
    let malformed = predictions.iter().filter(|p| p.malformed).count();
    let score = if task.has_target_state() {
        let pairs = picked
            .iter()
            .zip(&predictions)
            .map(|(s, p)| {
                let gt = s.target_state.as_ref().ok_or_else(|| HoiError::Validation(format!("{} lacks a target state", s.id)))?;
                let pred = p.state.as_ref().unwrap_or(&s.reference_state);
                Ok((pred, gt))
            })
            .collect::<Result<Vec<_>>>()?;
        RunScore::Geometry(geometry_report(&pairs, task, ctx, cfg.n_points, cfg.seed)?)
    } else {
        let cands: Vec<&str> = predictions.iter().map(|p| p.text.as_str()).collect();
        let refs: Vec<&str> = predictions.iter().map(|p| p.target_text.as_str()).collect();
        RunScore::Text(text_score(&cands, &refs, cfg.rouge)?)
    };
    Ok(EvalOutput {
        report: RunReport {
            method: cfg.method.clone(),
            task: task.name().into(),
            samples: picked.len(),
            malformed,
            score,
        },
        predictions,
    })
}

/// `exp` of the mean cross-entropy over all response tokens.
pub fn perplexity(model: &Model, samples: &[ModelSample], batch_size: usize) -> Result<f64> {
    if batch_size == 0 {
        return Err(HoiError::Config("batch size must be positive".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in samples.chunks(batch_size) {
        let refs: Vec<&ModelSample> = chunk.iter().collect();
        let batch = collate(&refs, &model.vocab, &model.config)?;
        let n = batch.response_tokens();
        if n == 0 {
            continue;
        }
        let mut t = Tape::new();
        let bl = batch_loss(model, &mut t, &batch, &refs, LossWeights::default())?;
        total += bl.text * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(HoiError::Domain("no response tokens to score".into()));
    }
    Ok((total / count as f64).exp())
}

/// Writes the report CSV and its JSON sidecar.
pub fn write_report(report: &RunReport, csv_path: &Path, sidecar_path: &Path, cfg: &EvalConfig, extra: serde_json::Value) -> Result<()> {
    report.write_csv(csv_path)?;
    let config = serde_json::json!({ "eval": cfg, "run": extra });
    write_sidecar(sidecar_path, &ReportSidecar::new(&report.task, cfg.seed, cfg.n_points, cfg.rouge, config))
}
