use std::collections::BTreeMap;
use std::path::Path;

use hoi_core::dataset::Task;
use hoi_core::{HoiError, Result};
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collate::collate;
use crate::loss::{batch_loss, LossWeights};
use crate::model::Model;
use crate::sample::{ModelSample, PRETRAIN_IMAGE, PRETRAIN_TEXT};
use crate::tape::{Gradients, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain,
    Instruct,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub tasks: Vec<Task>,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Overrides `steps` with passes over the enabled data.
    pub epochs: Option<f64>,
    pub seed: u64,
    pub offset_regression: bool,
    pub loss_weights: LossWeights,
    pub clip_norm: f64,
    /// Relative sampling weight per task; uniform over enabled tasks when empty.
    pub task_mix: BTreeMap<Task, f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage: Stage::Instruct,
            tasks: Task::ALL.to_vec(),
            lr: 2e-4,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 16,
            steps: 1000,
            epochs: None,
            seed: 0,
            offset_regression: true,
            loss_weights: LossWeights::default(),
            clip_norm: 1.0,
            task_mix: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(HoiError::Config("learning rate must be positive".into()));
        }
        if self.stage == Stage::Instruct && self.tasks.is_empty() {
            return Err(HoiError::Config("instruction tuning needs at least one task".into()));
        }
        if self.batch_size == 0 {
            return Err(HoiError::Config("batch size must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.clip_norm > 0.0) {
            return Err(HoiError::Config("weight decay must be non-negative and clip norm positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(HoiError::Config("invalid optimizer constants".into()));
        }
        if let Some(e) = self.epochs {
            if !(e.is_finite() && e >= 0.0) {
                return Err(HoiError::Config("epochs must be non-negative".into()));
            }
        }
        for (task, w) in &self.task_mix {
            if !self.tasks.contains(task) || !(w.is_finite() && *w > 0.0) {
                return Err(HoiError::Config(format!("bad mixing weight for {task}")));
            }
        }
        Ok(())
    }

    /// Groups this stage trains on.
    fn groups(&self) -> Vec<String> {
        match self.stage {
            Stage::Pretrain => vec![PRETRAIN_IMAGE.into(), PRETRAIN_TEXT.into()],
            Stage::Instruct => self.tasks.iter().map(|t| t.name().to_string()).collect(),
        }
    }

    fn weight(&self, group: &str) -> f64 {
        group
            .parse::<Task>()
            .ok()
            .and_then(|t| self.task_mix.get(&t).copied())
            .unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

/// Per-group position in its shuffled order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    pub cursors: BTreeMap<String, (u64, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub step: usize,
    pub adam: AdamState,
    pub sampler: SamplerState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: f64,
    pub loss: f64,
    pub text_loss: f64,
    pub pose_loss: f64,
    pub grad_norm: f64,
    pub tokens: usize,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub log: Vec<LogRow>,
    pub state: TrainState,
    pub skipped: usize,
}

fn shuffled(len: usize, seed: u64, group: &str, epoch: u64) -> Vec<usize> {
    let salt = group.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Draws each batch element's group by weight, then the group's next sample.
fn next_batch(
    cfg: &TrainConfig,
    step: usize,
    groups: &[(String, Vec<usize>)],
    sampler: &mut SamplerState,
) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5851_F42D_4C95_7F2D).wrapping_mul(step as u64 + 1));
    let weights: Vec<f64> = groups.iter().map(|(g, _)| cfg.weight(g)).collect();
    let total: f64 = weights.iter().sum();
    (0..cfg.batch_size)
        .map(|_| {
            let mut r = rng.random::<f64>() * total;
            let mut gi = groups.len() - 1;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    gi = i;
                    break;
                }
                r -= w;
            }
            let (name, members) = &groups[gi];
            let cursor = sampler.cursors.entry(name.clone()).or_insert((0, 0));
            if cursor.1 >= members.len() {
                *cursor = (cursor.0 + 1, 0);
            }
            let order = shuffled(members.len(), cfg.seed, name, cursor.0);
            let pick = members[order[cursor.1]];
            cursor.1 += 1;
            pick
        })
        .collect()
}

pub fn global_norm(grads: &Gradients) -> f64 {
    grads.values().map(Tensor::sq_norm).sum::<f64>().sqrt()
}

fn adamw_step(model: &mut Model, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig, clip: f64) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (name, g) in grads {
        let p = model.params.get_mut(name);
        let m = state.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.rows, g.cols));
        let v = state.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.rows, g.cols));
        for i in 0..g.data.len() {
            let gi = g.data[i] * clip;
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            let update = (m.data[i] / bc1) / ((v.data[i] / bc2).sqrt() + cfg.eps);
            let w = &mut p.value.data[i];
            *w -= cfg.lr * (update + cfg.weight_decay * *w);
        }
    }
}

fn write_nan_dump(path: &Path, model: &Model, step: usize, ids: &[&str], text: f64, pose: f64) -> Result<()> {
    let norms: BTreeMap<&str, f64> = model.params.iter().map(|p| (p.name.as_str(), p.value.sq_norm().sqrt())).collect();
    let dump = serde_json::json!({
        "step": step,
        "text_loss": text.to_string(),
        "pose_loss": pose.to_string(),
        "sample_ids": ids,
        "param_norms": norms,
    });
    std::fs::write(path, serde_json::to_string_pretty(&dump)?)?;
    Ok(())
}

pub struct TrainOptions<'a> {
    /// CSV destination for per-step rows.
    pub log_path: Option<&'a Path>,
    /// Where a diagnostic dump is written if the loss becomes non-finite.
    pub dump_path: Option<&'a Path>,
    pub resume: Option<TrainState>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self {
            log_path: None,
            dump_path: None,
            resume: None,
        }
    }
}

/// Number of optimizer steps the configuration asks for.
pub fn planned_steps(cfg: &TrainConfig, data: &[ModelSample]) -> usize {
    match cfg.epochs {
        None => cfg.steps,
        Some(e) => {
            let groups = cfg.groups();
            let n = data.iter().filter(|s| groups.contains(&s.kind)).count();
            (e * n as f64 / cfg.batch_size as f64).ceil() as usize
        }
    }
}

/// Runs one training stage over the samples whose kind the stage enables.
pub fn train_stage(model: &mut Model, data: &[ModelSample], cfg: &TrainConfig, opts: TrainOptions) -> Result<TrainReport> {
    cfg.validate()?;
    model.config.offset_regression = cfg.offset_regression;
    let groups: Vec<(String, Vec<usize>)> = cfg
        .groups()
        .into_iter()
        .map(|g| {
            let members: Vec<usize> = data.iter().enumerate().filter(|(_, s)| s.kind == g).map(|(i, _)| i).collect();
            (g, members)
        })
        .filter(|(g, members)| {
            if members.is_empty() {
                log::warn!("{g} is enabled but has no samples");
            }
            !members.is_empty()
        })
        .collect();
    let total_samples: usize = groups.iter().map(|(_, m)| m.len()).sum();
    if total_samples == 0 {
        return Err(HoiError::Validation(format!("no training samples for the {:?} stage", cfg.stage)));
    }
    let steps = planned_steps(cfg, data);
    let mut state = opts.resume.unwrap_or_default();
    let mut writer = match opts.log_path {
        Some(p) => Some(csv::Writer::from_path(p)?),
        None => None,
    };
    let mut report = TrainReport::default();
    while state.step < steps {
        let picks = next_batch(cfg, state.step, &groups, &mut state.sampler);
        let samples: Vec<&ModelSample> = picks.iter().map(|&i| &data[i]).collect();
        let batch = collate(&samples, &model.vocab, &model.config)?;
        report.skipped += batch.skipped;
        state.step += 1;
        if batch.items.is_empty() {
            continue;
        }
        let mut tape = Tape::new();
        let bl = batch_loss(model, &mut tape, &batch, &samples, cfg.loss_weights)?;
        let loss = tape.value(bl.total).item();
        if !loss.is_finite() {
            let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
            if let Some(p) = opts.dump_path {
                write_nan_dump(p, model, state.step, &ids, bl.text, bl.pose)?;
            }
            return Err(HoiError::Numeric(format!(
                "non-finite loss at step {} (text {}, pose {})",
                state.step, bl.text, bl.pose
            )));
        }
        let grads = tape.backward(bl.total);
        let norm = global_norm(&grads);
        if !norm.is_finite() {
            return Err(HoiError::Numeric(format!("non-finite gradient norm at step {}", state.step)));
        }
        let clip = if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 };
        adamw_step(model, &grads, &mut state.adam, cfg, clip);
        let row = LogRow {
            step: state.step,
            epoch: (state.step * cfg.batch_size) as f64 / total_samples as f64,
            loss,
            text_loss: bl.text,
            pose_loss: bl.pose,
            grad_norm: norm,
            tokens: batch.len(),
        };
        if let Some(w) = writer.as_mut() {
            w.serialize(&row)?;
        }
        if state.step % 50 == 0 || state.step == steps {
            log::info!("step {}/{} loss {:.4} text {:.4} pose {:.4}", state.step, steps, loss, bl.text, bl.pose);
        }
        report.log.push(row);
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    report.state = state;
    Ok(report)
}
