use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hoi_core::dataset::{read_records, Describer, Split, Task};
use hoi_model::checkpoint;
use hoi_model::config::DEFAULT_LORA_RANK;
use hoi_model::sample::pretrain_samples;
use hoi_model::train::{planned_steps, train_stage, Stage, TrainConfig, TrainOptions};
use hoi_model::{Model, ModelConfig, ModelSample, SampleContext, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{instruction_file, parse_tasks, read_instructions, require, require_input, Run};
use crate::args::TrainArgs;
use crate::failure::{CliResult, Failure};
use crate::layered::Layered;
use crate::outputs::Outputs;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommandConfig {
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub log: Option<PathBuf>,
    pub merge_lora: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(suffix);
    path.with_file_name(name)
}

fn parse_mix(pairs: &[String]) -> CliResult<BTreeMap<Task, f64>> {
    pairs
        .iter()
        .map(|p| {
            let (task, w) = p
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("task mix entry {p:?} is not task=weight")))?;
            let task = task.trim().parse::<Task>().map_err(|e| Failure::usage(e.to_string()))?;
            let w = w.trim().parse::<f64>().map_err(|e| Failure::usage(format!("task mix weight {w:?}: {e}")))?;
            Ok((task, w))
        })
        .collect()
}

fn layered(args: TrainArgs) -> CliResult<TrainCommandConfig> {
    let mut l = Layered::load(args.config.as_deref())?;
    let tasks = args.tasks.as_deref().map(parse_tasks).transpose()?;
    let mix = args.task_mix.as_deref().map(parse_mix).transpose()?;
    let lora_rank = args.lora_rank.or(args.lora.then_some(DEFAULT_LORA_RANK));
    l.set("out", args.out)
        .set("data", args.data)
        .set("instructions", args.instructions)
        .set("init", args.init)
        .set("resume", args.resume)
        .set("image_root", args.image_root)
        .set("log", args.log)
        .set("merge_lora", args.merge_lora.then_some(true))
        .set("model.d_model", args.d_model)
        .set("model.layers", args.layers)
        .set("model.heads", args.heads)
        .set("model.ff_width", args.ff_width)
        .set("model.max_len", args.max_len)
        .set("model.pose_tokens", args.pose_tokens)
        .set("model.feature_width", args.feature_width)
        .set("model.point_count", args.point_count)
        .set("model.lora_rank", lora_rank)
        .set("model.lora_alpha", args.lora_alpha)
        .set("model.init_seed", args.init_seed)
        .set("train.stage", args.stage)
        .set("train.tasks", tasks)
        .set("train.lr", args.lr)
        .set("train.weight_decay", args.weight_decay)
        .set("train.batch_size", args.batch_size)
        .set("train.steps", args.steps)
        .set("train.epochs", args.epochs)
        .set("train.seed", args.seed)
        .set("train.offset_regression", args.offset_regression)
        .set("train.clip_norm", args.clip_norm)
        .set("train.loss_weights.text", args.text_loss_weight)
        .set("train.loss_weights.pose", args.pose_loss_weight)
        .set("train.task_mix", mix);
    let mut cfg: TrainCommandConfig = l.resolve()?;
    // The training flag decides the regression mode; the model section follows it.
    cfg.model.offset_regression = cfg.train.offset_regression;
    Ok(cfg)
}

fn load_samples(cfg: &TrainCommandConfig, ctx: &SampleContext) -> CliResult<(Vec<ModelSample>, Vec<PathBuf>)> {
    match cfg.train.stage {
        Stage::Instruct => {
            let dir = require(&cfg.instructions, "instructions")?;
            let mut samples = Vec::new();
            let mut files = Vec::new();
            for &task in &cfg.train.tasks {
                let path = instruction_file(dir, task, "train");
                for s in read_instructions(&path)? {
                    samples.push(ModelSample::from_instruction(&s, ctx)?);
                }
                files.push(path);
            }
            Ok((samples, files))
        }
        Stage::Pretrain => {
            let data = require(&cfg.data, "data")?;
            require_input(data)?;
            let mut samples = Vec::new();
            for r in read_records(data)?.iter().filter(|r| r.split == Some(Split::Train)) {
                samples.extend(pretrain_samples(r, ctx)?);
            }
            Ok((samples, vec![data.clone()]))
        }
    }
}

fn sample_context(cfg: &TrainCommandConfig, point_count: usize) -> SampleContext {
    SampleContext {
        image_root: cfg.image_root.clone(),
        ..SampleContext::standard(point_count)
    }
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let cfg = layered(args)?;
    cfg.train.validate()?;
    cfg.model.validate()?;
    let out = require(&cfg.out, "out")?.clone();
    if cfg.init.is_some() && cfg.resume.is_some() {
        return Err(Failure::usage("`init` and `resume` are mutually exclusive"));
    }

    let mut state = None;
    let loaded = match (&cfg.resume, &cfg.init) {
        (Some(p), _) => {
            require_input(p)?;
            let (m, s) = checkpoint::load(p)?;
            state = Some(s.ok_or_else(|| Failure::data(format!("{} holds no optimizer state to resume", p.display())))?);
            Some(m)
        }
        (None, Some(p)) => {
            require_input(p)?;
            let (mut m, _) = checkpoint::load(p)?;
            if cfg.model.lora_rank > 0 && m.config.lora_rank == 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.model.init_seed);
                m.attach_lora(cfg.model.lora_rank, cfg.model.lora_alpha, &mut rng)?;
            }
            Some(m)
        }
        (None, None) => None,
    };
    let point_count = loaded.as_ref().map_or(cfg.model.point_count, |m| m.config.point_count);
    let ctx = sample_context(&cfg, point_count);
    let (samples, mut inputs) = load_samples(&cfg, &ctx)?;
    if samples.is_empty() {
        return Err(Failure::data("no training samples found"));
    }
    inputs.extend(cfg.init.iter().chain(&cfg.resume).cloned());
    let mut model = match loaded {
        Some(m) => m,
        None => {
            let words = Describer::standard().words();
            let texts = samples.iter().flat_map(|s| [s.prompt.as_str(), s.target_text.as_str()]);
            let vocab = Vocabulary::build(words.iter().map(|w| w.as_str()).chain(texts));
            Model::new(cfg.model.clone(), vocab)?
        }
    };
    log::info!(
        "{} samples, {} trainable parameters, {} steps",
        samples.len(),
        model.params.trainable_count(),
        planned_steps(&cfg.train, &samples)
    );

    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let run = Run::start("train", &input_refs);
    let mut outputs = Outputs::new(&input_refs);
    let out = outputs.claim(&out)?;
    let log_path = outputs.claim(&cfg.log.clone().unwrap_or_else(|| with_suffix(&out, ".loss.csv")))?;
    // The diagnostic dump must survive a failed run, so it is not claimed.
    let dump = with_suffix(&out, ".nan.json");
    let opts = TrainOptions {
        log_path: Some(&log_path),
        dump_path: Some(&dump),
        resume: state,
    };
    let report = train_stage(&mut model, &samples, &cfg.train, opts)?;
    if report.skipped > 0 {
        log::warn!("{} over-length samples were skipped", report.skipped);
    }
    if let Some(last) = report.log.last() {
        log::info!("final step {}: loss {:.5}", last.step, last.loss);
    }
    if cfg.merge_lora {
        model.merge_lora();
        checkpoint::save(&out, &model, None)?;
    } else {
        checkpoint::save(&out, &model, Some(&report.state))?;
    }
    run.finish(&mut outputs, &cfg, Some(cfg.train.seed), &out)?;
    outputs.commit();
    Ok(())
}
