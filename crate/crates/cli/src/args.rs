use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fhoi", version, about = "Synthetic human-object interaction data, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, annotate, validate and split a synthetic corpus.
    GenData(GenDataArgs),
    /// Write per-task, per-split instruction files from a corpus.
    BuildInstructions(BuildArgs),
    /// Run a pretraining or instruction-tuning stage.
    Train(TrainArgs),
    /// Score a checkpoint (or the no-motion baseline) on one task.
    Eval(EvalArgs),
    /// Print one sample's response.
    Infer(InferArgs),
    /// Step a state forward through a list of transition descriptions.
    Rollout(RolloutArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset JSONL to write (`out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `corpus.pairs`
    #[arg(long)]
    pub pairs: Option<usize>,
    /// `corpus.pairs_per_script`
    #[arg(long)]
    pub pairs_per_script: Option<usize>,
    /// `corpus.max_stride`
    #[arg(long)]
    pub max_stride: Option<usize>,
    /// `corpus.max_step`
    #[arg(long)]
    pub max_step: Option<f64>,
    /// `corpus.seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// `train_fraction`
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// `split_seed`; defaults to the corpus seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// `images`: also write silhouettes as PBM files beside the dataset.
    #[arg(long)]
    pub images: bool,
    /// `grammar`: JSON grammar tables replacing the built-in ones.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset JSONL (`data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for `<task>_<split>.jsonl` files (`out_dir`).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// `tasks`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint to write (`out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset JSONL for the pretraining stage (`data`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Instruction directory for the instruction stage (`instructions`).
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    /// Start from this checkpoint's weights (`init`).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Continue this checkpoint's run, optimizer state included (`resume`).
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Base directory for relative image paths (`image_root`).
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Loss CSV path (`log`); defaults to `<out>.loss.csv`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// `merge_lora`: fold adapters into the base weights before saving.
    #[arg(long)]
    pub merge_lora: bool,

    /// `model.d_model`
    #[arg(long)]
    pub d_model: Option<usize>,
    /// `model.layers`
    #[arg(long)]
    pub layers: Option<usize>,
    /// `model.heads`
    #[arg(long)]
    pub heads: Option<usize>,
    /// `model.ff_width`
    #[arg(long)]
    pub ff_width: Option<usize>,
    /// `model.max_len`
    #[arg(long)]
    pub max_len: Option<usize>,
    /// `model.pose_tokens`
    #[arg(long)]
    pub pose_tokens: Option<usize>,
    /// `model.feature_width`
    #[arg(long)]
    pub feature_width: Option<usize>,
    /// `model.point_count`
    #[arg(long)]
    pub point_count: Option<usize>,
    /// `model.lora_rank`; 0 disables adapters.
    #[arg(long)]
    pub lora_rank: Option<usize>,
    /// Enable adapters at the default rank unless `--lora-rank` says otherwise.
    #[arg(long)]
    pub lora: bool,
    /// `model.lora_alpha`
    #[arg(long)]
    pub lora_alpha: Option<f64>,
    /// `model.init_seed`
    #[arg(long)]
    pub init_seed: Option<u64>,

    /// `train.stage`: pretrain or instruct.
    #[arg(long)]
    pub stage: Option<String>,
    /// `train.tasks`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    /// `train.lr`
    #[arg(long)]
    pub lr: Option<f64>,
    /// `train.weight_decay`
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// `train.batch_size`
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `train.steps`
    #[arg(long)]
    pub steps: Option<usize>,
    /// `train.epochs`; overrides the step count.
    #[arg(long)]
    pub epochs: Option<f64>,
    /// `train.seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// `train.offset_regression`
    #[arg(long)]
    pub offset_regression: Option<bool>,
    /// `train.clip_norm`
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// `train.loss_weights.text`
    #[arg(long)]
    pub text_loss_weight: Option<f64>,
    /// `train.loss_weights.pose`
    #[arg(long)]
    pub pose_loss_weight: Option<f64>,
    /// `train.task_mix` as `task=weight` pairs, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub task_mix: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `checkpoint`; not needed with `--baseline`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Instruction directory (`instructions`).
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    /// `split` to read (default test).
    #[arg(long)]
    pub split: Option<String>,
    /// `task`
    #[arg(long)]
    pub task: Option<String>,
    /// Report CSV (`out`); the sidecar goes to the same stem with `.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-sample predictions as JSONL (`predictions`).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Directory for per-sample point clouds (`points_dir`).
    #[arg(long)]
    pub points_dir: Option<PathBuf>,
    /// `image_root`
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// `baseline`: score the reference state as the prediction.
    #[arg(long)]
    pub baseline: bool,
    /// `limit`: evaluate the first N samples only.
    #[arg(long)]
    pub limit: Option<usize>,
    /// `eval.method`
    #[arg(long)]
    pub method: Option<String>,
    /// `eval.max_new_tokens`
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    /// `eval.n_points`
    #[arg(long)]
    pub n_points: Option<usize>,
    /// `eval.seed`: point sampling seed.
    #[arg(long)]
    pub eval_seed: Option<u64>,
    /// `eval.rouge`: recall or f1.
    #[arg(long)]
    pub rouge: Option<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `checkpoint`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Instruction JSONL file (`instructions`).
    #[arg(long)]
    pub instructions: Option<PathBuf>,
    /// `index` of the sample within the file.
    #[arg(long)]
    pub index: Option<usize>,
    /// `id`: pick the sample with this record id instead.
    #[arg(long)]
    pub id: Option<String>,
    /// `max_new_tokens`
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    /// `image_root`
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Also write the response JSON here (`out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `checkpoint`
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Initial state as a JSON object (`initial`).
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Dataset JSONL to take the initial state from (`data`), with `--record`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `record` id whose current state starts the rollout.
    #[arg(long)]
    pub record: Option<String>,
    /// Text file with one transition description per line (`transitions`).
    #[arg(long)]
    pub transitions: Option<PathBuf>,
    /// State sequence JSONL (`out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `max_new_tokens`
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
}
