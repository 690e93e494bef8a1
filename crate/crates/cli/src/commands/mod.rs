use std::path::{Path, PathBuf};

use hoi_core::dataset::{read_jsonl, InstructionSample, Split, Task};
use serde::Serialize;

use crate::failure::{CliResult, Failure};
use crate::manifest::{combined_hash, deterministic_mode, digest, digest_tree, manifest_path, now, RunManifest};
use crate::outputs::Outputs;

pub mod build_instructions;
pub mod eval;
pub mod gen_data;
pub mod infer;
pub mod rollout;
pub mod train;

pub fn require<'a, T>(value: &'a Option<T>, key: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| Failure::usage(format!("missing required setting `{key}`")))
}

pub fn require_input(path: &Path) -> CliResult<()> {
    if !path.exists() {
        return Err(Failure::usage(format!("input not found: {}", path.display())));
    }
    Ok(())
}

pub fn parse_tasks(names: &[String]) -> CliResult<Vec<Task>> {
    names
        .iter()
        .map(|n| n.trim().parse::<Task>().map_err(|e| Failure::usage(e.to_string())))
        .collect()
}

pub fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

pub fn instruction_file(dir: &Path, task: Task, split: &str) -> PathBuf {
    dir.join(format!("{}_{split}.jsonl", task.name()))
}

pub fn read_instructions(path: &Path) -> CliResult<Vec<InstructionSample>> {
    require_input(path)?;
    let samples: Vec<InstructionSample> = read_jsonl(path)?;
    for (i, s) in samples.iter().enumerate() {
        s.validate()
            .map_err(|e| Failure::data(format!("{} line {}: {e}", path.display(), i + 1)))?;
    }
    Ok(samples)
}

/// Timing and input bookkeeping for one command invocation.
pub struct Run {
    command: &'static str,
    started: String,
    inputs: Vec<PathBuf>,
}

impl Run {
    pub fn start(command: &'static str, inputs: &[&Path]) -> Self {
        Self {
            command,
            started: now(),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
        }
    }

    /// Writes the manifest for everything claimed so far, next to `primary`.
    pub fn finish<C: Serialize>(self, outputs: &mut Outputs, config: &C, seed: Option<u64>, primary: &Path) -> CliResult<()> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.extend(digest_tree(p)?);
        }
        let produced = outputs.files().iter().filter(|f| f.exists()).map(|f| digest(f)).collect::<CliResult<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(config)?,
            seed,
            deterministic: deterministic_mode(),
            input_hash: combined_hash(&inputs),
            inputs,
            outputs: produced,
            started_at: self.started,
            finished_at: now(),
        };
        let path = outputs.claim(&manifest_path(primary))?;
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}
