use std::path::{Path, PathBuf};

use hoi_model::checkpoint;
use hoi_model::infer::generate_response;
use hoi_model::{ModelSample, SampleContext};
use serde::{Deserialize, Serialize};

use super::{read_instructions, require, require_input, Run};
use crate::args::InferArgs;
use crate::failure::{CliResult, Failure};
use crate::layered::Layered;
use crate::outputs::Outputs;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub checkpoint: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    pub index: usize,
    pub id: Option<String>,
    pub max_new_tokens: usize,
    pub image_root: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            instructions: None,
            index: 0,
            id: None,
            max_new_tokens: 256,
            image_root: None,
            out: None,
        }
    }
}

pub fn run(args: InferArgs) -> CliResult<()> {
    let mut l = Layered::load(args.config.as_deref())?;
    l.set("checkpoint", args.checkpoint)
        .set("instructions", args.instructions)
        .set("index", args.index)
        .set("id", args.id)
        .set("max_new_tokens", args.max_new_tokens)
        .set("image_root", args.image_root)
        .set("out", args.out);
    let cfg: InferConfig = l.resolve()?;
    let ckpt = require(&cfg.checkpoint, "checkpoint")?;
    let file = require(&cfg.instructions, "instructions")?;
    require_input(ckpt)?;
    let samples = read_instructions(file)?;
    let sample = match &cfg.id {
        Some(id) => samples
            .iter()
            .find(|s| &s.record_id == id)
            .ok_or_else(|| Failure::usage(format!("no sample with id {id} in {}", file.display())))?,
        None => samples
            .get(cfg.index)
            .ok_or_else(|| Failure::usage(format!("index {} is past the {} samples in {}", cfg.index, samples.len(), file.display())))?,
    };
    let (model, _) = checkpoint::load(ckpt)?;
    let ctx = SampleContext {
        image_root: cfg.image_root.clone(),
        ..SampleContext::standard(model.config.point_count)
    };
    let ms = ModelSample::from_instruction(sample, &ctx)?;
    let response = generate_response(&model, &ms, cfg.max_new_tokens)?;
    let json = serde_json::json!({
        "id": sample.record_id,
        "task": sample.task,
        "response": response,
    });
    let text = serde_json::to_string_pretty(&json)?;
    println!("{text}");
    if let Some(out) = &cfg.out {
        let inputs: [&Path; 2] = [ckpt, file];
        let run = Run::start("infer", &inputs);
        let mut outputs = Outputs::new(&inputs);
        let out = outputs.claim(out)?;
        std::fs::write(&out, text + "\n")?;
        run.finish(&mut outputs, &cfg, None, &out)?;
        outputs.commit();
    }
    Ok(())
}
