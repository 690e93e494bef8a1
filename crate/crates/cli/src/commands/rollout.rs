use std::path::{Path, PathBuf};

use hoi_core::dataset::{generation_request, read_records, write_jsonl};
use hoi_core::HoiState;
use hoi_model::checkpoint;
use hoi_model::infer::Decoder;
use hoi_model::{ModelSample, SampleContext};
use serde::{Deserialize, Serialize};

use super::{require, require_input, Run};
use crate::args::RolloutArgs;
use crate::failure::{CliResult, Failure};
use crate::layered::Layered;
use crate::outputs::Outputs;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub checkpoint: Option<PathBuf>,
    pub initial: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub record: Option<String>,
    pub transitions: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub max_new_tokens: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            checkpoint: None,
            initial: None,
            data: None,
            record: None,
            transitions: None,
            out: None,
            max_new_tokens: 16,
        }
    }
}

/// One line of the rollout output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutStep {
    pub step: usize,
    /// Description that produced this state; absent for the initial state.
    pub transition: Option<String>,
    pub malformed: bool,
    pub state: HoiState,
}

fn initial_state(cfg: &RolloutConfig) -> CliResult<(HoiState, PathBuf)> {
    match (&cfg.initial, &cfg.data) {
        (Some(p), None) => {
            require_input(p)?;
            let state: HoiState = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            state.validate()?;
            Ok((state, p.clone()))
        }
        (None, Some(p)) => {
            require_input(p)?;
            let id = require(&cfg.record, "record")?;
            let rec = read_records(p)?
                .into_iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Failure::usage(format!("no record {id} in {}", p.display())))?;
            Ok((rec.current, p.clone()))
        }
        _ => Err(Failure::usage("give exactly one of `initial` or `data` with `record`")),
    }
}

pub fn run(args: RolloutArgs) -> CliResult<()> {
    let mut l = Layered::load(args.config.as_deref())?;
    l.set("checkpoint", args.checkpoint)
        .set("initial", args.initial)
        .set("data", args.data)
        .set("record", args.record)
        .set("transitions", args.transitions)
        .set("out", args.out)
        .set("max_new_tokens", args.max_new_tokens);
    let cfg: RolloutConfig = l.resolve()?;
    let ckpt = require(&cfg.checkpoint, "checkpoint")?;
    let tfile = require(&cfg.transitions, "transitions")?;
    let out = require(&cfg.out, "out")?;
    require_input(ckpt)?;
    require_input(tfile)?;
    let (start, start_file) = initial_state(&cfg)?;
    let transitions: Vec<String> = std::fs::read_to_string(tfile)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();

    let inputs: [&Path; 3] = [ckpt, tfile, &start_file];
    let run = Run::start("rollout", &inputs);
    let mut outputs = Outputs::new(&inputs);
    let out = outputs.claim(out)?;
    let (model, _) = checkpoint::load(ckpt)?;
    let ctx = SampleContext::standard(model.config.point_count);
    let decoder = Decoder::new(&model);
    let mut state = start.canonicalized()?;
    let mut steps = vec![RolloutStep {
        step: 0,
        transition: None,
        malformed: false,
        state: state.clone(),
    }];
    for (i, t) in transitions.iter().enumerate() {
        let request = generation_request(&format!("rollout-{}", i + 1), &state, t);
        let sample = ModelSample::from_instruction(&request, &ctx)?;
        let response = decoder.generate(&sample, cfg.max_new_tokens)?;
        if response.malformed {
            log::warn!("step {}: malformed response {:?}; state kept", i + 1, response.text);
        }
        state = response
            .state
            .ok_or_else(|| Failure::data("generation produced no state"))?;
        steps.push(RolloutStep {
            step: i + 1,
            transition: Some(t.clone()),
            malformed: response.malformed,
            state: state.clone(),
        });
    }
    write_jsonl(&out, &steps)?;
    run.finish(&mut outputs, &cfg, None, &out)?;
    outputs.commit();
    Ok(())
}
