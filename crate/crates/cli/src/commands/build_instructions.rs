use std::collections::BTreeMap;
use std::path::PathBuf;

use hoi_core::dataset::{read_records, to_instruction, write_jsonl, Split, Task};
use serde::{Deserialize, Serialize};

use super::{instruction_file, parse_tasks, require, require_input, split_name, Run};
use crate::args::BuildArgs;
use crate::failure::{CliResult, Failure};
use crate::layered::Layered;
use crate::outputs::Outputs;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub tasks: Vec<Task>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            data: None,
            out_dir: None,
            tasks: Task::ALL.to_vec(),
        }
    }
}

pub fn run(args: BuildArgs) -> CliResult<()> {
    let mut l = Layered::load(args.config.as_deref())?;
    let tasks = args.tasks.as_deref().map(parse_tasks).transpose()?;
    l.set("data", args.data).set("out_dir", args.out_dir).set("tasks", tasks);
    let cfg: BuildConfig = l.resolve()?;
    let data = require(&cfg.data, "data")?;
    let out_dir = require(&cfg.out_dir, "out_dir")?;
    if cfg.tasks.is_empty() {
        return Err(Failure::usage("no tasks selected"));
    }
    require_input(data)?;
    let run = Run::start("build-instructions", &[data]);
    let mut outputs = Outputs::new(&[data]);
    outputs.claim_dir(out_dir)?;

    let records = read_records(data)?;
    let mut by_split: BTreeMap<Split, Vec<_>> = BTreeMap::new();
    for r in &records {
        let split = r.split.ok_or_else(|| Failure::data(format!("record {} has no split; run the splitter first", r.id)))?;
        by_split.entry(split).or_default().push(r);
    }
    for &task in &cfg.tasks {
        for (&split, recs) in &by_split {
            let samples: Vec<_> = recs.iter().map(|r| to_instruction(r, task)).collect();
            for s in &samples {
                s.validate()?;
            }
            let path = outputs.claim(&instruction_file(out_dir, task, split_name(split)))?;
            write_jsonl(&path, &samples)?;
            log::info!("{}: {} samples", path.display(), samples.len());
        }
    }
    run.finish(&mut outputs, &cfg, None, out_dir)?;
    outputs.commit();
    Ok(())
}
