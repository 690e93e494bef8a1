use std::path::PathBuf;

use hoi_core::dataset::{generate_corpus, split_dataset, validate_record, write_records, CorpusConfig, Describer, GrammarConfig};
use hoi_core::kinematics::{render_silhouette, AssetLibrary, CameraSpec, SkeletonTemplate};
use serde::{Deserialize, Serialize};

use super::{require, require_input, Run};
use crate::args::GenDataArgs;
use crate::failure::{CliResult, Failure};
use crate::layered::Layered;
use crate::outputs::Outputs;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub out: Option<PathBuf>,
    pub corpus: CorpusConfig,
    pub train_fraction: f64,
    pub split_seed: Option<u64>,
    pub images: bool,
    pub grammar: Option<PathBuf>,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        Self {
            out: None,
            corpus: CorpusConfig::default(),
            train_fraction: 0.7,
            split_seed: None,
            images: false,
            grammar: None,
        }
    }
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

pub fn run(args: GenDataArgs) -> CliResult<()> {
    let mut l = Layered::load(args.config.as_deref())?;
    l.set("out", args.out)
        .set("corpus.pairs", args.pairs)
        .set("corpus.pairs_per_script", args.pairs_per_script)
        .set("corpus.max_stride", args.max_stride)
        .set("corpus.max_step", args.max_step)
        .set("corpus.seed", args.seed)
        .set("train_fraction", args.train_fraction)
        .set("split_seed", args.split_seed)
        .set("images", args.images.then_some(true))
        .set("grammar", args.grammar);
    let cfg: GenDataConfig = l.resolve()?;
    let out = require(&cfg.out, "out")?.clone();

    let mut inputs = Vec::new();
    let grammar = match &cfg.grammar {
        Some(p) => {
            require_input(p)?;
            inputs.push(p.as_path());
            GrammarConfig::load(p)?
        }
        None => GrammarConfig::default(),
    };
    let run = Run::start("gen-data", &inputs);
    let mut outputs = Outputs::new(&inputs);
    let out = outputs.claim(&out)?;

    let (skel, assets) = (SkeletonTemplate::default(), AssetLibrary::standard());
    let describer = Describer::new(skel.clone(), assets.clone(), grammar);
    let records = generate_corpus(&cfg.corpus, &skel, &assets, &describer)?;
    let (mut records, summary) = split_dataset(records, cfg.train_fraction, cfg.split_seed.unwrap_or(cfg.corpus.seed))?;
    log::info!("{} records: {} train, {} test", records.len(), summary.train, summary.test);

    if cfg.images {
        let base = out.parent().map(|p| p.to_path_buf()).unwrap_or_default();
        let camera = CameraSpec::default();
        for r in &mut records {
            for (which, state) in [("current", r.current.clone()), ("next", r.next.clone())] {
                let rel = format!("images/{}_{which}.pbm", file_stem(&r.id));
                let path = outputs.claim(&base.join(&rel))?;
                std::fs::write(&path, render_silhouette(&state, &skel, &assets, &camera)?.to_pbm())?;
                match which {
                    "current" => r.current_image = Some(rel),
                    _ => r.next_image = Some(rel),
                }
            }
        }
    }

    for r in &records {
        let report = validate_record(r);
        if !report.is_ok() {
            let first = &report.violations[0];
            return Err(Failure::data(format!("record {} failed validation: {}: {}", r.id, first.field, first.message)));
        }
    }
    write_records(&out, &records)?;
    run.finish(&mut outputs, &cfg, Some(cfg.corpus.seed), &out)?;
    outputs.commit();
    Ok(())
}
