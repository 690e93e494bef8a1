use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Map;

use super::annotator::ExternalAnnotator;
use super::motion::{script_motion, MotionConfig, MotionFamily};
use super::record::{validate_record, HoiPairRecord, SourceTag, SCHEMA_VERSION};
use crate::error::{HoiError, Result};
use crate::kinematics::{AssetLibrary, SkeletonTemplate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub pairs: usize,
    pub pairs_per_script: usize,
    /// Largest frame gap between the two states of a pair.
    pub max_stride: usize,
    pub max_step: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            pairs: 2000,
            pairs_per_script: 10,
            max_stride: 4,
            max_step: 0.2,
            seed: 0,
        }
    }
}

/// Seed of script `index`, independent of generation order.
pub fn script_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Family and object of script `index`: families cycle fastest, then objects.
pub fn script_plan(index: usize) -> (MotionFamily, &'static str) {
    let family = MotionFamily::ALL[index % MotionFamily::ALL.len()];
    let objects = family.compatible_objects();
    (family, objects[(index / MotionFamily::ALL.len()) % objects.len()])
}

/// Scripts motions, samples state pairs from each and annotates them.
/// Records that fail validation are dropped with a warning.
pub fn generate_corpus(
    cfg: &CorpusConfig,
    skel: &SkeletonTemplate,
    assets: &AssetLibrary,
    annotator: &dyn ExternalAnnotator,
) -> Result<Vec<HoiPairRecord>> {
    if cfg.pairs == 0 || cfg.pairs_per_script == 0 || cfg.max_stride == 0 {
        return Err(HoiError::Config("pairs, pairs_per_script and max_stride must be positive".into()));
    }
    let mut out = Vec::with_capacity(cfg.pairs);
    let mut index = 0usize;
    while out.len() < cfg.pairs {
        let (family, object) = script_plan(index);
        let seed = script_seed(cfg.seed, index);
        let mut motion = MotionConfig::new(family, object);
        motion.max_step = cfg.max_step;
        let clip = script_motion(&motion, seed, skel, assets)?;
        let noun = assets.get(object)?.noun.clone();
        let n = clip.states.len();
        let mut candidates: Vec<(usize, usize)> = (1..=cfg.max_stride.min(n - 1))
            .flat_map(|stride| (0..n - stride).map(move |start| (start, stride)))
            .collect();
        candidates.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.rotate_left(17)));
        let take = cfg.pairs_per_script.min(cfg.pairs - out.len());
        let sequence_id = format!("syn-{index:05}");
        for (k, (start, stride)) in candidates.into_iter().take(take).enumerate() {
            let (a, b) = (&clip.states[start], &clip.states[start + stride]);
            let rec = HoiPairRecord {
                schema_version: SCHEMA_VERSION,
                id: format!("{sequence_id}-{k:02}"),
                sequence_id: sequence_id.clone(),
                source_tag: SourceTag::Synthetic,
                object_id: object.to_string(),
                current: a.clone(),
                next: b.clone(),
                goal_text: family.goal_text(&noun),
                action_text: None,
                current_desc: annotator.describe_state(a)?,
                next_desc: annotator.describe_state(b)?,
                transition: annotator.describe_transition(a, b)?,
                current_image: None,
                next_image: None,
                split: None,
                extra: Map::new(),
            };
            let report = validate_record(&rec);
            if report.is_ok() {
                out.push(rec);
            } else {
                log::warn!("dropping {}: {:?}", rec.id, report.violations);
            }
        }
        index += 1;
    }
    Ok(out)
}
