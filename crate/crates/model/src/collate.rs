//! Packs samples into one token stream with per-sample segments.
//!
//! Sequences are laid end to end instead of right-padded; attention never
//! crosses a segment boundary, so there are no pad positions at all.

use hoi_core::dataset::Modality;
use hoi_core::{state_offset, HoiState, Result, HUMAN_DIM, OBJECT_DIM};

use crate::config::ModelConfig;
use crate::sample::{ModelSample, Supervision};
use crate::vocab::{self, Vocabulary};

/// Regression target for one pose-supervised sample.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseTarget {
    /// Packed position whose input token is `<Human>`.
    pub human_pos: usize,
    pub human: [f64; HUMAN_DIM],
    /// Position of `<Object>` and its target, for samples that regress the object.
    pub object: Option<(usize, [f64; OBJECT_DIM])>,
}

/// One sample's slice of the packed stream.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchItem {
    /// Index into the collated slice.
    pub sample: usize,
    pub start: usize,
    pub len: usize,
    /// `(packed position, modality, index within the modality's embeddings)`.
    pub splices: Vec<(usize, Modality, usize)>,
    pub pose_target: Option<PoseTarget>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub tokens: Vec<usize>,
    /// Position of each token within its own sequence.
    pub positions: Vec<usize>,
    /// Next-token target at each position; `None` outside responses.
    pub targets: Vec<Option<usize>>,
    pub items: Vec<BatchItem>,
    /// Samples dropped for exceeding the maximum length.
    pub skipped: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn segments(&self) -> Vec<(usize, usize)> {
        self.items.iter().map(|it| (it.start, it.len)).collect()
    }

    pub fn response_tokens(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

/// Regression target in the configured mode.
pub fn pose_target_values(
    reference: &HoiState,
    target: &HoiState,
    offset_regression: bool,
) -> Result<([f64; HUMAN_DIM], [f64; OBJECT_DIM])> {
    if offset_regression {
        let d = state_offset(reference, target)?;
        Ok((d.d_theta, d.d_object))
    } else {
        Ok((*target.human.params(), target.object.to_array()))
    }
}

fn expand_prompt(vocab: &Vocabulary, prompt: &str, cfg: &ModelConfig) -> (Vec<usize>, Vec<(usize, Modality, usize)>) {
    let mut ids = Vec::new();
    let mut splices = Vec::new();
    for id in vocab.tokenize(prompt) {
        let (modality, count) = match id {
            vocab::IMG => (Modality::Image, cfg.image_tokens()),
            vocab::PC => (Modality::ObjectPoints, 1),
            vocab::HPOSE => (Modality::HumanPose, cfg.pose_tokens),
            vocab::OPOSE => (Modality::ObjectPose, cfg.pose_tokens),
            _ => {
                ids.push(id);
                continue;
            }
        };
        for k in 0..count {
            splices.push((ids.len(), modality, k));
            ids.push(id);
        }
    }
    (ids, splices)
}

/// Token ids of `BOS + prompt` with placeholders expanded, and their splices
/// relative to the sequence start.
pub fn encode_prompt(vocab: &Vocabulary, prompt: &str, cfg: &ModelConfig) -> (Vec<usize>, Vec<(usize, Modality, usize)>) {
    let (ids, splices) = expand_prompt(vocab, prompt, cfg);
    let mut out = vec![vocab::BOS];
    out.extend(ids);
    (out, splices.into_iter().map(|(p, m, k)| (p + 1, m, k)).collect())
}

pub fn collate(samples: &[&ModelSample], vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Batch> {
    let mut batch = Batch::default();
    for (si, s) in samples.iter().enumerate() {
        let (mut ids, splices) = encode_prompt(vocab, &s.prompt, cfg);
        let prompt_len = ids.len();
        ids.extend(vocab.tokenize(&s.target_text));
        ids.push(vocab::EOS);
        if ids.len() > cfg.max_len {
            log::warn!("sample {} has {} tokens, over the limit of {}; skipped", s.id, ids.len(), cfg.max_len);
            batch.skipped += 1;
            continue;
        }
        let start = batch.tokens.len();
        let pose_target = match (s.supervision, &s.target_state) {
            (Supervision::None, _) | (_, None) => None,
            (sup, Some(target)) => {
                let find = |tok: usize| ids[prompt_len..].iter().position(|&t| t == tok).map(|p| start + prompt_len + p);
                let (h, o) = pose_target_values(&s.reference_state, target, cfg.offset_regression)?;
                match find(vocab::HUMAN) {
                    None => None,
                    Some(human_pos) => Some(PoseTarget {
                        human_pos,
                        human: h,
                        object: match sup {
                            Supervision::HumanObject => find(vocab::OBJECT).map(|p| (p, o)),
                            _ => None,
                        },
                    }),
                }
            }
        };
        for (i, &id) in ids.iter().enumerate() {
            batch.tokens.push(id);
            batch.positions.push(i);
            batch.targets.push((i + 1 >= prompt_len && i + 1 < ids.len()).then(|| ids[i + 1]));
        }
        batch.items.push(BatchItem {
            sample: si,
            start,
            len: ids.len(),
            splices: splices.into_iter().map(|(p, m, k)| (start + p, m, k)).collect(),
            pose_target,
        });
    }
    Ok(batch)
}
