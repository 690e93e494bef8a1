//! Greedy decoding with a key/value cache.
//!
//! The prompt runs through the regular forward pass; each generated token then
//! goes through plain kernels over a parameter snapshot with adapters folded in.

use hoi_core::{HoiState, Result};
use serde::{Deserialize, Serialize};

use crate::collate::{encode_prompt, Batch, BatchItem};
use crate::model::{layer_prefix, Model};
use crate::sample::{ModelSample, Supervision};
use crate::tape::Tape;
use crate::tensor::{gelu, layer_norm, matmul, softmax_in_place, Tensor};
use crate::vocab;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    /// Generated ids, without the closing EOS.
    pub tokens: Vec<usize>,
    pub text: String,
    /// Predicted state for pose-supervised samples; the reference state when malformed.
    pub state: Option<HoiState>,
    /// Stopped at the length limit before emitting EOS.
    pub truncated: bool,
    /// Pose tokens missing or repeated.
    pub malformed: bool,
}

struct Linear {
    w: Tensor,
    b: Tensor,
}

impl Linear {
    fn apply(&self, x: &Tensor) -> Tensor {
        let mut y = matmul(x, &self.w);
        for i in 0..y.rows {
            for (o, b) in y.row_mut(i).iter_mut().zip(&self.b.data) {
                *o += b;
            }
        }
        y
    }
}

struct Norm {
    gamma: Vec<f64>,
    beta: Vec<f64>,
}

impl Norm {
    fn apply(&self, x: &Tensor) -> Tensor {
        layer_norm(x, &self.gamma, &self.beta).0
    }
}

struct Layer {
    ln1: Norm,
    qkv: Linear,
    o: Linear,
    ln2: Norm,
    ff1: Linear,
    ff2: Linear,
}

/// Immutable inference snapshot of a model.
pub struct Decoder<'m> {
    model: &'m Model,
    layers: Vec<Layer>,
    ln_f: Norm,
    lm_head: Linear,
}

/// Per-layer cached keys and values, `[len, d_model]` row-major.
pub struct Cache {
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

impl<'m> Decoder<'m> {
    pub fn new(model: &'m Model) -> Self {
        let lin = |name: &str| Linear {
            w: model.effective_weight(name),
            b: model.params.get(&format!("{name}.bias")).value.clone(),
        };
        let norm = |name: &str| Norm {
            gamma: model.params.get(&format!("{name}.gamma")).value.data.clone(),
            beta: model.params.get(&format!("{name}.beta")).value.data.clone(),
        };
        let layers = (0..model.config.layers)
            .map(|i| {
                let p = layer_prefix(i);
                Layer {
                    ln1: norm(&format!("{p}.ln1")),
                    qkv: lin(&format!("{p}.attn.qkv")),
                    o: lin(&format!("{p}.attn.o")),
                    ln2: norm(&format!("{p}.ln2")),
                    ff1: lin(&format!("{p}.mlp.ff1")),
                    ff2: lin(&format!("{p}.mlp.ff2")),
                }
            })
            .collect();
        Self {
            model,
            layers,
            ln_f: norm("ln_f"),
            lm_head: lin("lm_head"),
        }
    }

    /// Runs the prompt; returns the cache and the last position's logits.
    pub fn prefill(&self, sample: &ModelSample) -> Result<(Cache, Vec<f64>)> {
        let cfg = &self.model.config;
        let (ids, splices) = encode_prompt(&self.model.vocab, &sample.prompt, cfg);
        let n = ids.len();
        let batch = Batch {
            positions: (0..n).collect(),
            targets: vec![None; n],
            items: vec![BatchItem {
                sample: 0,
                start: 0,
                len: n,
                splices,
                pose_target: None,
            }],
            tokens: ids,
            skipped: 0,
        };
        let mut t = Tape::new();
        let out = self.model.forward(&mut t, &batch, &[sample])?;
        let d = cfg.d_model;
        let mut cache = Cache {
            keys: Vec::with_capacity(cfg.layers),
            values: Vec::with_capacity(cfg.layers),
            len: n,
        };
        for &q in &out.qkv {
            let v = t.value(q);
            let mut k = Vec::with_capacity(cfg.max_len * d);
            let mut vv = Vec::with_capacity(cfg.max_len * d);
            for i in 0..n {
                let row = v.row(i);
                k.extend_from_slice(&row[d..2 * d]);
                vv.extend_from_slice(&row[2 * d..]);
            }
            cache.keys.push(k);
            cache.values.push(vv);
        }
        Ok((cache, t.value(out.logits).row(n - 1).to_vec()))
    }

    /// Feeds one token at the next position; returns (final hidden, logits).
    pub fn step(&self, cache: &mut Cache, token: usize) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.model.config;
        let (d, heads) = (cfg.d_model, cfg.heads);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let pos = cache.len;
        let tok = self.model.params.get("tok_emb").value.row(token);
        let pe = self.model.params.get("pos_emb").value.row(pos);
        let mut x = Tensor::from_vec(1, d, tok.iter().zip(pe).map(|(a, b)| a + b).collect());
        for (l, layer) in self.layers.iter().enumerate() {
            let qkv = layer.qkv.apply(&layer.ln1.apply(&x));
            cache.keys[l].extend_from_slice(&qkv.data[d..2 * d]);
            cache.values[l].extend_from_slice(&qkv.data[2 * d..]);
            let (keys, values) = (&cache.keys[l], &cache.values[l]);
            let n = pos + 1;
            let mut att = Tensor::zeros(1, d);
            let mut scores = vec![0.0; n];
            for h in 0..heads {
                let q = &qkv.data[h * dh..(h + 1) * dh];
                for (j, s) in scores.iter_mut().enumerate() {
                    let k = &keys[j * d + h * dh..j * d + (h + 1) * dh];
                    *s = q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(&mut scores);
                let out = &mut att.data[h * dh..(h + 1) * dh];
                for (j, p) in scores.iter().enumerate() {
                    let v = &values[j * d + h * dh..j * d + (h + 1) * dh];
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += p * vi;
                    }
                }
            }
            x.add_assign(&layer.o.apply(&att));
            let mut f = layer.ff1.apply(&layer.ln2.apply(&x));
            f.data.iter_mut().for_each(|v| *v = gelu(*v));
            x.add_assign(&layer.ff2.apply(&f));
        }
        cache.len += 1;
        let hidden = self.ln_f.apply(&x);
        let logits = self.lm_head.apply(&hidden);
        (hidden.data, logits.data)
    }

    pub fn generate(&self, sample: &ModelSample, max_new: usize) -> Result<Response> {
        let cfg = &self.model.config;
        let (mut cache, mut logits) = self.prefill(sample)?;
        let mut tokens = Vec::new();
        let mut human_hidden = Vec::new();
        let mut object_hidden = Vec::new();
        let mut finished = false;
        while tokens.len() < max_new && cache.len < cfg.max_len {
            let next = argmax(&logits);
            if next == vocab::EOS {
                finished = true;
                break;
            }
            tokens.push(next);
            let (hidden, l) = self.step(&mut cache, next);
            match next {
                vocab::HUMAN => human_hidden.push(hidden),
                vocab::OBJECT => object_hidden.push(hidden),
                _ => {}
            }
            logits = l;
        }
        // A response that ends exactly at the limit may still have EOS next.
        if !finished && argmax(&logits) == vocab::EOS {
            finished = true;
        }
        let well_formed = match sample.supervision {
            Supervision::None => true,
            Supervision::Human => human_hidden.len() == 1 && object_hidden.is_empty(),
            Supervision::HumanObject => human_hidden.len() == 1 && object_hidden.len() == 1,
        };
        let state = match sample.supervision {
            Supervision::None => None,
            _ if !well_formed => Some(sample.reference_state.clone()),
            sup => {
                let mut t = Tape::new();
                let h = t.constant(Tensor::from_vec(1, cfg.d_model, human_hidden[0].clone()));
                let dh = self.model.decode_human(&mut t, h);
                let obj = if sup == Supervision::HumanObject {
                    let o = t.constant(Tensor::from_vec(1, cfg.d_model, object_hidden[0].clone()));
                    let n = self.model.decode_object(&mut t, o);
                    Some(t.value(n).data.clone())
                } else {
                    None
                };
                Some(
                    self.model
                        .compose_prediction(&sample.reference_state, &t.value(dh).data, obj.as_deref())?,
                )
            }
        };
        Ok(Response {
            text: self.model.vocab.detokenize(&tokens),
            tokens,
            state,
            truncated: !finished,
            malformed: !well_formed,
        })
    }
}

/// Index of the largest value; the first one on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn generate_response(model: &Model, sample: &ModelSample, max_new: usize) -> Result<Response> {
    Decoder::new(model).generate(sample, max_new)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collate::collate;
    use crate::config::ModelConfig;
    use crate::model::tests::fixture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn perturbed(model: &Model, seed: u64) -> Model {
        let mut m = model.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in m.params.iter_mut() {
            p.value.data.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
        m
    }

    #[test]
    fn cached_steps_match_full_forward() {
        let (model, samples) = fixture(ModelConfig::tiny());
        let mut model = perturbed(&model, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        model.attach_lora(2, 4.0, &mut rng).unwrap();
        for p in model.params.iter_mut().filter(|p| p.name.ends_with("lora_b")) {
            p.value.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
        for s in &samples[..4] {
            let batch = collate(&[s], &model.vocab, &model.config).unwrap();
            let mut t = Tape::new();
            let out = model.forward(&mut t, &batch, &[s]).unwrap();
            let full = t.value(out.logits);
            let hidden = t.value(out.hidden);
            let dec = Decoder::new(&model);
            let (mut cache, first) = dec.prefill(s).unwrap();
            let prompt_len = cache.len;
            let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9);
            assert!(close(&first, full.row(prompt_len - 1)));
            for pos in prompt_len..batch.len() {
                let (h, l) = dec.step(&mut cache, batch.tokens[pos]);
                assert!(close(&l, full.row(pos)), "logits differ at {pos}");
                assert!(close(&h, hidden.row(pos)));
            }
        }
    }

    #[test]
    fn greedy_decoding_is_deterministic() {
        let (model, samples) = fixture(ModelConfig::tiny());
        let model = perturbed(&model, 3);
        for s in &samples {
            let a = generate_response(&model, s, 12).unwrap();
            let b = generate_response(&model, s, 12).unwrap();
            assert_eq!(a, b);
            assert!(a.tokens.len() <= 12);
        }
    }

    #[test]
    fn malformed_or_untrained_responses_fall_back_to_reference() {
        let (model, samples) = fixture(ModelConfig::tiny());
        for s in samples.iter().filter(|s| s.supervision != Supervision::None) {
            let r = generate_response(&model, s, 5).unwrap();
            assert_eq!(r.state.as_ref(), Some(&s.reference_state));
        }
        let s = samples.iter().find(|s| s.supervision == Supervision::None).unwrap();
        assert!(generate_response(&model, s, 5).unwrap().state.is_none());
    }

    #[test]
    fn argmax_takes_first_tie() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
    }
}
