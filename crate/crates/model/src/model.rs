use hoi_core::dataset::Modality;
use hoi_core::kinematics::OccupancyGrid;
use hoi_core::{apply_offset, HoiError, HoiOffset, HoiState, HumanPose, ObjectPose, Result, HUMAN_DIM, OBJECT_DIM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::collate::Batch;
use crate::config::ModelConfig;
use crate::params::{fan_in_uniform, filled, normal, Param, ParamStore};
use crate::sample::ModelSample;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use crate::vocab::Vocabulary;

/// Linear maps inside each transformer layer that can carry adapters.
pub const ADAPTED: [&str; 4] = ["attn.qkv", "attn.o", "mlp.ff1", "mlp.ff2"];

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore,
}

/// Tape nodes produced by [`Model::forward`].
pub struct ForwardOutput {
    /// `[T, vocab]`.
    pub logits: NodeId,
    /// Final-norm hidden states `[T, d_model]`.
    pub hidden: NodeId,
    /// Per-layer `[T, 3 d_model]` attention inputs, reused by the decoder cache.
    pub qkv: Vec<NodeId>,
}

pub fn layer_prefix(i: usize) -> String {
    format!("layers.{i}")
}

fn add_linear(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut ChaCha8Rng, trainable: bool) {
    store.insert(Param::new(format!("{name}.weight"), fan_in_uniform(din, dout, rng), trainable));
    store.insert(Param::new(format!("{name}.bias"), Tensor::zeros(1, dout), trainable));
}

fn add_norm(store: &mut ParamStore, name: &str, d: usize) {
    store.insert(Param::new(format!("{name}.gamma"), filled(1, d, 1.0), true));
    store.insert(Param::new(format!("{name}.beta"), Tensor::zeros(1, d), true));
}

impl Model {
    pub fn new(config: ModelConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (d, v, f) = (config.d_model, vocab.len(), config.feature_width);
        let mut s = ParamStore::default();
        s.insert(Param::new("tok_emb", normal(v, d, 0.02, &mut rng), true));
        s.insert(Param::new("pos_emb", normal(config.max_len, d, 0.02, &mut rng), true));
        for i in 0..config.layers {
            let p = layer_prefix(i);
            add_norm(&mut s, &format!("{p}.ln1"), d);
            add_linear(&mut s, &format!("{p}.attn.qkv"), d, 3 * d, &mut rng, true);
            add_linear(&mut s, &format!("{p}.attn.o"), d, d, &mut rng, true);
            add_norm(&mut s, &format!("{p}.ln2"), d);
            add_linear(&mut s, &format!("{p}.mlp.ff1"), d, config.ff_width, &mut rng, true);
            add_linear(&mut s, &format!("{p}.mlp.ff2"), config.ff_width, d, &mut rng, true);
        }
        add_norm(&mut s, "ln_f", d);
        add_linear(&mut s, "lm_head", d, v, &mut rng, true);

        let k = config.pose_tokens;
        add_linear(&mut s, "enc.hpose.l1", HUMAN_DIM, d, &mut rng, true);
        add_linear(&mut s, "enc.hpose.l2", d, k * d, &mut rng, true);
        add_linear(&mut s, "enc.opose.l1", OBJECT_DIM, d, &mut rng, true);
        add_linear(&mut s, "enc.opose.l2", d, k * d, &mut rng, true);

        // Frozen stand-ins for pretrained image and point encoders.
        let pp = config.patch * config.patch;
        s.insert(Param::new("enc.image.patch.weight", normal(pp, f, 1.0 / (pp as f64).sqrt(), &mut rng), false));
        s.insert(Param::new("enc.image.patch.bias", normal(1, f, 0.1, &mut rng), false));
        add_linear(&mut s, "enc.image.proj", f, d, &mut rng, true);
        s.insert(Param::new("enc.points.feat.weight", normal(3, f, 3.0, &mut rng), false));
        s.insert(Param::new("enc.points.feat.bias", normal(1, f, 0.5, &mut rng), false));
        add_linear(&mut s, "enc.points.proj", f, d, &mut rng, true);

        add_linear(&mut s, "dec.human.l1", d, d, &mut rng, true);
        add_linear(&mut s, "dec.object.l1", d, d, &mut rng, true);
        for (name, width) in [("dec.human.l2", HUMAN_DIM), ("dec.object.l2", OBJECT_DIM)] {
            s.insert(Param::new(format!("{name}.weight"), Tensor::zeros(d, width), true));
            s.insert(Param::new(format!("{name}.bias"), Tensor::zeros(1, width), true));
        }

        let rank = config.lora_rank;
        let mut model = Self {
            config: ModelConfig { lora_rank: 0, ..config },
            vocab,
            params: s,
        };
        if rank > 0 {
            let alpha = model.config.lora_alpha;
            model.attach_lora(rank, alpha, &mut rng)?;
        }
        Ok(model)
    }

    /// Reassembles a model, checking that `params` has exactly the names and
    /// shapes `config` and `vocab` call for.
    pub fn from_parts(config: ModelConfig, vocab: Vocabulary, params: ParamStore) -> Result<Self> {
        let template = Self::new(config, vocab)?;
        if template.params.len() != params.len() {
            return Err(HoiError::Shape(format!(
                "expected {} parameter tensors, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for p in template.params.iter() {
            if !params.contains(&p.name) {
                return Err(HoiError::Lookup(format!("missing parameter {}", p.name)));
            }
            let got = params.get(&p.name).value.shape();
            if got != p.value.shape() {
                return Err(HoiError::Shape(format!("{} has shape {:?}, expected {:?}", p.name, got, p.value.shape())));
            }
        }
        Ok(Self { params, ..template })
    }

    fn lora_scale(&self) -> f64 {
        self.config.lora_alpha / self.config.lora_rank as f64
    }

    /// Wraps every attention and feedforward map with a rank-`rank` adapter.
    /// `B` starts at zero, so outputs are unchanged; the wrapped maps are frozen.
    pub fn attach_lora(&mut self, rank: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        if rank == 0 {
            return Err(HoiError::Config("adapter rank must be at least 1".into()));
        }
        if self.config.lora_rank > 0 {
            return Err(HoiError::Config("adapters are already attached".into()));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(HoiError::Config("adapter alpha must be positive".into()));
        }
        let names = self.adapted_names();
        for name in &names {
            let (din, dout) = self.params.get(&format!("{name}.weight")).value.shape();
            if rank > din.min(dout) {
                return Err(HoiError::Config(format!(
                    "adapter rank {rank} exceeds the dimensions of {name} ({din}x{dout})"
                )));
            }
        }
        for name in &names {
            let (din, dout) = self.params.get(&format!("{name}.weight")).value.shape();
            self.params.get_mut(&format!("{name}.weight")).trainable = false;
            self.params.get_mut(&format!("{name}.bias")).trainable = false;
            self.params.insert(Param::new(format!("{name}.lora_a"), fan_in_uniform(din, rank, rng), true));
            self.params.insert(Param::new(format!("{name}.lora_b"), Tensor::zeros(rank, dout), true));
        }
        self.config.lora_rank = rank;
        self.config.lora_alpha = alpha;
        Ok(())
    }

    /// Folds adapters into their base weights and removes them.
    pub fn merge_lora(&mut self) {
        if self.config.lora_rank == 0 {
            return;
        }
        let s = self.lora_scale();
        for name in self.adapted_names() {
            let a = self.params.remove(&format!("{name}.lora_a")).expect("adapter A");
            let b = self.params.remove(&format!("{name}.lora_b")).expect("adapter B");
            let delta = crate::tensor::matmul(&a.value, &b.value);
            let w = self.params.get_mut(&format!("{name}.weight"));
            for (x, dx) in w.value.data.iter_mut().zip(&delta.data) {
                *x += s * dx;
            }
            w.trainable = true;
            self.params.get_mut(&format!("{name}.bias")).trainable = true;
        }
        self.config.lora_rank = 0;
    }

    pub fn adapted_names(&self) -> Vec<String> {
        (0..self.config.layers)
            .flat_map(|i| ADAPTED.iter().map(move |m| format!("{}.{m}", layer_prefix(i))))
            .collect()
    }

    pub fn lora_param_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.ends_with(".lora_a") || p.name.ends_with(".lora_b"))
            .map(|p| p.value.len())
            .sum()
    }

    /// Weight of a linear map with any adapter folded in.
    pub fn effective_weight(&self, name: &str) -> Tensor {
        let mut w = self.params.get(&format!("{name}.weight")).value.clone();
        let a_name = format!("{name}.lora_a");
        if self.params.contains(&a_name) {
            let delta = crate::tensor::matmul(&self.params.get(&a_name).value, &self.params.get(&format!("{name}.lora_b")).value);
            let s = self.lora_scale();
            for (x, dx) in w.data.iter_mut().zip(&delta.data) {
                *x += s * dx;
            }
        }
        w
    }

    /// `x W + b`, plus the scaled adapter path when present.
    pub fn linear(&self, t: &mut Tape, x: NodeId, name: &str) -> NodeId {
        let w = t.param(&self.params, &format!("{name}.weight"));
        let b = t.param(&self.params, &format!("{name}.bias"));
        let y = t.linear(x, w, b);
        let a_name = format!("{name}.lora_a");
        if !self.params.contains(&a_name) {
            return y;
        }
        let a = t.param(&self.params, &a_name);
        let lb = t.param(&self.params, &format!("{name}.lora_b"));
        let xa = t.matmul(x, a);
        let xab = t.matmul(xa, lb);
        let scaled = t.scale(xab, self.lora_scale());
        t.add(y, scaled)
    }

    fn mlp2(&self, t: &mut Tape, x: NodeId, prefix: &str) -> NodeId {
        let h = self.linear(t, x, &format!("{prefix}.l1"));
        let h = t.gelu(h);
        self.linear(t, h, &format!("{prefix}.l2"))
    }

    fn layer_norm(&self, t: &mut Tape, x: NodeId, name: &str) -> NodeId {
        let g = t.param(&self.params, &format!("{name}.gamma"));
        let b = t.param(&self.params, &format!("{name}.beta"));
        t.layer_norm(x, g, b)
    }

    /// `[n * pose_tokens, d_model]` embeddings for `n` human poses.
    pub fn encode_human_pose(&self, t: &mut Tape, poses: &[&HumanPose]) -> NodeId {
        let data = poses.iter().flat_map(|p| p.params().iter().copied()).collect();
        let x = t.constant(Tensor::from_vec(poses.len(), HUMAN_DIM, data));
        let y = self.mlp2(t, x, "enc.hpose");
        t.reshape(y, poses.len() * self.config.pose_tokens, self.config.d_model)
    }

    pub fn encode_object_pose(&self, t: &mut Tape, poses: &[&ObjectPose]) -> NodeId {
        let data = poses.iter().flat_map(|p| p.to_array()).collect();
        let x = t.constant(Tensor::from_vec(poses.len(), OBJECT_DIM, data));
        let y = self.mlp2(t, x, "enc.opose");
        t.reshape(y, poses.len() * self.config.pose_tokens, self.config.d_model)
    }

    /// `[n * image_tokens, d_model]`: frozen patch features, then a trainable projection.
    pub fn encode_image(&self, t: &mut Tape, grids: &[&OccupancyGrid]) -> Result<NodeId> {
        let (side, p) = (self.config.image_side, self.config.patch);
        let per = side / p;
        let mut data = Vec::with_capacity(grids.len() * side * side);
        for g in grids {
            if g.side != side {
                return Err(HoiError::Shape(format!("image side {} does not match the configured {side}", g.side)));
            }
            for pr in 0..per {
                for pc in 0..per {
                    for r in 0..p {
                        for c in 0..p {
                            data.push(if g.get(pr * p + r, pc * p + c) { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
        let x = t.constant(Tensor::from_vec(grids.len() * per * per, p * p, data));
        let h = self.linear(t, x, "enc.image.patch");
        let h = t.relu(h);
        Ok(self.linear(t, h, "enc.image.proj"))
    }

    /// One `[1, d_model]` embedding per point set: frozen per-point features,
    /// max-pooled, then a trainable projection.
    pub fn encode_points(&self, t: &mut Tape, sets: &[&[[f64; 3]]]) -> Result<NodeId> {
        let mut pooled = Vec::with_capacity(sets.len());
        for pts in sets {
            if pts.is_empty() {
                return Err(HoiError::Domain("point set is empty".into()));
            }
            let x = t.constant(Tensor::from_vec(pts.len(), 3, pts.iter().flatten().copied().collect()));
            let h = self.linear(t, x, "enc.points.feat");
            let h = t.relu(h);
            pooled.push((t.max_pool_rows(h), 0));
        }
        let stacked = t.rows(pooled);
        Ok(self.linear(t, stacked, "enc.points.proj"))
    }

    pub fn decode_human(&self, t: &mut Tape, hidden: NodeId) -> NodeId {
        self.mlp2(t, hidden, "dec.human")
    }

    pub fn decode_object(&self, t: &mut Tape, hidden: NodeId) -> NodeId {
        self.mlp2(t, hidden, "dec.object")
    }

    /// Input embeddings of a batch: token rows with modality embeddings
    /// spliced in, plus learned positions.
    pub fn embed(&self, t: &mut Tape, batch: &Batch, samples: &[&ModelSample]) -> Result<NodeId> {
        if let Some(it) = batch.items.iter().find(|it| it.len > self.config.max_len) {
            return Err(HoiError::Shape(format!(
                "sequence of {} tokens exceeds the maximum of {}",
                it.len, self.config.max_len
            )));
        }
        let tok = t.param(&self.params, "tok_emb");
        let mut sources: Vec<(NodeId, usize)> = batch.tokens.iter().map(|&id| (tok, id)).collect();

        for modality in [Modality::HumanPose, Modality::ObjectPose, Modality::Image, Modality::ObjectPoints] {
            // (item index, splice position, sub-index) for this modality.
            let mut users: Vec<usize> = Vec::new();
            for (ii, it) in batch.items.iter().enumerate() {
                if it.splices.iter().any(|s| s.1 == modality) {
                    users.push(ii);
                }
            }
            if users.is_empty() {
                continue;
            }
            let sample = |ii: usize| samples[batch.items[ii].sample];
            let (node, per) = match modality {
                Modality::HumanPose => {
                    let poses: Vec<&HumanPose> = users.iter().map(|&ii| &sample(ii).input_state.human).collect();
                    (self.encode_human_pose(t, &poses), self.config.pose_tokens)
                }
                Modality::ObjectPose => {
                    let poses: Vec<&ObjectPose> = users.iter().map(|&ii| &sample(ii).input_state.object).collect();
                    (self.encode_object_pose(t, &poses), self.config.pose_tokens)
                }
                Modality::Image => {
                    let grids = users
                        .iter()
                        .map(|&ii| {
                            sample(ii)
                                .image
                                .as_ref()
                                .ok_or_else(|| HoiError::Validation(format!("sample {} has no image", sample(ii).id)))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    (self.encode_image(t, &grids)?, self.config.image_tokens())
                }
                Modality::ObjectPoints => {
                    let sets: Vec<&[[f64; 3]]> = users.iter().map(|&ii| sample(ii).points.as_slice()).collect();
                    (self.encode_points(t, &sets)?, 1)
                }
            };
            for (row, &ii) in users.iter().enumerate() {
                for &(pos, m, k) in &batch.items[ii].splices {
                    if m == modality {
                        sources[pos] = (node, row * per + k);
                    }
                }
            }
        }
        let x = t.rows(sources);
        let pos = t.param(&self.params, "pos_emb");
        let p = t.rows(batch.positions.iter().map(|&i| (pos, i)).collect());
        Ok(t.add(x, p))
    }

    /// Pre-norm causal transformer over already embedded inputs.
    pub fn forward_embedded(&self, t: &mut Tape, x: NodeId, segments: &[(usize, usize)]) -> ForwardOutput {
        let mut x = x;
        let mut qkvs = Vec::with_capacity(self.config.layers);
        for i in 0..self.config.layers {
            let p = layer_prefix(i);
            let h = self.layer_norm(t, x, &format!("{p}.ln1"));
            let qkv = self.linear(t, h, &format!("{p}.attn.qkv"));
            qkvs.push(qkv);
            let a = t.attention(qkv, self.config.heads, segments);
            let o = self.linear(t, a, &format!("{p}.attn.o"));
            x = t.add(x, o);
            let h = self.layer_norm(t, x, &format!("{p}.ln2"));
            let h = self.linear(t, h, &format!("{p}.mlp.ff1"));
            let h = t.gelu(h);
            let h = self.linear(t, h, &format!("{p}.mlp.ff2"));
            x = t.add(x, h);
        }
        let hidden = self.layer_norm(t, x, "ln_f");
        let logits = self.linear(t, hidden, "lm_head");
        ForwardOutput {
            logits,
            hidden,
            qkv: qkvs,
        }
    }

    pub fn forward(&self, t: &mut Tape, batch: &Batch, samples: &[&ModelSample]) -> Result<ForwardOutput> {
        let x = self.embed(t, batch, samples)?;
        Ok(self.forward_embedded(t, x, &batch.segments()))
    }

    /// Turns decoder outputs into a state in the configured regression mode.
    pub fn compose_prediction(&self, reference: &HoiState, human: &[f64], object: Option<&[f64]>) -> Result<HoiState> {
        if human.len() != HUMAN_DIM || object.is_some_and(|o| o.len() != OBJECT_DIM) {
            return Err(HoiError::Shape("decoder output has the wrong width".into()));
        }
        if self.config.offset_regression {
            let mut d = HoiOffset::zero();
            d.d_theta.copy_from_slice(human);
            if let Some(o) = object {
                d.d_object.copy_from_slice(o);
            }
            apply_offset(reference, &d)
        } else {
            let mut theta = [0.0; HUMAN_DIM];
            theta.copy_from_slice(human);
            let object = match object {
                Some(o) => ObjectPose::from_array(o.try_into().expect("checked width")).canonicalized()?,
                None => reference.object,
            };
            Ok(HoiState::new(HumanPose::from_raw(theta).canonicalized()?, object, reference.object_id.clone()))
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::collate::collate;
    use crate::sample::SampleContext;
    use hoi_core::dataset::{generate_corpus, to_instruction, CorpusConfig, Describer, Task};
    use rand::Rng;

    pub(crate) fn fixture(cfg: ModelConfig) -> (Model, Vec<ModelSample>) {
        let ctx = SampleContext::standard(cfg.point_count);
        let corpus = CorpusConfig {
            pairs: 4,
            ..CorpusConfig::default()
        };
        let recs = generate_corpus(&corpus, &ctx.skeleton, &ctx.assets, &Describer::standard()).unwrap();
        let samples: Vec<ModelSample> = recs
            .iter()
            .take(2)
            .flat_map(|r| Task::ALL.map(|t| to_instruction(r, t)))
            .map(|s| ModelSample::from_instruction(&s, &ctx).unwrap())
            .collect();
        let vocab = Vocabulary::build(samples.iter().flat_map(|s| [s.prompt.as_str(), s.target_text.as_str()]));
        (Model::new(cfg, vocab).unwrap(), samples)
    }

    fn logits(model: &Model, samples: &[&ModelSample]) -> Tensor {
        let batch = collate(samples, &model.vocab, &model.config).unwrap();
        let mut t = Tape::new();
        let out = model.forward(&mut t, &batch, samples).unwrap();
        t.value(out.logits).clone()
    }

    #[test]
    fn logits_shape_and_finiteness() {
        let (model, samples) = fixture(ModelConfig::tiny());
        let refs: Vec<&ModelSample> = samples.iter().collect();
        let batch = collate(&refs, &model.vocab, &model.config).unwrap();
        let l = logits(&model, &refs);
        assert_eq!(l.shape(), (batch.len(), model.vocab.len()));
        assert!(l.is_finite());
    }

    #[test]
    fn causality_probe() {
        let (model, samples) = fixture(ModelConfig::tiny());
        let s = &samples[0];
        let batch = collate(&[s], &model.vocab, &model.config).unwrap();
        let run = |perturb: Option<usize>| {
            let mut t = Tape::new();
            let x = model.embed(&mut t, &batch, &[s]).unwrap();
            let x = match perturb {
                Some(j) => {
                    let mut v = t.value(x).clone();
                    v.row_mut(j).iter_mut().for_each(|e| *e += 0.5);
                    t.constant(v)
                }
                None => x,
            };
            let out = model.forward_embedded(&mut t, x, &batch.segments());
            t.value(out.logits).clone()
        };
        let base = run(None);
        let j = 7;
        let moved = run(Some(j));
        for i in 0..batch.len() {
            let same = base.row(i) == moved.row(i);
            assert_eq!(same, i < j, "position {i}");
        }
    }

    #[test]
    fn packed_segments_do_not_interact() {
        let (model, samples) = fixture(ModelConfig::tiny());
        let alone = logits(&model, &[&samples[1]]);
        let packed = logits(&model, &[&samples[0], &samples[1]]);
        let offset = packed.rows - alone.rows;
        for i in 0..alone.rows {
            for (a, b) in alone.row(i).iter().zip(packed.row(offset + i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_init_and_forward() {
        let (a, samples) = fixture(ModelConfig::tiny());
        let (b, _) = fixture(ModelConfig::tiny());
        assert_eq!(a.params, b.params);
        let refs: Vec<&ModelSample> = samples.iter().collect();
        assert_eq!(logits(&a, &refs), logits(&b, &refs));
    }

    #[test]
    fn pose_encoders_shapes_and_distinct() {
        let (model, _) = fixture(ModelConfig::tiny());
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut raw = [0.0; HUMAN_DIM];
        raw.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        let p1 = HumanPose::from_raw(raw);
        let p2 = HumanPose::zero();
        let h = model.encode_human_pose(&mut t, &[&p1, &p2]);
        assert_eq!(t.value(h).shape(), (2, 32));
        assert_ne!(t.value(h).row(0), t.value(h).row(1));
        let o1 = ObjectPose::identity();
        let o2 = ObjectPose::from_array([0.1, 0.2, 0.3, 0.0, 0.0, 0.5]);
        let o = model.encode_object_pose(&mut t, &[&o1, &o2]);
        assert_eq!(t.value(o).shape(), (2, 32));
        assert_ne!(t.value(o).row(0), t.value(o).row(1));
    }

    #[test]
    fn image_encoder_shapes() {
        let (model, _) = fixture(ModelConfig::tiny());
        let mut t = Tape::new();
        let zeros = OccupancyGrid::empty(32);
        let mut ones = OccupancyGrid::empty(32);
        ones.cells.iter_mut().for_each(|c| *c = true);
        let e = model.encode_image(&mut t, &[&zeros, &ones]).unwrap();
        let v = t.value(e);
        assert_eq!(v.shape(), (32, 32));
        assert_ne!(v.row(0), v.row(16));
        assert!(matches!(model.encode_image(&mut t, &[&OccupancyGrid::empty(24)]), Err(HoiError::Shape(_))));
        for name in ["enc.image.patch.weight", "enc.image.patch.bias", "enc.points.feat.weight"] {
            assert!(!model.params.get(name).trainable);
        }
    }

    #[test]
    fn point_encoder_invariances() {
        let (model, _) = fixture(ModelConfig::tiny());
        let ctx = SampleContext::standard(40);
        let pts = ctx.object_points("box").unwrap();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        let mut t = Tape::new();
        let e = model.encode_points(&mut t, &[&pts, &shuffled]).unwrap();
        assert_eq!(t.value(e).row(0), t.value(e).row(1));
        let single = [[0.1, -0.2, 0.3]];
        let dup = [[0.1, -0.2, 0.3], [0.1, -0.2, 0.3]];
        let e = model.encode_points(&mut t, &[&single, &dup]).unwrap();
        assert_eq!(t.value(e).row(0), t.value(e).row(1));
        let ball = ctx.object_points("ball").unwrap();
        let e = model.encode_points(&mut t, &[&pts, &ball]).unwrap();
        assert_ne!(t.value(e).row(0), t.value(e).row(1));
    }

    #[test]
    fn zero_init_decoders_give_reference() {
        let (model, samples) = fixture(ModelConfig::tiny());
        let mut t = Tape::new();
        let h = t.constant(Tensor::from_vec(1, 32, (0..32).map(|i| i as f64 * 0.1).collect()));
        let dh = model.decode_human(&mut t, h);
        let dobj = model.decode_object(&mut t, h);
        assert_eq!(t.value(dh).shape(), (1, HUMAN_DIM));
        assert_eq!(t.value(dobj).shape(), (1, OBJECT_DIM));
        assert!(t.value(dh).data.iter().chain(&t.value(dobj).data).all(|v| *v == 0.0));
        let reference = &samples[2].reference_state;
        let pred = model
            .compose_prediction(reference, &t.value(dh).data, Some(&t.value(dobj).data))
            .unwrap();
        assert_eq!(&pred, reference);
    }

    #[test]
    fn lora_attach_count_and_merge() {
        let (mut model, samples) = fixture(ModelConfig::tiny());
        let refs: Vec<&ModelSample> = samples.iter().collect();
        let base = logits(&model, &refs);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        model.attach_lora(4, 8.0, &mut rng).unwrap();
        assert_eq!(logits(&model, &refs), base);

        let (d, f) = (32, 64);
        let per_layer = 4 * ((d + 3 * d) + (d + d) + (d + f) + (f + d));
        assert_eq!(model.lora_param_count(), 2 * per_layer);
        let enumerated: usize = model
            .params
            .trainable()
            .filter(|p| p.name.contains(".lora_"))
            .map(|p| p.value.len())
            .sum();
        assert_eq!(enumerated, model.lora_param_count());
        assert!(!model.params.get("layers.0.attn.qkv.weight").trainable);

        for p in model.params.iter_mut().filter(|p| p.name.ends_with(".lora_b")) {
            p.value.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
        let adapted = logits(&model, &refs);
        assert_ne!(adapted, base);
        model.merge_lora();
        assert_eq!(model.lora_param_count(), 0);
        let merged = logits(&model, &refs);
        let err = adapted.data.iter().zip(&merged.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "merge error {err}");
    }

    #[test]
    fn lora_rank_too_large_is_config_error() {
        let (mut model, _) = fixture(ModelConfig::tiny());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(model.attach_lora(33, 8.0, &mut rng), Err(HoiError::Config(_))));
        assert!(matches!(model.attach_lora(0, 8.0, &mut rng), Err(HoiError::Config(_))));
        assert_eq!(model.lora_param_count(), 0);
    }

    #[test]
    fn absolute_mode_composes_raw_parameters() {
        let (model, samples) = fixture(ModelConfig {
            offset_regression: false,
            ..ModelConfig::tiny()
        });
        let reference = &samples[2].reference_state;
        let pred = model.compose_prediction(reference, &[0.0; HUMAN_DIM], None).unwrap();
        assert_eq!(pred.human, HumanPose::zero());
        assert_eq!(pred.object, reference.object);
    }
}
