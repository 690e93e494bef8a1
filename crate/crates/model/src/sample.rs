//! Model-ready samples: prompt text plus the modality values its placeholders
//! stand for.

use std::path::PathBuf;

use hoi_core::dataset::instruction::{HUMAN_TOKEN, IMAGE_TOKEN, POINTS_TOKEN};
use hoi_core::dataset::{HoiPairRecord, InstructionSample, Task};
use hoi_core::kinematics::{render_silhouette, AssetLibrary, CameraSpec, OccupancyGrid, SkeletonTemplate};
use hoi_core::{HoiError, HoiState, Result};
use serde::{Deserialize, Serialize};

/// Which pose parameters a sample regresses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    None,
    Human,
    HumanObject,
}

impl Supervision {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Understand | Task::Reason => Supervision::None,
            Task::Generate => Supervision::HumanObject,
            Task::Reconstruct => Supervision::Human,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSample {
    pub id: String,
    /// Task name, or the pretraining pair kind.
    pub kind: String,
    pub prompt: String,
    /// Source of the pose placeholders.
    pub input_state: HoiState,
    #[serde(default)]
    pub image: Option<OccupancyGrid>,
    /// Object surface points in the object frame; empty when the prompt has no `<PC>`.
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    pub target_text: String,
    #[serde(default)]
    pub target_state: Option<HoiState>,
    pub reference_state: HoiState,
    pub supervision: Supervision,
}

pub const PRETRAIN_IMAGE: &str = "pretrain_image";
pub const PRETRAIN_TEXT: &str = "pretrain_text";

/// Everything needed to materialize modality inputs.
#[derive(Clone, Debug)]
pub struct SampleContext {
    pub skeleton: SkeletonTemplate,
    pub assets: AssetLibrary,
    pub camera: CameraSpec,
    /// Base directory for relative image paths in records.
    pub image_root: Option<PathBuf>,
    pub point_count: usize,
}

impl SampleContext {
    pub fn standard(point_count: usize) -> Self {
        Self {
            skeleton: SkeletonTemplate::default(),
            assets: AssetLibrary::standard(),
            camera: CameraSpec::default(),
            image_root: None,
            point_count,
        }
    }

    /// Evenly strided subset of the asset's surface points.
    pub fn object_points(&self, object_id: &str) -> Result<Vec<[f64; 3]>> {
        let raw = self.assets.get(object_id)?.points.raw();
        let n = self.point_count.min(raw.len());
        Ok((0..n).map(|i| raw[i * raw.len() / n]).collect())
    }

    /// Loads `image_ref` when given, otherwise renders the state.
    pub fn image(&self, state: &HoiState, image_ref: Option<&str>) -> Result<OccupancyGrid> {
        match image_ref {
            Some(path) => {
                let mut full = PathBuf::from(path);
                if let (Some(root), true) = (&self.image_root, full.is_relative()) {
                    full = root.join(full);
                }
                OccupancyGrid::from_pbm(&std::fs::read_to_string(&full)?)
            }
            None => render_silhouette(state, &self.skeleton, &self.assets, &self.camera),
        }
    }

    pub fn noun(&self, object_id: &str) -> Result<&str> {
        Ok(&self.assets.get(object_id)?.noun)
    }
}

fn has(prompt: &str, token: &str) -> bool {
    prompt.split_whitespace().any(|w| w == token)
}

impl ModelSample {
    /// Samples without a target state are accepted as inference requests.
    pub fn from_instruction(s: &InstructionSample, ctx: &SampleContext) -> Result<Self> {
        if s.target_state.is_some() {
            s.validate()?;
        } else {
            s.validate_prompt()?;
        }
        let image = if has(&s.prompt_text, IMAGE_TOKEN) {
            Some(ctx.image(&s.input_state, s.image_ref.as_deref())?)
        } else {
            None
        };
        let points = if has(&s.prompt_text, POINTS_TOKEN) {
            ctx.object_points(&s.input_state.object_id)?
        } else {
            Vec::new()
        };
        Ok(Self {
            id: s.record_id.clone(),
            kind: s.task.name().to_string(),
            prompt: s.prompt_text.clone(),
            input_state: s.input_state.clone(),
            image,
            points,
            target_text: s.target_text.clone(),
            target_state: s.target_state.clone(),
            reference_state: s.reference_state.clone(),
            supervision: Supervision::for_task(s.task),
        })
    }

    pub fn task(&self) -> Option<Task> {
        self.kind.parse().ok()
    }
}

/// Alignment pairs for one record: silhouette to pose and description to pose.
/// Both regress the absolute human pose, i.e. the offset from the zero pose.
pub fn pretrain_samples(rec: &HoiPairRecord, ctx: &SampleContext) -> Result<Vec<ModelSample>> {
    let state = &rec.current;
    if state.object_id.is_empty() {
        return Err(HoiError::Validation(format!("record {} has no object", rec.id)));
    }
    let reference = state.with_default_human();
    let image = ctx.image(state, rec.current_image.as_deref())?;
    let body: Vec<&str> = rec
        .current_desc
        .fields()
        .into_iter()
        .filter(|(name, _)| !matches!(*name, "object_state" | "interaction_state"))
        .map(|(_, text)| text)
        .collect();
    let make = |kind: &str, prompt: String, image: Option<OccupancyGrid>| ModelSample {
        id: format!("{}:{kind}", rec.id),
        kind: kind.to_string(),
        prompt,
        input_state: state.clone(),
        image,
        points: Vec::new(),
        target_text: HUMAN_TOKEN.to_string(),
        target_state: Some(state.clone()),
        reference_state: reference.clone(),
        supervision: Supervision::Human,
    };
    Ok(vec![
        make(PRETRAIN_IMAGE, format!("estimate the pose of the person in the image . {IMAGE_TOKEN}"), Some(image)),
        make(PRETRAIN_TEXT, format!("show the pose : {}", body.join(" ")), None),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use hoi_core::dataset::{generate_corpus, to_instruction, CorpusConfig, Describer};

    fn records() -> Vec<HoiPairRecord> {
        let ctx = SampleContext::standard(32);
        let cfg = CorpusConfig {
            pairs: 6,
            ..CorpusConfig::default()
        };
        generate_corpus(&cfg, &ctx.skeleton, &ctx.assets, &Describer::standard()).unwrap()
    }

    #[test]
    fn modalities_follow_placeholders() {
        let ctx = SampleContext::standard(32);
        let rec = &records()[0];
        for task in Task::ALL {
            let s = ModelSample::from_instruction(&to_instruction(rec, task), &ctx).unwrap();
            assert_eq!(s.image.is_some(), task == Task::Reconstruct);
            assert_eq!(s.points.len(), 32);
            assert_eq!(s.supervision == Supervision::None, !task.has_target_state());
            assert_eq!(s.task(), Some(task));
        }
    }

    #[test]
    fn pretrain_pairs_target_absolute_pose() {
        let ctx = SampleContext::standard(32);
        let rec = &records()[1];
        let pairs = pretrain_samples(rec, &ctx).unwrap();
        assert_eq!(pairs.len(), 2);
        for p in &pairs {
            assert_eq!(p.reference_state.human, hoi_core::HumanPose::zero());
            assert_eq!(p.target_state.as_ref(), Some(&rec.current));
            assert!(p.task().is_none());
        }
        assert!(pairs[0].image.as_ref().unwrap().count() > 0);
        assert!(pairs[1].prompt.contains(&rec.current_desc.head));
    }
}
