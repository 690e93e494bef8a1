use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::record::HoiPairRecord;
use crate::error::{HoiError, Result};
use crate::types::HoiState;

pub const HUMAN_TOKEN: &str = "<Human>";
pub const OBJECT_TOKEN: &str = "<Object>";
pub const IMAGE_TOKEN: &str = "<IMG>";
pub const POINTS_TOKEN: &str = "<PC>";
pub const HPOSE_TOKEN: &str = "<HPOSE>";
pub const OPOSE_TOKEN: &str = "<OPOSE>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Understand,
    Reason,
    Generate,
    Reconstruct,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Understand, Task::Reason, Task::Generate, Task::Reconstruct];

    pub fn name(self) -> &'static str {
        match self {
            Task::Understand => "understand",
            Task::Reason => "reason",
            Task::Generate => "generate",
            Task::Reconstruct => "reconstruct",
        }
    }

    /// Modalities spliced into the prompt, in placeholder order.
    pub fn modalities(self) -> &'static [Modality] {
        use Modality::*;
        match self {
            Task::Understand | Task::Reason | Task::Generate => &[ObjectPoints, HumanPose, ObjectPose],
            Task::Reconstruct => &[Image, ObjectPoints, ObjectPose],
        }
    }

    pub fn has_target_state(self) -> bool {
        matches!(self, Task::Generate | Task::Reconstruct)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = HoiError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| HoiError::Domain(format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    HumanPose,
    ObjectPose,
    ObjectPoints,
    Image,
}

impl Modality {
    pub fn placeholder(self) -> &'static str {
        match self {
            Modality::HumanPose => HPOSE_TOKEN,
            Modality::ObjectPose => OPOSE_TOKEN,
            Modality::ObjectPoints => POINTS_TOKEN,
            Modality::Image => IMAGE_TOKEN,
        }
    }
}

/// A task-tagged prompt/target pair.
///
/// Modality values are not copied into the prompt text: `input_state` and
/// `image_ref` are the record's own fields, and `prompt_modalities` says which
/// of them the model may see.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub record_id: String,
    pub task: Task,
    pub prompt_text: String,
    pub prompt_modalities: Vec<Modality>,
    pub input_state: HoiState,
    #[serde(default)]
    pub image_ref: Option<String>,
    pub target_text: String,
    #[serde(default)]
    pub target_state: Option<HoiState>,
    pub reference_state: HoiState,
}

impl InstructionSample {
    pub fn validate(&self) -> Result<()> {
        self.validate_prompt()?;
        if self.target_state.is_some() != self.task.has_target_state() {
            return Err(HoiError::Validation(format!(
                "{} sample has the wrong target_state presence",
                self.task
            )));
        }
        Ok(())
    }

    /// Checks the prompt side only, as for requests without ground truth.
    pub fn validate_prompt(&self) -> Result<()> {
        if self.prompt_modalities != self.task.modalities() {
            return Err(HoiError::Validation(format!(
                "{} sample has modalities {:?}",
                self.task, self.prompt_modalities
            )));
        }
        for m in &self.prompt_modalities {
            if self.prompt_text.split_whitespace().filter(|w| *w == m.placeholder()).count() != 1 {
                return Err(HoiError::Validation(format!(
                    "prompt must contain {} exactly once",
                    m.placeholder()
                )));
            }
        }
        Ok(())
    }
}

fn placeholders(task: Task) -> String {
    task.modalities()
        .iter()
        .map(|m| m.placeholder())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generation prompt for an arbitrary transition text.
pub fn generation_prompt(transition: &str) -> String {
    format!("generate the next state . {transition} {}", placeholders(Task::Generate))
}

/// A generation sample with no ground truth, for stepping a state forward.
pub fn generation_request(id: &str, state: &HoiState, transition: &str) -> InstructionSample {
    InstructionSample {
        record_id: id.to_string(),
        task: Task::Generate,
        prompt_text: generation_prompt(transition),
        prompt_modalities: Task::Generate.modalities().to_vec(),
        input_state: state.clone(),
        image_ref: None,
        target_text: format!("{HUMAN_TOKEN} {OBJECT_TOKEN}"),
        target_state: None,
        reference_state: state.clone(),
    }
}

pub fn to_instruction(rec: &HoiPairRecord, task: Task) -> InstructionSample {
    let noun = &rec.object_id;
    let slots = placeholders(task);
    let (prompt_text, target_text, target_state, reference_state) = match task {
        Task::Understand => (
            format!("describe the person and the {noun} in detail . {slots}"),
            rec.current_desc.render(),
            None,
            rec.current.clone(),
        ),
        Task::Reason => (
            format!("goal : {} what is the next state ? {slots}", rec.goal_text),
            rec.next_desc.render(),
            None,
            rec.current.clone(),
        ),
        Task::Generate => (
            generation_prompt(&rec.transition.render()),
            format!("{HUMAN_TOKEN} {OBJECT_TOKEN}"),
            Some(rec.next.clone()),
            rec.current.clone(),
        ),
        Task::Reconstruct => (
            format!("reconstruct the person with the {noun} . {slots}"),
            HUMAN_TOKEN.to_string(),
            Some(rec.current.clone()),
            rec.current.with_default_human(),
        ),
    };
    InstructionSample {
        record_id: rec.id.clone(),
        task,
        prompt_text,
        prompt_modalities: task.modalities().to_vec(),
        input_state: rec.current.clone(),
        image_ref: rec.current_image.clone(),
        target_text,
        target_state,
        reference_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::fixtures::record;
    use crate::types::{FineGrainedDescription, HumanPose};

    #[test]
    fn generation_request_matches_record_prompt() {
        let r = record("r", "s");
        let req = generation_request("q", &r.current, &r.transition.render());
        let s = to_instruction(&r, Task::Generate);
        assert_eq!(req.prompt_text, s.prompt_text);
        assert_eq!(req.reference_state, s.reference_state);
        assert!(req.target_state.is_none());
    }

    #[test]
    fn generate_reference_is_current_state() {
        let r = record("r", "s");
        let s = to_instruction(&r, Task::Generate);
        assert_eq!(s.reference_state, r.current);
        assert_eq!(s.target_state.as_ref(), Some(&r.next));
        s.validate().unwrap();
    }

    #[test]
    fn reconstruct_reference_is_zero_pose() {
        let r = record("r", "s");
        let s = to_instruction(&r, Task::Reconstruct);
        assert_eq!(s.reference_state.human, HumanPose::zero());
        assert_eq!(s.reference_state.object, r.current.object);
        assert_eq!(s.target_state.as_ref().unwrap().human, r.current.human);
        assert!(!s.prompt_modalities.contains(&Modality::HumanPose));
        s.validate().unwrap();
    }

    #[test]
    fn understand_target_round_trips() {
        let r = record("r", "s");
        let s = to_instruction(&r, Task::Understand);
        assert_eq!(FineGrainedDescription::parse(&s.target_text).unwrap(), r.current_desc);
        assert!(s.target_state.is_none());
    }

    #[test]
    fn modality_values_come_from_the_record() {
        let mut r = record("r", "s");
        r.current_image = Some("img/0.pbm".into());
        for task in Task::ALL {
            let s = to_instruction(&r, task);
            s.validate().unwrap();
            assert_eq!(s.input_state, r.current);
            assert_eq!(s.image_ref, r.current_image);
        }
        assert!(to_instruction(&r, Task::Reason).prompt_text.contains(&r.goal_text));
    }

    #[test]
    fn unknown_task_is_domain_error() {
        assert!(matches!("dance".parse::<Task>(), Err(HoiError::Domain(_))));
        assert_eq!("reason".parse::<Task>().unwrap(), Task::Reason);
    }
}
