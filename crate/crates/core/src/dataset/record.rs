use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::types::{FineGrainedDescription, HoiState, TransitionDescription};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    Synthetic,
    Grab,
    Chairs,
    Behave,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One annotated pair of consecutive interaction states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiPairRecord {
    pub schema_version: u32,
    pub id: String,
    /// Motion clip the pair was sampled from; splits never separate a clip.
    pub sequence_id: String,
    pub source_tag: SourceTag,
    pub object_id: String,
    pub current: HoiState,
    pub next: HoiState,
    pub goal_text: String,
    /// Reserved for supplementary action descriptions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_text: Option<String>,
    pub current_desc: FineGrainedDescription,
    pub next_desc: FineGrainedDescription,
    pub transition: TransitionDescription,
    #[serde(default)]
    pub current_image: Option<String>,
    #[serde(default)]
    pub next_image: Option<String>,
    #[serde(default)]
    pub split: Option<Split>,
    /// Unknown fields, kept for forward compatibility.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

fn check_state(report: &mut ValidationReport, name: &str, state: &HoiState) {
    if !state.human.params().iter().all(|v| v.is_finite()) {
        report.push(format!("{name}.human"), "pose has non-finite components");
    }
    if !state.object.to_array().iter().all(|v| v.is_finite()) {
        report.push(format!("{name}.object"), "pose has non-finite components");
    }
    if state.object_id.is_empty() {
        report.push(format!("{name}.object_id"), "empty object id");
    }
}

/// Collects every schema violation; an empty report means the record is accepted.
pub fn validate_record(rec: &HoiPairRecord) -> ValidationReport {
    let mut report = ValidationReport::default();
    if rec.schema_version != SCHEMA_VERSION {
        report.push("schema_version", format!("expected {SCHEMA_VERSION}, got {}", rec.schema_version));
    }
    for (field, value) in [
        ("id", &rec.id),
        ("sequence_id", &rec.sequence_id),
        ("object_id", &rec.object_id),
        ("goal_text", &rec.goal_text),
    ] {
        if value.trim().is_empty() {
            report.push(field, "empty");
        }
    }
    check_state(&mut report, "current", &rec.current);
    check_state(&mut report, "next", &rec.next);
    if rec.current.object_id != rec.object_id || rec.next.object_id != rec.object_id {
        report.push("object_id", "states reference a different object");
    }
    let descs = [
        ("current_desc", rec.current_desc.fields()),
        ("next_desc", rec.next_desc.fields()),
        ("transition", rec.transition.fields()),
    ];
    for (name, fields) in descs {
        for (field, text) in fields {
            if text.trim().is_empty() {
                report.push(format!("{name}.{field}"), "empty sentence");
            }
        }
    }
    for (field, path) in [("current_image", &rec.current_image), ("next_image", &rec.next_image)] {
        if path.as_deref().is_some_and(|p| p.trim().is_empty()) {
            report.push(field, "empty image path");
        }
    }
    report
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::dataset::Describer;
    use crate::types::{HumanPose, ObjectPose};
    use nalgebra::Vector3;

    pub fn record(id: &str, sequence: &str) -> HoiPairRecord {
        let d = Describer::standard();
        let a = HoiState::new(
            HumanPose::zero(),
            ObjectPose::new(Vector3::new(0.1, 0.5, -0.4), Vector3::zeros()).unwrap(),
            "box",
        );
        let mut b = a.clone();
        b.object.translation.z += 0.2;
        HoiPairRecord {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            sequence_id: sequence.into(),
            source_tag: SourceTag::Synthetic,
            object_id: "box".into(),
            current_desc: d.describe_state(&a).unwrap(),
            next_desc: d.describe_state(&b).unwrap(),
            transition: d.describe_transition(&a, &b).unwrap(),
            current: a,
            next: b,
            goal_text: "a person lifts the box .".into(),
            action_text: None,
            current_image: None,
            next_image: None,
            split: None,
            extra: Map::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::record;
    use super::*;

    #[test]
    fn populated_record_is_accepted() {
        assert!(validate_record(&record("r0", "s0")).is_ok());
    }

    #[test]
    fn empty_interaction_sentence_is_reported() {
        let mut r = record("r0", "s0");
        r.current_desc.interaction_state.clear();
        let report = validate_record(&r);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "current_desc.interaction_state");
    }

    #[test]
    fn nan_pose_is_reported() {
        let mut r = record("r0", "s0");
        let mut p = *r.current.human.params();
        p[5] = f64::NAN;
        r.current.human = crate::types::HumanPose::from_raw(p);
        let report = validate_record(&r);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].field, "current.human");
    }

    #[test]
    fn object_mismatch_is_reported() {
        let mut r = record("r0", "s0");
        r.next.object_id = "ball".into();
        assert!(validate_record(&r).violations.iter().any(|v| v.field == "object_id"));
    }
}
