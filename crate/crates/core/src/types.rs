//! Value types for HOI states, offsets and descriptions.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};
use crate::rotation::canonicalize_rotation;

pub const NUM_JOINTS: usize = 24;
pub const HUMAN_DIM: usize = NUM_JOINTS * 3;
pub const OBJECT_DIM: usize = 6;

/// 24 axis-angle joint rotations, flattened; entry 0 is the root orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HumanPose {
    params: [f64; HUMAN_DIM],
}

impl HumanPose {
    pub fn zero() -> Self {
        Self {
            params: [0.0; HUMAN_DIM],
        }
    }

    /// Checked constructor: validates finiteness and canonicalizes every joint.
    pub fn new(params: [f64; HUMAN_DIM]) -> Result<Self> {
        Self::from_raw(params).canonicalized()
    }

    /// Unchecked constructor; use [`HumanPose::validate`] before trusting it.
    pub fn from_raw(params: [f64; HUMAN_DIM]) -> Self {
        Self { params }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let params: [f64; HUMAN_DIM] = values.try_into().map_err(|_| {
            HoiError::Shape(format!(
                "human pose needs {HUMAN_DIM} values, got {}",
                values.len()
            ))
        })?;
        Ok(Self::from_raw(params))
    }

    pub fn params(&self) -> &[f64; HUMAN_DIM] {
        &self.params
    }

    pub fn joint(&self, j: usize) -> Vector3<f64> {
        Vector3::new(
            self.params[3 * j],
            self.params[3 * j + 1],
            self.params[3 * j + 2],
        )
    }

    pub fn set_joint(&mut self, j: usize, r: Vector3<f64>) {
        self.params[3 * j..3 * j + 3].copy_from_slice(r.as_slice());
    }

    pub fn canonicalized(&self) -> Result<Self> {
        let mut out = *self;
        for j in 0..NUM_JOINTS {
            let c = canonicalize_rotation(self.joint(j))
                .map_err(|e| HoiError::Validation(format!("joint {j}: {e}")))?;
            out.set_joint(j, c);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.params.iter().position(|v| !v.is_finite()) {
            return Err(HoiError::Validation(format!(
                "human pose component {i} is not finite"
            )));
        }
        for j in 0..NUM_JOINTS {
            if self.joint(j).norm() > std::f64::consts::PI + 1e-9 {
                return Err(HoiError::Validation(format!(
                    "joint {j} rotation angle exceeds pi"
                )));
            }
        }
        Ok(())
    }
}

impl Default for HumanPose {
    fn default() -> Self {
        Self::zero()
    }
}

impl TryFrom<Vec<f64>> for HumanPose {
    type Error = HoiError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_slice(&v)
    }
}

impl From<HumanPose> for Vec<f64> {
    fn from(p: HumanPose) -> Self {
        p.params.to_vec()
    }
}

/// Rigid 6DoF object pose: translation (meters) then axis-angle rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ObjectPose {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl ObjectPose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        }
    }

    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            translation,
            rotation,
        };
        pose.canonicalized()
    }

    pub fn canonicalized(&self) -> Result<Self> {
        if !self.translation.iter().all(|v| v.is_finite()) {
            return Err(HoiError::Validation(
                "object translation is not finite".into(),
            ));
        }
        Ok(Self {
            translation: self.translation,
            rotation: canonicalize_rotation(self.rotation)?,
        })
    }

    pub fn to_array(&self) -> [f64; OBJECT_DIM] {
        let t = &self.translation;
        let r = &self.rotation;
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    pub fn from_array(a: [f64; OBJECT_DIM]) -> Self {
        Self {
            translation: Vector3::new(a[0], a[1], a[2]),
            rotation: Vector3::new(a[3], a[4], a[5]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(HoiError::Validation("object pose is not finite".into()));
        }
        if self.rotation.norm() > std::f64::consts::PI + 1e-9 {
            return Err(HoiError::Validation(
                "object rotation angle exceeds pi".into(),
            ));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for ObjectPose {
    type Error = HoiError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let a: [f64; OBJECT_DIM] = v.as_slice().try_into().map_err(|_| {
            HoiError::Shape(format!(
                "object pose needs {OBJECT_DIM} values, got {}",
                v.len()
            ))
        })?;
        Ok(Self::from_array(a))
    }
}

impl From<ObjectPose> for Vec<f64> {
    fn from(p: ObjectPose) -> Self {
        p.to_array().to_vec()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiState {
    pub human: HumanPose,
    pub object: ObjectPose,
    pub object_id: String,
}

impl HoiState {
    pub fn new(human: HumanPose, object: ObjectPose, object_id: impl Into<String>) -> Self {
        Self {
            human,
            object,
            object_id: object_id.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.human.validate()?;
        self.object.validate()?;
        if self.object_id.is_empty() {
            return Err(HoiError::Validation("object_id is empty".into()));
        }
        Ok(())
    }

    /// The state with every rotation in canonical form.
    pub fn canonicalized(&self) -> Result<Self> {
        Ok(Self {
            human: self.human.canonicalized()?,
            object: self.object.canonicalized()?,
            object_id: self.object_id.clone(),
        })
    }

    /// Same object pose, human in the all-zero pose.
    pub fn with_default_human(&self) -> Self {
        Self {
            human: HumanPose::zero(),
            object: self.object,
            object_id: self.object_id.clone(),
        }
    }
}

/// Componentwise parameter difference between two states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoiOffset {
    #[serde(with = "flat72")]
    pub d_theta: [f64; HUMAN_DIM],
    pub d_object: [f64; OBJECT_DIM],
}

impl HoiOffset {
    pub fn zero() -> Self {
        Self {
            d_theta: [0.0; HUMAN_DIM],
            d_object: [0.0; OBJECT_DIM],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_theta.iter().chain(&self.d_object).all(|v| v.is_finite())
    }
}

mod flat72 {
    use super::HUMAN_DIM;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; HUMAN_DIM], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; HUMAN_DIM], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.as_slice()
            .try_into()
            .map_err(|_| D::Error::custom(format!("expected {HUMAN_DIM} values")))
    }
}

/// `b − a` on the flattened 72-d and 6-d parameter vectors.
pub fn state_offset(a: &HoiState, b: &HoiState) -> Result<HoiOffset> {
    if a.object_id != b.object_id {
        return Err(HoiError::Domain(format!(
            "object mismatch: {} vs {}",
            a.object_id, b.object_id
        )));
    }
    let mut d = HoiOffset::zero();
    for ((out, x), y) in d
        .d_theta
        .iter_mut()
        .zip(a.human.params())
        .zip(b.human.params())
    {
        *out = y - x;
    }
    for ((out, x), y) in d
        .d_object
        .iter_mut()
        .zip(a.object.to_array())
        .zip(b.object.to_array())
    {
        *out = y - x;
    }
    Ok(d)
}

/// `a + d` componentwise, then canonicalized.
pub fn apply_offset(a: &HoiState, d: &HoiOffset) -> Result<HoiState> {
    let mut theta = *a.human.params();
    for (t, dt) in theta.iter_mut().zip(&d.d_theta) {
        *t += dt;
    }
    let mut obj = a.object.to_array();
    for (o, dobj) in obj.iter_mut().zip(&d.d_object) {
        *o += dobj;
    }
    if !theta.iter().chain(&obj).all(|v| v.is_finite()) {
        return Err(HoiError::Validation(
            "offset application produced non-finite parameters".into(),
        ));
    }
    Ok(HoiState {
        human: HumanPose::from_raw(theta).canonicalized()?,
        object: ObjectPose::from_array(obj).canonicalized()?,
        object_id: a.object_id.clone(),
    })
}

/// Body parts named by the fine-grained descriptions (whole body excluded).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPart {
    Head,
    LeftArm,
    RightArm,
    LeftHand,
    RightHand,
    LeftLeg,
    RightLeg,
    LeftFoot,
    RightFoot,
}

impl BodyPart {
    pub const DESCRIBED: [BodyPart; 9] = [
        BodyPart::Head,
        BodyPart::LeftArm,
        BodyPart::RightArm,
        BodyPart::LeftHand,
        BodyPart::RightHand,
        BodyPart::LeftLeg,
        BodyPart::RightLeg,
        BodyPart::LeftFoot,
        BodyPart::RightFoot,
    ];

    /// The seven parts scored by the per-part Chamfer evaluation.
    pub const EVALUATED: [BodyPart; 7] = [
        BodyPart::Head,
        BodyPart::LeftArm,
        BodyPart::RightArm,
        BodyPart::LeftHand,
        BodyPart::RightHand,
        BodyPart::LeftLeg,
        BodyPart::RightLeg,
    ];

    pub fn key(self) -> &'static str {
        match self {
            BodyPart::Head => "head",
            BodyPart::LeftArm => "left_arm",
            BodyPart::RightArm => "right_arm",
            BodyPart::LeftHand => "left_hand",
            BodyPart::RightHand => "right_hand",
            BodyPart::LeftLeg => "left_leg",
            BodyPart::RightLeg => "right_leg",
            BodyPart::LeftFoot => "left_foot",
            BodyPart::RightFoot => "right_foot",
        }
    }

    /// Words used in sentences ("right arm").
    pub fn phrase(self) -> &'static str {
        match self {
            BodyPart::Head => "head",
            BodyPart::LeftArm => "left arm",
            BodyPart::RightArm => "right arm",
            BodyPart::LeftHand => "left hand",
            BodyPart::RightHand => "right hand",
            BodyPart::LeftLeg => "left leg",
            BodyPart::RightLeg => "right leg",
            BodyPart::LeftFoot => "left foot",
            BodyPart::RightFoot => "right foot",
        }
    }

    pub fn from_key(key: &str) -> Option<BodyPart> {
        Self::DESCRIBED.into_iter().find(|p| p.key() == key)
    }
}

/// Per-part, object and interaction sentences for one state.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineGrainedDescription {
    pub whole_body: String,
    pub head: String,
    pub left_arm: String,
    pub right_arm: String,
    pub left_hand: String,
    pub right_hand: String,
    pub left_leg: String,
    pub right_leg: String,
    pub left_foot: String,
    pub right_foot: String,
    pub object_state: String,
    pub interaction_state: String,
}

/// Per-part movement sentences between two consecutive states.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDescription {
    pub whole_body: String,
    pub head: String,
    pub left_arm: String,
    pub right_arm: String,
    pub left_hand: String,
    pub right_hand: String,
    pub left_leg: String,
    pub right_leg: String,
    pub left_foot: String,
    pub right_foot: String,
    pub object_movement: String,
    pub interaction_change: String,
}

macro_rules! sentence_fields {
    ($ty:ident, $($field:ident),+) => {
        impl $ty {
            pub const FIELD_NAMES: &'static [&'static str] = &[$(stringify!($field)),+];

            /// Sentences in canonical field order.
            pub fn sentences(&self) -> Vec<&str> {
                vec![$(self.$field.as_str()),+]
            }

            pub fn fields(&self) -> Vec<(&'static str, &str)> {
                vec![$((stringify!($field), self.$field.as_str())),+]
            }

            pub fn from_sentences(sentences: &[String]) -> Result<Self> {
                let expected = Self::FIELD_NAMES.len();
                if sentences.len() != expected {
                    return Err(HoiError::Format(format!(
                        "expected {expected} sentences, found {}",
                        sentences.len()
                    )));
                }
                let mut it = sentences.iter().cloned();
                Ok(Self { $($field: it.next().unwrap()),+ })
            }

            pub fn field_mut(&mut self, name: &str) -> Option<&mut String> {
                match name {
                    $(stringify!($field) => Some(&mut self.$field),)+
                    _ => None,
                }
            }

            /// Names of fields that are empty or whitespace.
            pub fn empty_fields(&self) -> Vec<&'static str> {
                self.fields()
                    .into_iter()
                    .filter(|(_, s)| s.trim().is_empty())
                    .map(|(k, _)| k)
                    .collect()
            }

            /// All sentences joined by single spaces.
            pub fn render(&self) -> String {
                self.sentences().join(" ")
            }

            /// Inverse of [`Self::render`]: every sentence ends with a
            /// standalone `.` token and contains no other.
            pub fn parse(text: &str) -> Result<Self> {
                let sentences = split_sentences(text);
                Self::from_sentences(&sentences)
            }
        }
    };
}

sentence_fields!(
    FineGrainedDescription,
    whole_body,
    head,
    left_arm,
    right_arm,
    left_hand,
    right_hand,
    left_leg,
    right_leg,
    left_foot,
    right_foot,
    object_state,
    interaction_state
);

sentence_fields!(
    TransitionDescription,
    whole_body,
    head,
    left_arm,
    right_arm,
    left_hand,
    right_hand,
    left_leg,
    right_leg,
    left_foot,
    right_foot,
    object_movement,
    interaction_change
);

impl FineGrainedDescription {
    pub fn part(&self, part: BodyPart) -> &str {
        match part {
            BodyPart::Head => &self.head,
            BodyPart::LeftArm => &self.left_arm,
            BodyPart::RightArm => &self.right_arm,
            BodyPart::LeftHand => &self.left_hand,
            BodyPart::RightHand => &self.right_hand,
            BodyPart::LeftLeg => &self.left_leg,
            BodyPart::RightLeg => &self.right_leg,
            BodyPart::LeftFoot => &self.left_foot,
            BodyPart::RightFoot => &self.right_foot,
        }
    }
}

impl TransitionDescription {
    pub fn part(&self, part: BodyPart) -> &str {
        match part {
            BodyPart::Head => &self.head,
            BodyPart::LeftArm => &self.left_arm,
            BodyPart::RightArm => &self.right_arm,
            BodyPart::LeftHand => &self.left_hand,
            BodyPart::RightHand => &self.right_hand,
            BodyPart::LeftLeg => &self.left_leg,
            BodyPart::RightLeg => &self.right_leg,
            BodyPart::LeftFoot => &self.left_foot,
            BodyPart::RightFoot => &self.right_foot,
        }
    }
}

/// Splits text on sentence-final ` .` tokens.
fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for word in text.split(' ').filter(|w| !w.is_empty()) {
        current.push(word);
        if word == "." {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}
