use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};
use crate::rotation::rotation_matrix;
use crate::types::{BodyPart, HumanPose, NUM_JOINTS};

const DEFAULT_SKELETON: &str = include_str!("../../assets/skeleton_v1.json");

fn default_tip_scale() -> f64 {
    0.5
}

/// Fixed 24-joint kinematic tree with rest offsets and capsule radii.
///
/// Each joint owns the capsule segment(s) running from it to its children; a
/// leaf joint owns a tip segment continuing its incoming bone direction,
/// scaled by `leaf_tip_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonTemplate {
    pub version: u32,
    pub parent: Vec<i64>,
    pub rest_offsets: Vec<[f64; 3]>,
    pub capsule_radii: Vec<f64>,
    #[serde(default = "default_tip_scale")]
    pub leaf_tip_scale: f64,
    pub part_map: BTreeMap<String, Vec<usize>>,
}

/// A capsule axis owned by `joint`: either towards `child` or a leaf tip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub joint: usize,
    pub child: Option<usize>,
}

/// Forward kinematics result: joint positions and accumulated world rotations.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub positions: Vec<Vector3<f64>>,
    pub world_rotations: Vec<Matrix3<f64>>,
}

fn standard_part_map() -> [(&'static str, &'static [usize]); 7] {
    [
        ("head", &[12, 15]),
        ("left_arm", &[13, 16, 18]),
        ("right_arm", &[14, 17, 19]),
        ("left_hand", &[20, 22]),
        ("right_hand", &[21, 23]),
        ("left_leg", &[1, 4, 7, 10]),
        ("right_leg", &[2, 5, 8, 11]),
    ]
}

impl Default for SkeletonTemplate {
    fn default() -> Self {
        Self::from_json(DEFAULT_SKELETON).expect("bundled skeleton template is valid")
    }
}

impl SkeletonTemplate {
    pub fn from_json(text: &str) -> Result<Self> {
        let skel: SkeletonTemplate = serde_json::from_str(text)?;
        skel.validate()?;
        Ok(skel)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("skeleton serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HoiError::Validation(m));
        if self.parent.len() != NUM_JOINTS
            || self.rest_offsets.len() != NUM_JOINTS
            || self.capsule_radii.len() != NUM_JOINTS
        {
            return bad(format!("skeleton must have {NUM_JOINTS} joints"));
        }
        if self.parent[0] != -1 {
            return bad("joint 0 must be the root (parent -1)".into());
        }
        for (i, &p) in self.parent.iter().enumerate().skip(1) {
            if p < 0 || p as usize >= i {
                return bad(format!("joint {i} has parent {p}, expected 0 <= parent < {i}"));
            }
        }
        if let Some(i) = self.capsule_radii.iter().position(|r| !(*r > 0.0)) {
            return bad(format!("capsule radius {i} must be positive"));
        }
        if self
            .rest_offsets
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return bad("rest offsets must be finite".into());
        }
        if !(self.leaf_tip_scale > 0.0) {
            return bad("leaf_tip_scale must be positive".into());
        }
        let standard = standard_part_map();
        if self.part_map.len() != standard.len() {
            return bad("part_map must cover exactly the seven evaluation parts".into());
        }
        for (name, joints) in standard {
            let got: BTreeSet<usize> = match self.part_map.get(name) {
                Some(v) => v.iter().copied().collect(),
                None => return bad(format!("part_map is missing {name}")),
            };
            if got != joints.iter().copied().collect() {
                return bad(format!("part_map[{name}] must be {joints:?}"));
            }
        }
        for (j, rest) in self.rest_offsets.iter().enumerate().skip(1) {
            if Vector3::from(*rest).norm() == 0.0 {
                return bad(format!("joint {j} has a zero-length rest offset"));
            }
        }
        Ok(())
    }

    pub fn parent_of(&self, j: usize) -> Option<usize> {
        let p = self.parent[j];
        (p >= 0).then_some(p as usize)
    }

    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..NUM_JOINTS)
            .filter(|&c| self.parent_of(c) == Some(j))
            .collect()
    }

    pub fn rest(&self, j: usize) -> Vector3<f64> {
        Vector3::from(self.rest_offsets[j])
    }

    /// True when `j` is `ancestor` or lies below it in the tree.
    pub fn is_descendant(&self, j: usize, ancestor: usize) -> bool {
        let mut cur = Some(j);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.parent_of(c);
        }
        false
    }

    pub fn segments_of_joint(&self, j: usize) -> Vec<Segment> {
        let children = self.children(j);
        if children.is_empty() {
            vec![Segment {
                joint: j,
                child: None,
            }]
        } else {
            children
                .into_iter()
                .map(|c| Segment {
                    joint: j,
                    child: Some(c),
                })
                .collect()
        }
    }

    pub fn all_segments(&self) -> Vec<Segment> {
        (0..NUM_JOINTS).flat_map(|j| self.segments_of_joint(j)).collect()
    }

    pub fn part_joints(&self, part: &str) -> Result<&[usize]> {
        self.part_map
            .get(part)
            .map(Vec::as_slice)
            .ok_or_else(|| HoiError::Domain(format!("unknown body part {part:?}")))
    }

    pub fn part_segments(&self, part: &str) -> Result<Vec<Segment>> {
        Ok(self
            .part_joints(part)?
            .iter()
            .flat_map(|&j| self.segments_of_joint(j))
            .collect())
    }

    /// Evaluation part owning joint `j`, if any (torso joints own none).
    pub fn part_of_joint(&self, j: usize) -> Option<BodyPart> {
        BodyPart::EVALUATED
            .into_iter()
            .find(|p| self.part_map[p.key()].contains(&j))
    }

    /// Segment direction in the owning joint's frame (rest pose).
    pub fn segment_rest_vector(&self, seg: Segment) -> Vector3<f64> {
        match seg.child {
            Some(c) => self.rest(c),
            None => self.rest(seg.joint) * self.leaf_tip_scale,
        }
    }

    pub fn segment_endpoints(&self, kin: &Kinematics, seg: Segment) -> (Vector3<f64>, Vector3<f64>) {
        let a = kin.positions[seg.joint];
        let b = match seg.child {
            Some(c) => kin.positions[c],
            None => a + kin.world_rotations[seg.joint] * self.segment_rest_vector(seg),
        };
        (a, b)
    }

    pub fn forward(&self, pose: &HumanPose) -> Kinematics {
        let mut positions = vec![Vector3::zeros(); NUM_JOINTS];
        let mut world_rotations = vec![Matrix3::identity(); NUM_JOINTS];
        positions[0] = self.rest(0);
        world_rotations[0] = rotation_matrix(&pose.joint(0));
        for j in 1..NUM_JOINTS {
            let p = self.parent[j] as usize;
            positions[j] = positions[p] + world_rotations[p] * self.rest(j);
            world_rotations[j] = world_rotations[p] * rotation_matrix(&pose.joint(j));
        }
        Kinematics {
            positions,
            world_rotations,
        }
    }

    /// Lowest surface point of the zero pose; used as the floor height.
    pub fn floor_height(&self) -> f64 {
        let kin = self.forward(&HumanPose::zero());
        self.all_segments()
            .into_iter()
            .map(|s| {
                let (a, b) = self.segment_endpoints(&kin, s);
                a.z.min(b.z) - self.capsule_radii[s.joint]
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Joint world positions for a pose.
pub fn forward_kinematics(pose: &HumanPose, skel: &SkeletonTemplate) -> Vec<Vector3<f64>> {
    skel.forward(pose).positions
}
