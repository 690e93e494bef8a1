//! Scripted synthetic interaction clips.
//!
//! A clip is a list of body keyframes expressed in interpretable angles
//! (arm elevation and swing, spine bend, hip flexion, ...). Consecutive
//! keyframes are interpolated with enough steps that no joint parameter moves
//! more than `max_step` radians per step. The object is either static or
//! rigidly attached to the hands during a segment.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};
use crate::kinematics::{AssetLibrary, Kinematics, SkeletonTemplate};
use crate::rotation::{matrix_to_axis_angle, rot_x, rot_y, rot_z};
use crate::types::{HoiState, HumanPose, ObjectPose, HUMAN_DIM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionFamily {
    Reach,
    Lift,
    Place,
    Push,
    Sit,
}

impl MotionFamily {
    pub const ALL: [MotionFamily; 5] = [
        MotionFamily::Reach,
        MotionFamily::Lift,
        MotionFamily::Place,
        MotionFamily::Push,
        MotionFamily::Sit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionFamily::Reach => "reach",
            MotionFamily::Lift => "lift",
            MotionFamily::Place => "place",
            MotionFamily::Push => "push",
            MotionFamily::Sit => "sit",
        }
    }

    /// Assets this family can be scripted with.
    pub fn compatible_objects(self) -> &'static [&'static str] {
        match self {
            MotionFamily::Reach => &["box", "ball", "bottle"],
            MotionFamily::Lift => &["box", "ball", "bottle"],
            MotionFamily::Place => &["box", "ball", "bottle"],
            MotionFamily::Push => &["box", "table", "chair"],
            MotionFamily::Sit => &["chair", "stool"],
        }
    }

    /// Goal sentence for a clip of this family.
    pub fn goal_text(self, noun: &str) -> String {
        match self {
            MotionFamily::Reach => format!("a person reaches for the {noun} ."),
            MotionFamily::Lift => format!("a person lifts the {noun} ."),
            MotionFamily::Place => format!("a person puts down the {noun} ."),
            MotionFamily::Push => format!("a person pushes the {noun} ."),
            MotionFamily::Sit => format!("a person sits on the {noun} ."),
        }
    }
}

impl fmt::Display for MotionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionFamily {
    type Err = HoiError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| HoiError::Config(format!("unknown motion family {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub family: String,
    pub object_id: String,
    /// Largest per-step change of any pose parameter (radians).
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

fn default_max_step() -> f64 {
    0.2
}

impl MotionConfig {
    pub fn new(family: MotionFamily, object_id: &str) -> Self {
        Self {
            family: family.name().into(),
            object_id: object_id.into(),
            max_step: default_max_step(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Start,
    Approach,
    Lift,
    Lower,
    Release,
    Push,
    Settle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub family: MotionFamily,
    pub object_id: String,
    pub states: Vec<HoiState>,
    /// Phase of the segment that produced each state.
    pub phases: Vec<Phase>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct ArmSpec {
    /// Upper-arm elevation: -90° hanging, 0 horizontal.
    elevation: f64,
    /// Horizontal swing: 0 to the side, 90° forward.
    swing: f64,
    elbow: f64,
    wrist: f64,
}

/// Interpretable body configuration; angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct BodySpec {
    root_yaw: f64,
    spine_bend: f64,
    head_pitch: f64,
    head_yaw: f64,
    arms: [ArmSpec; 2],
    hip: [f64; 2],
    knee: [f64; 2],
    ankle: [f64; 2],
}

const SPEC_DIM: usize = 24;

impl BodySpec {
    fn to_vec(self) -> [f64; SPEC_DIM] {
        let a = &self.arms;
        [
            self.root_yaw,
            self.spine_bend,
            self.head_pitch,
            self.head_yaw,
            a[0].elevation,
            a[0].swing,
            a[0].elbow,
            a[0].wrist,
            a[1].elevation,
            a[1].swing,
            a[1].elbow,
            a[1].wrist,
            self.hip[0],
            self.hip[1],
            self.knee[0],
            self.knee[1],
            self.ankle[0],
            self.ankle[1],
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
        ]
    }

    fn from_vec(v: &[f64; SPEC_DIM]) -> Self {
        let arm = |o: usize| ArmSpec {
            elevation: v[o],
            swing: v[o + 1],
            elbow: v[o + 2],
            wrist: v[o + 3],
        };
        BodySpec {
            root_yaw: v[0],
            spine_bend: v[1],
            head_pitch: v[2],
            head_yaw: v[3],
            arms: [arm(4), arm(8)],
            hip: [v[12], v[13]],
            knee: [v[14], v[15]],
            ankle: [v[16], v[17]],
        }
    }

    fn lerp(&self, other: &BodySpec, t: f64) -> BodySpec {
        let (a, b) = (self.to_vec(), other.to_vec());
        let mut out = [0.0; SPEC_DIM];
        for i in 0..SPEC_DIM {
            out[i] = a[i] + (b[i] - a[i]) * t;
        }
        BodySpec::from_vec(&out)
    }

    fn to_pose(self) -> HumanPose {
        let mut pose = HumanPose::zero();
        pose.set_joint(0, Vector3::new(0.0, 0.0, self.root_yaw));
        for j in [3, 6, 9] {
            pose.set_joint(j, Vector3::new(-self.spine_bend / 3.0, 0.0, 0.0));
        }
        pose.set_joint(15, matrix_to_axis_angle(&(rot_z(self.head_yaw) * rot_x(self.head_pitch))));
        for (side, (sh, el, wr)) in [(16, 18, 20), (17, 19, 21)].into_iter().enumerate() {
            let out = if side == 0 { 1.0 } else { -1.0 };
            let a = self.arms[side];
            let r = rot_z(out * a.swing) * rot_y(-out * a.elevation);
            pose.set_joint(sh, matrix_to_axis_angle(&r));
            pose.set_joint(el, Vector3::new(0.0, 0.0, out * a.elbow));
            pose.set_joint(wr, Vector3::new(0.0, 0.0, out * a.wrist));
        }
        for (side, (hip, knee, ankle)) in [(1, 4, 7), (2, 5, 8)].into_iter().enumerate() {
            pose.set_joint(hip, Vector3::new(self.hip[side], 0.0, 0.0));
            pose.set_joint(knee, Vector3::new(-self.knee[side], 0.0, 0.0));
            pose.set_joint(ankle, Vector3::new(self.ankle[side], 0.0, 0.0));
        }
        pose
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Grasp {
    BothHands,
    OneHand(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ObjectMode {
    Static,
    Attached(Grasp),
}

struct Segment {
    target: BodySpec,
    object: ObjectMode,
    phase: Phase,
}

fn grasp_anchor(kin: &Kinematics, skel: &SkeletonTemplate, grasp: Grasp) -> Vector3<f64> {
    match grasp {
        Grasp::BothHands => (kin.positions[22] + kin.positions[23]) / 2.0,
        Grasp::OneHand(side) => {
            let hand = if side == 0 { 22 } else { 23 };
            let tip = kin.world_rotations[hand] * skel.rest(hand) * skel.leaf_tip_scale;
            kin.positions[hand] + tip
        }
    }
}

/// Object center that puts its surface against the grasp anchor.
fn grasp_object_center(
    kin: &Kinematics,
    skel: &SkeletonTemplate,
    grasp: Grasp,
    half_extents: [f64; 3],
) -> Vector3<f64> {
    let anchor = grasp_anchor(kin, skel, grasp);
    match grasp {
        Grasp::BothHands => anchor,
        Grasp::OneHand(side) => {
            let hand = if side == 0 { 22 } else { 23 };
            let dir = (kin.world_rotations[hand] * skel.rest(hand)).normalize();
            anchor + dir * half_extents[1].min(half_extents[0])
        }
    }
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

struct Scripter {
    rng: ChaCha8Rng,
}

impl Scripter {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    fn degrees(&mut self, lo: f64, hi: f64) -> f64 {
        deg(self.uniform(lo, hi))
    }

    fn stance(&mut self) -> BodySpec {
        let yaw = self.degrees(-30.0, 30.0);
        let mut arms = [ArmSpec::default(); 2];
        for arm in arms.iter_mut() {
            *arm = ArmSpec {
                elevation: self.degrees(-80.0, -70.0),
                swing: self.degrees(0.0, 15.0),
                elbow: self.degrees(5.0, 20.0),
                wrist: self.degrees(0.0, 10.0),
            };
        }
        BodySpec {
            root_yaw: yaw,
            spine_bend: self.degrees(0.0, 5.0),
            head_pitch: self.degrees(-5.0, 5.0),
            head_yaw: self.degrees(-5.0, 5.0),
            arms,
            hip: [self.degrees(-3.0, 3.0), self.degrees(-3.0, 3.0)],
            knee: [self.degrees(0.0, 5.0), self.degrees(0.0, 5.0)],
            ankle: [0.0, 0.0],
        }
    }

    fn forward_arm(&mut self, elev: (f64, f64), swing: (f64, f64), elbow: (f64, f64)) -> ArmSpec {
        ArmSpec {
            elevation: self.degrees(elev.0, elev.1),
            swing: self.degrees(swing.0, swing.1),
            elbow: self.degrees(elbow.0, elbow.1),
            wrist: self.degrees(0.0, 20.0),
        }
    }
}

/// Emits a deterministic clip for `config` and `seed`.
pub fn script_motion(
    config: &MotionConfig,
    seed: u64,
    skel: &SkeletonTemplate,
    assets: &AssetLibrary,
) -> Result<MotionClip> {
    let family: MotionFamily = config.family.parse()?;
    if !family.compatible_objects().contains(&config.object_id.as_str()) {
        return Err(HoiError::Config(format!(
            "object {:?} cannot be used with family {family}",
            config.object_id
        )));
    }
    if !(config.max_step > 0.0) {
        return Err(HoiError::Config("max_step must be positive".into()));
    }
    let asset = assets.get(&config.object_id)?;
    let half = asset.half_extents;
    let mut s = Scripter {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let start = s.stance();
    let one_handed = config.object_id == "bottle";
    let side = s.rng.random_range(0..2usize);
    let grasp = if one_handed { Grasp::OneHand(side) } else { Grasp::BothHands };

    let mut segments = Vec::new();
    // pose in which the object is first touched; the object is placed there
    let contact: BodySpec;
    let mut object_yaw = start.root_yaw;
    let mut placement_override: Option<Vector3<f64>> = None;

    let reach_pose = |s: &mut Scripter, base: &BodySpec, elev: (f64, f64), bend: (f64, f64)| {
        let mut b = *base;
        b.spine_bend = s.degrees(bend.0, bend.1);
        b.head_pitch = s.degrees(-30.0, 0.0);
        match grasp {
            Grasp::BothHands => {
                let arm = s.forward_arm(elev, (72.0, 86.0), (0.0, 20.0));
                b.arms = [arm, arm];
            }
            Grasp::OneHand(side) => {
                b.arms[side] = s.forward_arm(elev, (50.0, 85.0), (0.0, 25.0));
            }
        }
        b
    };

    match family {
        MotionFamily::Reach => {
            let mut target = start;
            if s.rng.random_bool(0.5) {
                target.root_yaw += s.degrees(-40.0, 40.0);
                object_yaw = target.root_yaw;
            }
            let reach_grasp = if one_handed || s.rng.random_bool(0.5) {
                Grasp::OneHand(side)
            } else {
                Grasp::BothHands
            };
            let mut t = target;
            t.spine_bend = s.degrees(0.0, 35.0);
            t.head_pitch = s.degrees(-30.0, 0.0);
            match reach_grasp {
                Grasp::BothHands => {
                    let arm = s.forward_arm((-40.0, 10.0), (72.0, 86.0), (0.0, 20.0));
                    t.arms = [arm, arm];
                }
                Grasp::OneHand(k) => t.arms[k] = s.forward_arm((-40.0, 10.0), (50.0, 85.0), (0.0, 25.0)),
            }
            contact = t;
            let kin = skel.forward(&t.to_pose());
            placement_override = Some(grasp_object_center(&kin, skel, reach_grasp, half));
            segments.push(Segment { target: t, object: ObjectMode::Static, phase: Phase::Approach });
        }
        MotionFamily::Lift => {
            let low = reach_pose(&mut s, &start, (-50.0, -25.0), (15.0, 40.0));
            contact = low;
            segments.push(Segment { target: low, object: ObjectMode::Static, phase: Phase::Approach });
            let mut up = low;
            up.spine_bend = s.degrees(0.0, 5.0);
            up.head_pitch = s.degrees(-10.0, 10.0);
            for arm in up.arms.iter_mut() {
                if arm.swing > deg(30.0) {
                    arm.elevation = s.degrees(0.0, 25.0);
                    arm.elbow += s.degrees(0.0, 10.0);
                }
            }
            segments.push(Segment { target: up, object: ObjectMode::Attached(grasp), phase: Phase::Lift });
        }
        MotionFamily::Place => {
            let carry = reach_pose(&mut s, &start, (-15.0, 10.0), (0.0, 5.0));
            // clip starts already holding the object
            contact = carry;
            let mut down = carry;
            down.spine_bend = s.degrees(20.0, 45.0);
            down.head_pitch = s.degrees(-35.0, -10.0);
            for arm in down.arms.iter_mut() {
                if arm.swing > deg(30.0) {
                    arm.elevation = s.degrees(-55.0, -30.0);
                }
            }
            segments.push(Segment { target: down, object: ObjectMode::Attached(grasp), phase: Phase::Lower });
            let mut back = start;
            back.spine_bend = s.degrees(5.0, 20.0);
            segments.push(Segment { target: back, object: ObjectMode::Static, phase: Phase::Release });
        }
        MotionFamily::Push => {
            let mut t = start;
            t.spine_bend = s.degrees(0.0, 10.0);
            let arm = s.forward_arm((-20.0, 10.0), (74.0, 86.0), (40.0, 70.0));
            t.arms = [arm, arm];
            contact = t;
            segments.push(Segment { target: t, object: ObjectMode::Static, phase: Phase::Approach });
            let mut push = t;
            push.spine_bend = s.degrees(20.0, 40.0);
            for arm in push.arms.iter_mut() {
                arm.elbow = s.degrees(0.0, 15.0);
            }
            let lead = s.rng.random_range(0..2usize);
            push.hip[lead] = s.degrees(15.0, 35.0);
            push.knee[lead] = s.degrees(10.0, 30.0);
            segments.push(Segment {
                target: push,
                object: ObjectMode::Attached(Grasp::BothHands),
                phase: Phase::Push,
            });
            if s.rng.random_bool(0.5) {
                let mut rest = start;
                rest.spine_bend = s.degrees(5.0, 15.0);
                segments.push(Segment { target: rest, object: ObjectMode::Static, phase: Phase::Release });
            }
        }
        MotionFamily::Sit => {
            let mut lean = start;
            lean.spine_bend = s.degrees(15.0, 35.0);
            lean.hip = [s.degrees(40.0, 60.0); 2];
            lean.knee = [s.degrees(40.0, 60.0); 2];
            for arm in lean.arms.iter_mut() {
                *arm = ArmSpec {
                    elevation: s.degrees(-45.0, -20.0),
                    swing: s.degrees(40.0, 75.0),
                    elbow: s.degrees(10.0, 40.0),
                    wrist: s.degrees(0.0, 15.0),
                };
            }
            segments.push(Segment { target: lean, object: ObjectMode::Static, phase: Phase::Lower });
            let mut seat = lean;
            let hip = s.degrees(78.0, 95.0);
            let knee = s.degrees(78.0, 95.0);
            seat.hip = [hip, hip];
            seat.knee = [knee, knee];
            seat.spine_bend = s.degrees(0.0, 12.0);
            for arm in seat.arms.iter_mut() {
                arm.elevation = s.degrees(-65.0, -45.0);
                arm.swing = s.degrees(45.0, 80.0);
            }
            segments.push(Segment { target: seat, object: ObjectMode::Static, phase: Phase::Settle });
            contact = seat;
            let kin = skel.forward(&seat.to_pose());
            let thighs = (kin.positions[1] + kin.positions[4] + kin.positions[2] + kin.positions[5]) / 4.0;
            let seat_top = thighs.z - skel.capsule_radii[1];
            // seat surface sits 0.02 below the chair's bounding-box center
            let seat_offset = if config.object_id == "chair" { 0.005 } else { 0.225 };
            placement_override = Some(Vector3::new(thighs.x, thighs.y, seat_top - seat_offset));
        }
    }

    let contact_kin = skel.forward(&contact.to_pose());
    let center = placement_override
        .unwrap_or_else(|| grasp_object_center(&contact_kin, skel, grasp, half));
    let center = if family == MotionFamily::Push {
        let fwd = rot_z(contact.root_yaw) * Vector3::y();
        center + fwd * (half[1] + 0.06)
    } else {
        center
    };
    let object_rotation = Vector3::new(0.0, 0.0, object_yaw);
    let mut object = ObjectPose::new(center, object_rotation)?;

    let mut states = Vec::new();
    let mut phases = Vec::new();
    let mut body = if family == MotionFamily::Place { contact } else { start };
    let push_state = |pose: HumanPose, object: ObjectPose, phase: Phase, states: &mut Vec<HoiState>, phases: &mut Vec<Phase>| -> Result<()> {
        states.push(HoiState::new(pose.canonicalized()?, object.canonicalized()?, config.object_id.clone()));
        phases.push(phase);
        Ok(())
    };
    push_state(body.to_pose(), object, Phase::Start, &mut states, &mut phases)?;

    for seg in segments {
        let poses = interpolate(&body, &seg.target, config.max_step, &mut s.rng);
        let offset = match seg.object {
            ObjectMode::Attached(g) => {
                let kin = skel.forward(&body.to_pose());
                Some((g, object.translation - grasp_anchor(&kin, skel, g)))
            }
            ObjectMode::Static => None,
        };
        for pose in poses {
            if let Some((g, off)) = offset {
                let kin = skel.forward(&pose);
                object.translation = grasp_anchor(&kin, skel, g) + off;
            }
            push_state(pose, object, seg.phase, &mut states, &mut phases)?;
        }
        body = seg.target;
    }

    Ok(MotionClip {
        family,
        object_id: config.object_id.clone(),
        states,
        phases,
    })
}

/// Poses strictly after `a` up to and including `b`, each step within `max_step`.
fn interpolate(a: &BodySpec, b: &BodySpec, max_step: f64, rng: &mut ChaCha8Rng) -> Vec<HumanPose> {
    let (va, vb) = (a.to_vec(), b.to_vec());
    let span = va
        .iter()
        .zip(&vb)
        .map(|(x, y)| (y - x).abs())
        .fold(0.0, f64::max);
    let speed: f64 = rng.random_range(0.6..1.0);
    let mut steps = ((span / (max_step * speed)).ceil() as usize).max(1);
    loop {
        let poses: Vec<HumanPose> = (1..=steps)
            .map(|i| a.lerp(b, i as f64 / steps as f64).to_pose())
            .collect();
        let mut prev = a.to_pose();
        let ok = poses.iter().all(|p| {
            let within = (0..HUMAN_DIM).all(|k| (p.params()[k] - prev.params()[k]).abs() <= max_step);
            prev = *p;
            within
        });
        if ok {
            return poses;
        }
        steps *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(family: MotionFamily, object: &str, seed: u64) -> MotionClip {
        let skel = SkeletonTemplate::default();
        script_motion(&MotionConfig::new(family, object), seed, &skel, &AssetLibrary::standard()).unwrap()
    }

    #[test]
    fn lift_raises_object_monotonically() {
        for seed in 0..40 {
            for object in ["box", "ball", "bottle"] {
                let c = clip(MotionFamily::Lift, object, seed);
                let zs: Vec<f64> = c
                    .states
                    .iter()
                    .zip(&c.phases)
                    .enumerate()
                    .filter(|(i, (_, p))| **p == Phase::Lift || c.phases.get(i + 1) == Some(&Phase::Lift))
                    .map(|(_, (s, _))| s.object.translation.z)
                    .collect();
                assert!(zs.len() >= 2);
                for w in zs.windows(2) {
                    assert!(w[1] > w[0], "seed {seed} {object}: {zs:?}");
                }
            }
        }
    }

    #[test]
    fn scripts_are_deterministic() {
        for family in MotionFamily::ALL {
            let object = family.compatible_objects()[0];
            assert_eq!(clip(family, object, 7), clip(family, object, 7));
        }
    }

    #[test]
    fn per_step_delta_is_bounded() {
        for family in MotionFamily::ALL {
            for &object in family.compatible_objects() {
                for seed in 0..10 {
                    let c = clip(family, object, seed);
                    for w in c.states.windows(2) {
                        for k in 0..HUMAN_DIM {
                            let d = (w[1].human.params()[k] - w[0].human.params()[k]).abs();
                            assert!(d <= 0.2 + 1e-12, "{family} {object} {seed}: {d}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_family_is_config_error() {
        let cfg = MotionConfig {
            family: "dance".into(),
            object_id: "box".into(),
            max_step: 0.2,
        };
        let err = script_motion(&cfg, 0, &SkeletonTemplate::default(), &AssetLibrary::standard()).unwrap_err();
        assert!(matches!(err, HoiError::Config(_)));
    }

    #[test]
    fn states_are_valid_and_share_object() {
        for family in MotionFamily::ALL {
            let object = family.compatible_objects()[0];
            let c = clip(family, object, 3);
            assert!(c.states.len() >= 3);
            for s in &c.states {
                s.validate().unwrap();
                assert_eq!(s.object_id, object);
            }
        }
    }
}
