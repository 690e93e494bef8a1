//! Rule-based fine-grained describer: quantized pose features rendered through
//! the grammar tables.

use nalgebra::{Matrix3, Vector3};

use super::grammar::GrammarConfig;
use crate::error::{HoiError, Result};
use crate::kinematics::{transform_object_points, AssetLibrary, Kinematics, SkeletonTemplate};
use crate::rotation::{matrix_to_axis_angle, rotation_matrix};
use crate::types::{BodyPart, FineGrainedDescription, HoiState, TransitionDescription};

const LEFT: usize = 0;
const RIGHT: usize = 1;

// (shoulder, elbow, wrist, hand, hip, knee, ankle, foot) per side
const SIDE_JOINTS: [[usize; 8]; 2] = [[16, 18, 20, 22, 1, 4, 7, 10], [17, 19, 21, 23, 2, 5, 8, 11]];

fn deg(rad: f64) -> f64 {
    rad.to_degrees()
}

fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Left-positive heading of a horizontal direction; 0 = +y.
fn heading(v: &Vector3<f64>) -> f64 {
    deg((-v.x).atan2(v.y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Posture {
    Standing,
    Sitting,
    Crouching,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactCategory {
    Contact,
    Near,
    Far,
}

/// Human region closest to the object and its category.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub category: ContactCategory,
    pub distance: f64,
    pub nearest: Option<BodyPart>,
    pub both_hands: bool,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ArmFeatures {
    pub elevation: f64,
    pub forward: f64,
    pub outward: f64,
    pub elbow: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HandFeatures {
    pub height: f64,
    pub forward: f64,
    pub lateral: f64,
    pub wrist: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LegFeatures {
    pub flexion: f64,
    pub knee: f64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FootFeatures {
    pub lift: f64,
    pub pitch: f64,
}

/// Interpretable pose features: angles in degrees, lengths in meters, all
/// measured in the body's own frames.
#[derive(Clone, Debug)]
pub struct PoseFeatures {
    pub lean_forward: f64,
    pub facing: f64,
    pub head_pitch: f64,
    pub head_yaw: f64,
    pub arms: [ArmFeatures; 2],
    pub hands: [HandFeatures; 2],
    pub legs: [LegFeatures; 2],
    pub feet: [FootFeatures; 2],
}

#[derive(Clone, Debug)]
pub struct ObjectFeatures {
    pub translation: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub bottom_above_floor: f64,
    pub center_above_floor: f64,
    pub distance: f64,
    pub bearing: f64,
    pub tilt: f64,
}

/// Deterministic stand-in for a vision-language annotator.
#[derive(Clone, Debug)]
pub struct Describer {
    pub skeleton: SkeletonTemplate,
    pub assets: AssetLibrary,
    pub grammar: GrammarConfig,
    floor: f64,
    rest_foot_z: [f64; 2],
}

impl Describer {
    pub fn new(skeleton: SkeletonTemplate, assets: AssetLibrary, grammar: GrammarConfig) -> Self {
        let floor = skeleton.floor_height();
        let rest = skeleton.forward(&crate::types::HumanPose::zero());
        let rest_foot_z = [rest.positions[10].z, rest.positions[11].z];
        Self {
            skeleton,
            assets,
            grammar,
            floor,
            rest_foot_z,
        }
    }

    pub fn standard() -> Self {
        Self::new(SkeletonTemplate::default(), AssetLibrary::standard(), GrammarConfig::default())
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Every word a description or transition can contain.
    pub fn words(&self) -> std::collections::BTreeSet<String> {
        let mut out = self.grammar.words();
        let parts = BodyPart::DESCRIBED.iter().map(|p| p.phrase().to_string());
        let nouns = self.assets.ids().filter_map(|id| self.assets.get(id).ok()).map(|a| a.noun.clone());
        for text in parts.chain(nouns) {
            out.extend(text.split_whitespace().map(str::to_string));
        }
        out
    }

    pub fn pose_features(&self, kin: &Kinematics, theta: &crate::types::HumanPose) -> PoseFeatures {
        let root = kin.world_rotations[0];
        let torso = kin.world_rotations[9];
        let to_root = |v: Vector3<f64>| root.transpose() * v;
        let to_torso = |v: Vector3<f64>| torso.transpose() * v;
        let p = &kin.positions;

        let up = to_root(torso * Vector3::z());
        let lean_forward = deg(up.y.atan2(up.z));
        let facing = heading(&(root * Vector3::y()));

        let head_fwd = to_torso(kin.world_rotations[15] * Vector3::y());
        let head_pitch = deg(head_fwd.z.clamp(-1.0, 1.0).asin());
        let head_yaw = heading(&head_fwd);

        let mut arms = [ArmFeatures::default(); 2];
        let mut hands = [HandFeatures::default(); 2];
        let mut legs = [LegFeatures::default(); 2];
        let mut feet = [FootFeatures::default(); 2];
        for side in [LEFT, RIGHT] {
            let [sh, el, wr, hand, hip, knee, ankle, foot] = SIDE_JOINTS[side];
            let outward_sign = if side == LEFT { 1.0 } else { -1.0 };
            let u = to_torso(p[el] - p[sh]).normalize();
            arms[side] = ArmFeatures {
                elevation: deg(u.z.clamp(-1.0, 1.0).asin()),
                forward: deg(u.y.clamp(-1.0, 1.0).asin()),
                outward: u.x * outward_sign,
                elbow: deg(theta.joint(el).norm()),
            };
            let h = to_root(p[hand] - p[0]);
            hands[side] = HandFeatures {
                height: h.z,
                forward: h.y,
                lateral: h.x,
                wrist: deg(theta.joint(wr).norm()),
            };
            let thigh = to_root(p[knee] - p[hip]);
            legs[side] = LegFeatures {
                flexion: deg(thigh.y.atan2(-thigh.z)),
                knee: deg(theta.joint(knee).norm()),
            };
            feet[side] = FootFeatures {
                lift: to_root(p[foot] - p[0]).z - self.rest_foot_z[side],
                pitch: deg(theta.joint(ankle).x),
            };
        }
        PoseFeatures {
            lean_forward,
            facing,
            head_pitch,
            head_yaw,
            arms,
            hands,
            legs,
            feet,
        }
    }

    fn posture(&self, f: &PoseFeatures) -> Posture {
        let hip = (f.legs[0].flexion + f.legs[1].flexion) / 2.0;
        let knee = (f.legs[0].knee + f.legs[1].knee) / 2.0;
        if hip >= self.grammar.sit_hip_deg && knee >= self.grammar.sit_knee_deg {
            Posture::Sitting
        } else if knee >= self.grammar.sit_knee_deg {
            Posture::Crouching
        } else {
            Posture::Standing
        }
    }

    pub fn object_features(&self, state: &HoiState, kin: &Kinematics) -> Result<ObjectFeatures> {
        let asset = self.assets.get(&state.object_id)?;
        let rotation = rotation_matrix(&state.object.rotation);
        let t = state.object.translation;
        let up = rotation * Vector3::z();
        let half = Vector3::from(asset.half_extents);
        // lowest bounding-box corner after rotation
        let reach_down = (rotation.row(2).abs() * half)[0];
        let rel = kin.world_rotations[0].transpose() * (t - kin.positions[0]);
        Ok(ObjectFeatures {
            translation: t,
            rotation,
            bottom_above_floor: t.z - reach_down - self.floor,
            center_above_floor: t.z - self.floor,
            distance: (rel.x * rel.x + rel.y * rel.y).sqrt(),
            bearing: heading(&rel),
            tilt: deg(up.z.clamp(-1.0, 1.0).acos()),
        })
    }

    /// Nearest body region to the object surface, by capsule distance.
    pub fn interaction(&self, state: &HoiState, kin: &Kinematics) -> Result<Interaction> {
        let asset = self.assets.get(&state.object_id)?;
        let pts: Vec<Vector3<f64>> = transform_object_points(&asset.points, &state.object)?.iter().collect();
        let mut best = (f64::INFINITY, None);
        let mut hands = [f64::INFINITY; 2];
        for seg in self.skeleton.all_segments() {
            let (a, b) = self.skeleton.segment_endpoints(kin, seg);
            let ab = b - a;
            let len2 = ab.dot(&ab);
            let r = self.skeleton.capsule_radii[seg.joint];
            let d = pts
                .iter()
                .map(|q| {
                    let t = if len2 > 0.0 { ((q - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    (q - (a + ab * t)).norm()
                })
                .fold(f64::INFINITY, f64::min)
                - r;
            let d = d.max(0.0);
            let part = self.skeleton.part_of_joint(seg.joint);
            if d < best.0 {
                best = (d, part);
            }
            match part {
                Some(BodyPart::LeftHand) => hands[0] = hands[0].min(d),
                Some(BodyPart::RightHand) => hands[1] = hands[1].min(d),
                _ => {}
            }
        }
        let g = &self.grammar;
        let category = if best.0 < g.contact_m {
            ContactCategory::Contact
        } else if best.0 < g.near_m {
            ContactCategory::Near
        } else {
            ContactCategory::Far
        };
        Ok(Interaction {
            category,
            distance: best.0,
            nearest: best.1,
            both_hands: hands.iter().all(|d| *d < g.contact_m),
        })
    }

    fn region_phrase(&self, part: Option<BodyPart>) -> &str {
        match part {
            Some(p) => p.phrase(),
            None => self.grammar.phrase("torso"),
        }
    }

    pub fn describe_state(&self, state: &HoiState) -> Result<FineGrainedDescription> {
        let g = &self.grammar;
        let kin = self.skeleton.forward(&state.human);
        let f = self.pose_features(&kin, &state.human);
        let noun = self.assets.get(&state.object_id)?.noun.clone();

        let posture = match self.posture(&f) {
            Posture::Standing => g.phrase("standing"),
            Posture::Sitting => g.phrase("sitting"),
            Posture::Crouching => g.phrase("crouching"),
        };
        let whole_body = g.fill(
            "whole_body",
            &[
                ("posture", posture),
                ("lean", g.table("lean_forward").phrase(f.lean_forward)),
                ("facing", g.table("facing").phrase(f.facing)),
            ],
        );
        let head = g.fill(
            "head",
            &[
                ("pitch", g.table("head_pitch").phrase(f.head_pitch)),
                ("yaw", g.table("head_yaw").phrase(f.head_yaw)),
            ],
        );

        let arm = |side: usize, part: BodyPart| {
            let a = f.arms[side];
            let elev_table = g.table("arm_elevation");
            let idx = elev_table.index(a.elevation);
            let vertical = idx == 0 || idx == elev_table.edges.len();
            let elevation = elev_table.phrase(a.elevation);
            let elbow = g.table("elbow").phrase(a.elbow);
            if vertical {
                g.fill("arm_vertical", &[("part", part.phrase()), ("elevation", elevation), ("elbow", elbow)])
            } else {
                let dir_table = g.table("arm_direction");
                let dir = if dir_table.index(a.forward) == 1 && a.outward < 0.0 {
                    g.phrase("across_body")
                } else {
                    dir_table.phrase(a.forward)
                };
                g.fill(
                    "arm",
                    &[("part", part.phrase()), ("elevation", elevation), ("direction", dir), ("elbow", elbow)],
                )
            }
        };
        let hand = |side: usize, part: BodyPart| {
            let h = f.hands[side];
            g.fill(
                "hand",
                &[
                    ("part", part.phrase()),
                    ("height", g.table("hand_height").phrase(h.height)),
                    ("forward", g.table("hand_forward").phrase(h.forward)),
                    ("wrist", g.table("wrist").phrase(h.wrist)),
                ],
            )
        };
        let leg = |side: usize, part: BodyPart| {
            let l = f.legs[side];
            g.fill(
                "leg",
                &[
                    ("part", part.phrase()),
                    ("flexion", g.table("hip_flexion").phrase(l.flexion)),
                    ("knee", g.table("knee").phrase(l.knee)),
                ],
            )
        };
        let foot = |side: usize, part: BodyPart| {
            let ft = f.feet[side];
            g.fill(
                "foot",
                &[
                    ("part", part.phrase()),
                    ("lift", g.table("foot_lift").phrase(ft.lift)),
                    ("pitch", g.table("foot_pitch").phrase(ft.pitch)),
                ],
            )
        };

        let o = self.object_features(state, &kin)?;
        let height = if o.bottom_above_floor < 0.05 {
            g.phrase("on_ground")
        } else {
            g.table("object_height").phrase(o.center_above_floor)
        };
        let object_state = g.fill(
            "object",
            &[
                ("noun", &noun),
                ("height", height),
                ("distance", g.table("object_distance").phrase(o.distance)),
                ("direction", g.table("object_direction").phrase(o.bearing)),
                ("tilt", g.table("object_tilt").phrase(o.tilt)),
            ],
        );

        let inter = self.interaction(state, &kin)?;
        let interaction_state = match inter.category {
            ContactCategory::Contact if inter.both_hands => g.fill("contact_both", &[("noun", &noun)]),
            ContactCategory::Contact => g.fill(
                "contact",
                &[("part", self.region_phrase(inter.nearest)), ("noun", &noun)],
            ),
            ContactCategory::Near => g.fill(
                "near",
                &[("part", self.region_phrase(inter.nearest)), ("noun", &noun)],
            ),
            ContactCategory::Far => g.fill("far", &[("noun", &noun)]),
        };

        Ok(FineGrainedDescription {
            whole_body,
            head,
            left_arm: arm(LEFT, BodyPart::LeftArm),
            right_arm: arm(RIGHT, BodyPart::RightArm),
            left_hand: hand(LEFT, BodyPart::LeftHand),
            right_hand: hand(RIGHT, BodyPart::RightHand),
            left_leg: leg(LEFT, BodyPart::LeftLeg),
            right_leg: leg(RIGHT, BodyPart::RightLeg),
            left_foot: foot(LEFT, BodyPart::LeftFoot),
            right_foot: foot(RIGHT, BodyPart::RightFoot),
            object_state,
            interaction_state,
        })
    }

    /// Renders a movement sentence from `(verb pair key, delta, angular)` clauses.
    fn movement(&self, subject: &str, clauses: &[(&str, f64, bool)]) -> String {
        let g = &self.grammar;
        let words: Vec<String> = clauses
            .iter()
            .filter_map(|(verbs, delta, angular)| {
                let mag = g.magnitude(*delta, *angular)?;
                let pair = g.verbs(verbs);
                let verb = if *delta > 0.0 { &pair[0] } else { &pair[1] };
                Some(format!("{verb} {mag}"))
            })
            .collect();
        if words.is_empty() {
            g.fill("still", &[("subject", subject)])
        } else {
            g.fill("movement", &[("subject", subject), ("clauses", &words.join(" and "))])
        }
    }

    pub fn describe_transition(&self, a: &HoiState, b: &HoiState) -> Result<TransitionDescription> {
        if a.object_id != b.object_id {
            return Err(HoiError::Domain(format!(
                "transition between different objects {} and {}",
                a.object_id, b.object_id
            )));
        }
        let g = &self.grammar;
        let noun = self.assets.get(&a.object_id)?.noun.clone();
        let (ka, kb) = (self.skeleton.forward(&a.human), self.skeleton.forward(&b.human));
        let (fa, fb) = (self.pose_features(&ka, &a.human), self.pose_features(&kb, &b.human));

        let whole_body = self.movement(
            "person",
            &[
                ("lean", fb.lean_forward - fa.lean_forward, true),
                ("turn", wrap_deg(fb.facing - fa.facing), true),
            ],
        );
        let head = self.movement(
            BodyPart::Head.phrase(),
            &[
                ("head_pitch", fb.head_pitch - fa.head_pitch, true),
                ("turn", wrap_deg(fb.head_yaw - fa.head_yaw), true),
            ],
        );
        let arm = |s: usize, part: BodyPart| {
            let (x, y) = (fa.arms[s], fb.arms[s]);
            self.movement(
                part.phrase(),
                &[
                    ("arm_elevation", y.elevation - x.elevation, true),
                    ("arm_swing", y.forward - x.forward, true),
                    ("elbow", y.elbow - x.elbow, true),
                ],
            )
        };
        let hand = |s: usize, part: BodyPart| {
            let (x, y) = (fa.hands[s], fb.hands[s]);
            self.movement(
                part.phrase(),
                &[
                    ("hand_height", y.height - x.height, false),
                    ("hand_forward", y.forward - x.forward, false),
                    ("hand_lateral", y.lateral - x.lateral, false),
                ],
            )
        };
        let leg = |s: usize, part: BodyPart| {
            let (x, y) = (fa.legs[s], fb.legs[s]);
            self.movement(
                part.phrase(),
                &[("hip", y.flexion - x.flexion, true), ("knee", y.knee - x.knee, true)],
            )
        };
        let foot = |s: usize, part: BodyPart| {
            self.movement(part.phrase(), &[("foot", fb.feet[s].lift - fa.feet[s].lift, false)])
        };

        let (oa, ob) = (self.object_features(a, &ka)?, self.object_features(b, &kb)?);
        let dt = ob.translation - oa.translation;
        let rel = matrix_to_axis_angle(&(ob.rotation * oa.rotation.transpose()));
        let object_movement = self.movement(
            &noun,
            &[
                ("object_z", dt.z, false),
                ("object_y", dt.y, false),
                ("object_x", dt.x, false),
                ("object_yaw", deg(rel.z), true),
                ("object_tilt", ob.tilt - oa.tilt, true),
            ],
        );

        let (ia, ib) = (self.interaction(a, &ka)?, self.interaction(b, &kb)?);
        use ContactCategory::*;
        let interaction_change = match (ia.category, ib.category) {
            (x, y) if x == y => g.fill("interaction_still", &[("noun", &noun)]),
            (_, Contact) => g.fill("touch", &[("part", self.region_phrase(ib.nearest)), ("noun", &noun)]),
            (Contact, _) => g.fill("release", &[("part", self.region_phrase(ia.nearest)), ("noun", &noun)]),
            (Far, Near) => g.fill("approach", &[("noun", &noun)]),
            _ => g.fill("retreat", &[("noun", &noun)]),
        };

        Ok(TransitionDescription {
            whole_body,
            head,
            left_arm: arm(LEFT, BodyPart::LeftArm),
            right_arm: arm(RIGHT, BodyPart::RightArm),
            left_hand: hand(LEFT, BodyPart::LeftHand),
            right_hand: hand(RIGHT, BodyPart::RightHand),
            left_leg: leg(LEFT, BodyPart::LeftLeg),
            right_leg: leg(RIGHT, BodyPart::RightLeg),
            left_foot: foot(LEFT, BodyPart::LeftFoot),
            right_foot: foot(RIGHT, BodyPart::RightFoot),
            object_movement,
            interaction_change,
        })
    }
}
