use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::skeleton::{Segment, SkeletonTemplate};
use crate::error::{HoiError, Result};
use crate::rotation::rotation_matrix;
use crate::types::{HumanPose, ObjectPose};

/// Non-empty set of finite 3D points (meters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    points: Vec<[f64; 3]>,
}

impl PointSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(HoiError::Domain("point set must not be empty".into()));
        }
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(HoiError::Validation("point set has non-finite points".into()));
        }
        Ok(Self {
            points: points.into_iter().map(|p| [p.x, p.y, p.z]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.points[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.points.iter().map(|p| Vector3::from(*p))
    }

    pub fn raw(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.iter().sum::<Vector3<f64>>() / self.len() as f64
    }
}

fn perpendicular_basis(d: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let d = d.normalize();
    let helper = if d.x.abs() <= d.y.abs() && d.x.abs() <= d.z.abs() {
        Vector3::x()
    } else if d.y.abs() <= d.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

/// Splits `n` over `weights` by largest remainder; ties go to the lower index.
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Stratified seeded samples on the cylindrical surfaces of `segments`.
pub fn sample_segments(
    pose: &HumanPose,
    skel: &SkeletonTemplate,
    segments: &[Segment],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vector3<f64>> {
    let kin = skel.forward(pose);
    let lengths: Vec<f64> = segments
        .iter()
        .map(|s| skel.segment_rest_vector(*s).norm())
        .collect();
    let counts = allocate(n, &lengths);
    let mut out = Vec::with_capacity(n);
    for (seg, count) in segments.iter().zip(counts) {
        let (a, b) = skel.segment_endpoints(&kin, *seg);
        let rot = kin.world_rotations[seg.joint];
        let (e1, e2) = perpendicular_basis(&skel.segment_rest_vector(*seg));
        let (e1, e2) = (rot * e1, rot * e2);
        let radius = skel.capsule_radii[seg.joint];
        for k in 0..count {
            let t = (k as f64 + rng.random::<f64>()) / count as f64;
            let phi = TAU * rng.random::<f64>();
            out.push(a + (b - a) * t + (e1 * phi.cos() + e2 * phi.sin()) * radius);
        }
    }
    out
}

pub(crate) fn part_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
}

/// `n` deterministic surface points on the capsules of one evaluation part.
pub fn sample_part_points(
    pose: &HumanPose,
    skel: &SkeletonTemplate,
    part: &str,
    n: usize,
    seed: u64,
) -> Result<PointSet> {
    if n == 0 {
        return Err(HoiError::Domain("point count must be at least 1".into()));
    }
    let segments = skel.part_segments(part)?;
    let salt = part.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    let mut rng = part_rng(seed, salt);
    PointSet::new(sample_segments(pose, skel, &segments, n, &mut rng))
}

/// Rigidly moves asset points by an object pose: `p ↦ R p + t`.
pub fn transform_object_points(asset: &PointSet, pose: &ObjectPose) -> Result<PointSet> {
    pose.validate()?;
    let r = rotation_matrix(&pose.rotation);
    PointSet::new(asset.iter().map(|p| r * p + pose.translation).collect())
}
