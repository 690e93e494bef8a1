//! Symmetric Chamfer distance and per-part state comparison.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{HoiError, Result};
use crate::kinematics::{sample_part_points, transform_object_points, AssetLibrary, PointSet, SkeletonTemplate};
use crate::types::{BodyPart, HoiState};

pub const METERS_TO_CM: f64 = 100.0;

fn directed_mean(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut sum = 0.0;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
            if d < best {
                best = d;
            }
        }
        sum += best.sqrt();
    }
    sum / a.len() as f64
}

/// Average of the two directed mean nearest-neighbour distances, in the
/// input unit.
pub fn chamfer_raw(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(HoiError::Domain("chamfer needs two non-empty point sets".into()));
    }
    Ok((directed_mean(a, b) + directed_mean(b, a)) / 2.0)
}

/// Chamfer distance in centimeters between two point sets given in meters.
pub fn chamfer(a: &PointSet, b: &PointSet) -> f64 {
    chamfer_raw(a.raw(), b.raw()).expect("point sets are non-empty") * METERS_TO_CM
}

/// Per-part Chamfer distances (cm) in report column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartwiseReport {
    pub head: f64,
    pub left_arm: f64,
    pub right_arm: f64,
    pub left_hand: f64,
    pub right_hand: f64,
    pub left_leg: f64,
    pub right_leg: f64,
    pub object: Option<f64>,
    pub averaged: f64,
}

impl PartwiseReport {
    pub fn from_parts(parts: [f64; 7], object: Option<f64>) -> Self {
        let mut r = PartwiseReport {
            head: parts[0],
            left_arm: parts[1],
            right_arm: parts[2],
            left_hand: parts[3],
            right_hand: parts[4],
            left_leg: parts[5],
            right_leg: parts[6],
            object,
            averaged: 0.0,
        };
        r.averaged = r.present().iter().sum::<f64>() / r.present().len() as f64;
        r
    }

    pub fn parts(&self) -> [f64; 7] {
        [
            self.head,
            self.left_arm,
            self.right_arm,
            self.left_hand,
            self.right_hand,
            self.left_leg,
            self.right_leg,
        ]
    }

    pub fn part(&self, p: BodyPart) -> Option<f64> {
        BodyPart::EVALUATED
            .iter()
            .position(|q| *q == p)
            .map(|i| self.parts()[i])
    }

    fn present(&self) -> Vec<f64> {
        let mut v = self.parts().to_vec();
        v.extend(self.object);
        v
    }

    /// Same report with the object column dropped and the average recomputed.
    pub fn without_object(&self) -> Self {
        Self::from_parts(self.parts(), None)
    }

    /// Column-wise mean. Object is kept only when every report has it.
    pub fn mean(reports: &[PartwiseReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(HoiError::Domain("cannot average zero reports".into()));
        }
        let n = reports.len() as f64;
        let mut parts = [0.0; 7];
        for r in reports {
            for (acc, v) in parts.iter_mut().zip(r.parts()) {
                *acc += v;
            }
        }
        parts.iter_mut().for_each(|v| *v /= n);
        let object = reports
            .iter()
            .map(|r| r.object)
            .collect::<Option<Vec<f64>>>()
            .map(|v| v.iter().sum::<f64>() / n);
        Ok(Self::from_parts(parts, object))
    }
}

/// Compares a predicted state with ground truth part by part.
pub fn eval_state(
    pred: &HoiState,
    gt: &HoiState,
    skel: &SkeletonTemplate,
    assets: &AssetLibrary,
    n_points: usize,
    seed: u64,
) -> Result<PartwiseReport> {
    if pred.object_id != gt.object_id {
        return Err(HoiError::Domain(format!(
            "object mismatch: {} vs {}",
            pred.object_id, gt.object_id
        )));
    }
    let mut parts = [0.0; 7];
    for (slot, part) in parts.iter_mut().zip(BodyPart::EVALUATED) {
        let a = sample_part_points(&pred.human, skel, part.key(), n_points, seed)?;
        let b = sample_part_points(&gt.human, skel, part.key(), n_points, seed)?;
        *slot = chamfer(&a, &b);
    }
    let asset = assets.get(&gt.object_id)?;
    let a = transform_object_points(&asset.points, &pred.object)?;
    let b = transform_object_points(&asset.points, &gt.object)?;
    Ok(PartwiseReport::from_parts(parts, Some(chamfer(&a, &b))))
}

/// Translates every point of a set.
pub fn translate(points: &PointSet, by: Vector3<f64>) -> PointSet {
    PointSet::new(points.iter().map(|p| p + by).collect()).expect("non-empty")
}
