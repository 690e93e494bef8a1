//! Axis-angle helpers.
//!
//! An axis-angle vector encodes a rotation by its direction (the axis) and its
//! norm (the angle in radians). Every rotation has exactly one representative
//! with angle in `[0, π)`; at angle `π` the two antipodal axes describe the
//! same rotation and we keep the one whose first nonzero component is positive.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Rotation3, Vector3};

use crate::error::{HoiError, Result};

/// Width of the band around `π` treated as the antipodal tie.
const PI_TIE_EPS: f64 = 1e-12;

pub fn canonicalize_rotation(r: Vector3<f64>) -> Result<Vector3<f64>> {
    if !r.iter().all(|c| c.is_finite()) {
        return Err(HoiError::Validation(format!(
            "non-finite axis-angle vector {:?}",
            r.as_slice()
        )));
    }
    let angle = r.norm();
    if angle == 0.0 {
        return Ok(Vector3::zeros());
    }
    if angle < PI - PI_TIE_EPS {
        return Ok(r);
    }
    if angle <= PI + PI_TIE_EPS {
        return Ok(positive_first(r));
    }
    let mut v = r;
    let mut a = angle;
    if angle >= TAU {
        a = angle.rem_euclid(TAU);
        if a == 0.0 {
            return Ok(Vector3::zeros());
        }
        v = r * (a / angle);
        if a < PI - PI_TIE_EPS {
            return Ok(v);
        }
        if a <= PI + PI_TIE_EPS {
            return Ok(positive_first(v));
        }
    }
    // angle in (π, 2π): flip the axis, use the complementary angle
    let flipped = v * (-(TAU - a) / a);
    if flipped.norm() >= PI - PI_TIE_EPS {
        return Ok(positive_first(flipped));
    }
    Ok(flipped)
}

fn positive_first(v: Vector3<f64>) -> Vector3<f64> {
    match v.iter().find(|c| **c != 0.0) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Rotation matrix of an axis-angle vector (Rodrigues' formula).
pub fn rotation_matrix(r: &Vector3<f64>) -> Matrix3<f64> {
    if r.x == 0.0 && r.y == 0.0 && r.z == 0.0 {
        return Matrix3::identity();
    }
    Rotation3::new(*r).into_inner()
}

/// Axis-angle of a rotation matrix, angle in `[0, π]`.
pub fn matrix_to_axis_angle(m: &Matrix3<f64>) -> Vector3<f64> {
    Rotation3::from_matrix_unchecked(*m).scaled_axis()
}

/// Angle of a rotation matrix in radians.
pub fn rotation_angle(m: &Matrix3<f64>) -> f64 {
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

pub fn rot_x(angle: f64) -> Matrix3<f64> {
    rotation_matrix(&Vector3::new(angle, 0.0, 0.0))
}

pub fn rot_y(angle: f64) -> Matrix3<f64> {
    rotation_matrix(&Vector3::new(0.0, angle, 0.0))
}

pub fn rot_z(angle: f64) -> Matrix3<f64> {
    rotation_matrix(&Vector3::new(0.0, 0.0, angle))
}
