//! Procedural object assets: surface point clouds in each object's local frame
//! (origin at the bounding-box center, +z up, front facing +y).

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::sampling::PointSet;
use crate::error::{HoiError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAsset {
    pub id: String,
    /// Noun used by the describer ("box").
    pub noun: String,
    /// Half extents of the bounding box.
    pub half_extents: [f64; 3],
    pub points: PointSet,
}

impl ObjectAsset {
    pub fn half_height(&self) -> f64 {
        self.half_extents[2]
    }
}

#[derive(Clone, Debug, Default)]
pub struct AssetLibrary {
    assets: BTreeMap<String, ObjectAsset>,
}

impl AssetLibrary {
    pub fn standard() -> Self {
        let mut lib = Self::default();
        for asset in [box_asset(), ball_asset(), bottle_asset(), chair_asset(), table_asset(), stool_asset()] {
            lib.insert(asset);
        }
        lib
    }

    pub fn insert(&mut self, asset: ObjectAsset) {
        self.assets.insert(asset.id.clone(), asset);
    }

    pub fn get(&self, id: &str) -> Result<&ObjectAsset> {
        self.assets
            .get(id)
            .ok_or_else(|| HoiError::Lookup(format!("object asset {id:?} not found")))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.assets.keys().map(String::as_str)
    }
}

fn lattice(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let n = (((hi - lo) / spacing).round() as usize).max(1);
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// Points on the six faces of an axis-aligned cuboid.
fn cuboid_surface(center: Vector3<f64>, half: Vector3<f64>, spacing: f64) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    let xs = lattice(-half.x, half.x, spacing);
    let ys = lattice(-half.y, half.y, spacing);
    let zs = lattice(-half.z, half.z, spacing);
    for &s in &[-1.0, 1.0] {
        for &x in &xs {
            for &y in &ys {
                out.push(center + Vector3::new(x, y, s * half.z));
            }
        }
        for &x in &xs {
            for &z in &zs[1..zs.len() - 1] {
                out.push(center + Vector3::new(x, s * half.y, z));
            }
        }
        for &y in &ys[1..ys.len() - 1] {
            for &z in &zs[1..zs.len() - 1] {
                out.push(center + Vector3::new(s * half.x, y, z));
            }
        }
    }
    out
}

fn fibonacci_sphere(radius: f64, n: usize) -> Vec<Vector3<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), r * th.sin(), z) * radius
        })
        .collect()
}

fn cylinder_surface(radius: f64, half_height: f64, rings: usize, per_ring: usize) -> Vec<Vector3<f64>> {
    let mut out = Vec::new();
    for i in 0..rings {
        let z = -half_height + 2.0 * half_height * i as f64 / (rings - 1) as f64;
        for k in 0..per_ring {
            let a = TAU * k as f64 / per_ring as f64;
            out.push(Vector3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    for &s in &[-1.0, 1.0] {
        out.push(Vector3::new(0.0, 0.0, s * half_height));
        for k in 0..per_ring / 2 {
            let a = TAU * k as f64 / (per_ring / 2) as f64;
            out.push(Vector3::new(0.5 * radius * a.cos(), 0.5 * radius * a.sin(), s * half_height));
        }
    }
    out
}

fn make(id: &str, noun: &str, half: [f64; 3], points: Vec<Vector3<f64>>) -> ObjectAsset {
    ObjectAsset {
        id: id.into(),
        noun: noun.into(),
        half_extents: half,
        points: PointSet::new(points).expect("procedural asset is non-empty"),
    }
}

fn box_asset() -> ObjectAsset {
    let half = Vector3::new(0.2, 0.15, 0.15);
    make("box", "box", half.into(), cuboid_surface(Vector3::zeros(), half, 0.05))
}

fn ball_asset() -> ObjectAsset {
    make("ball", "ball", [0.12; 3], fibonacci_sphere(0.12, 200))
}

fn bottle_asset() -> ObjectAsset {
    make("bottle", "bottle", [0.04, 0.04, 0.125], cylinder_surface(0.04, 0.125, 8, 16))
}

fn legs(centers: &[(f64, f64)], z: f64, half: Vector3<f64>, spacing: f64) -> Vec<Vector3<f64>> {
    centers
        .iter()
        .flat_map(|&(x, y)| cuboid_surface(Vector3::new(x, y, z), half, spacing))
        .collect()
}

fn chair_asset() -> ObjectAsset {
    let mut pts = cuboid_surface(Vector3::new(0.0, 0.0, -0.02), Vector3::new(0.225, 0.225, 0.025), 0.05);
    pts.extend(cuboid_surface(Vector3::new(0.0, -0.2, 0.225), Vector3::new(0.225, 0.025, 0.225), 0.05));
    let corners = [(-0.2, -0.2), (-0.2, 0.2), (0.2, -0.2), (0.2, 0.2)];
    pts.extend(legs(&corners, -0.25, Vector3::new(0.02, 0.02, 0.2), 0.05));
    make("chair", "chair", [0.225, 0.225, 0.45], pts)
}

fn table_asset() -> ObjectAsset {
    let mut pts = cuboid_surface(Vector3::new(0.0, 0.0, 0.35), Vector3::new(0.4, 0.3, 0.025), 0.06);
    let corners = [(-0.37, -0.27), (-0.37, 0.27), (0.37, -0.27), (0.37, 0.27)];
    pts.extend(legs(&corners, -0.025, Vector3::new(0.025, 0.025, 0.35), 0.06));
    make("table", "table", [0.4, 0.3, 0.375], pts)
}

fn stool_asset() -> ObjectAsset {
    let mut pts = cuboid_surface(Vector3::new(0.0, 0.0, 0.2), Vector3::new(0.18, 0.18, 0.025), 0.05);
    let corners = [(-0.15, -0.15), (-0.15, 0.15), (0.15, -0.15), (0.15, 0.15)];
    pts.extend(legs(&corners, -0.025, Vector3::new(0.02, 0.02, 0.2), 0.05));
    make("stool", "stool", [0.18, 0.18, 0.225], pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_assets_are_bounded() {
        let lib = AssetLibrary::standard();
        for id in lib.ids() {
            let a = lib.get(id).unwrap();
            assert!(a.points.len() >= 50 && a.points.len() <= 700, "{id}: {}", a.points.len());
            for p in a.points.iter() {
                for k in 0..3 {
                    assert!(p[k].abs() <= a.half_extents[k] + 1e-9, "{id} point {p:?}");
                }
            }
        }
    }

    #[test]
    fn missing_asset_is_lookup_error() {
        assert!(matches!(AssetLibrary::standard().get("piano"), Err(HoiError::Lookup(_))));
    }
}
