//! Orthographic binary silhouettes: the toy image modality.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::assets::AssetLibrary;
use super::sampling::{part_rng, sample_segments, transform_object_points};
use super::skeleton::SkeletonTemplate;
use crate::error::{HoiError, Result};
use crate::types::HoiState;

const RENDER_SEED: u64 = 0x5EED;
const POINTS_PER_METER: f64 = 600.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    /// Unit direction the camera looks along.
    pub view_dir: [f64; 3],
    pub side: usize,
    /// Width of the square world window in meters.
    pub window: f64,
    pub center: [f64; 3],
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            view_dir: [0.0, -1.0, 0.0],
            side: 32,
            window: 2.4,
            center: [0.0, 0.0, -0.15],
        }
    }
}

impl CameraSpec {
    pub fn validate(&self) -> Result<()> {
        let d = Vector3::from(self.view_dir);
        if !d.iter().all(|v| v.is_finite()) || (d.norm() - 1.0).abs() > 1e-9 {
            return Err(HoiError::Validation("camera view_dir must be a unit vector".into()));
        }
        if self.side < 8 {
            return Err(HoiError::Validation("image side must be at least 8".into()));
        }
        if !(self.window > 0.0) {
            return Err(HoiError::Validation("camera window must be positive".into()));
        }
        Ok(())
    }

    /// Image-plane basis (right, up).
    fn basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let d = Vector3::from(self.view_dir);
        let hint = if d.z.abs() > 0.9 { Vector3::y() } else { Vector3::z() };
        let right = hint.cross(&d).normalize();
        let up = d.cross(&right);
        (right, up)
    }

    fn pixel(&self, p: &Vector3<f64>, right: &Vector3<f64>, up: &Vector3<f64>) -> Option<(usize, usize)> {
        let rel = p - Vector3::from(self.center);
        let u = (rel.dot(right) / self.window + 0.5) * self.side as f64;
        let v = (0.5 - rel.dot(up) / self.window) * self.side as f64;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (col, row) = (u.floor() as usize, v.floor() as usize);
        (col < self.side && row < self.side).then_some((row, col))
    }
}

/// Square binary occupancy grid, row-major, row 0 at the top.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub side: usize,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(side: usize) -> Self {
        Self {
            side,
            cells: vec![false; side * side],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.cells[row * self.side + col] = true;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    pub fn union(&self, other: &OccupancyGrid) -> OccupancyGrid {
        OccupancyGrid {
            side: self.side,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Plain PBM (P1) encoding.
    pub fn to_pbm(&self) -> String {
        let mut s = format!("P1\n{} {}\n", self.side, self.side);
        for row in self.cells.chunks(self.side) {
            let line: Vec<&str> = row.iter().map(|c| if *c { "1" } else { "0" }).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_pbm(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .flat_map(str::split_whitespace);
        if tokens.next() != Some("P1") {
            return Err(HoiError::Format("expected a P1 bitmap".into()));
        }
        let mut dim = || -> Result<usize> {
            tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| HoiError::Format("bad bitmap header".into()))
        };
        let (w, h) = (dim()?, dim()?);
        if w != h {
            return Err(HoiError::Format("bitmap must be square".into()));
        }
        let cells: Vec<bool> = tokens.map(|t| t == "1").collect();
        if cells.len() != w * h {
            return Err(HoiError::Format("bitmap has the wrong number of cells".into()));
        }
        Ok(Self { side: w, cells })
    }
}

fn rasterize(points: &[Vector3<f64>], cam: &CameraSpec) -> OccupancyGrid {
    let (right, up) = cam.basis();
    let mut grid = OccupancyGrid::empty(cam.side);
    for p in points {
        if let Some((r, c)) = cam.pixel(p, &right, &up) {
            grid.set(r, c);
        }
    }
    grid
}

/// Human and object silhouettes rendered separately.
pub fn render_layers(
    state: &HoiState,
    skel: &SkeletonTemplate,
    assets: &AssetLibrary,
    cam: &CameraSpec,
) -> Result<(OccupancyGrid, OccupancyGrid)> {
    cam.validate()?;
    state.validate()?;
    let asset = assets.get(&state.object_id)?;
    let segments = skel.all_segments();
    let total: f64 = segments.iter().map(|s| skel.segment_rest_vector(*s).norm()).sum();
    let n = (total * POINTS_PER_METER).ceil() as usize;
    let mut rng = part_rng(RENDER_SEED, 0);
    let human = sample_segments(&state.human, skel, &segments, n, &mut rng);
    let object: Vec<_> = transform_object_points(&asset.points, &state.object)?.iter().collect();
    Ok((rasterize(&human, cam), rasterize(&object, cam)))
}

pub fn render_silhouette(
    state: &HoiState,
    skel: &SkeletonTemplate,
    assets: &AssetLibrary,
    cam: &CameraSpec,
) -> Result<OccupancyGrid> {
    let (h, o) = render_layers(state, skel, assets, cam)?;
    Ok(h.union(&o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{HumanPose, ObjectPose};

    fn state(object_at: Vector3<f64>) -> HoiState {
        HoiState::new(
            HumanPose::zero(),
            ObjectPose::new(object_at, Vector3::zeros()).unwrap(),
            "box",
        )
    }

    #[test]
    fn zero_pose_render_is_not_empty() {
        let skel = SkeletonTemplate::default();
        let grid = render_silhouette(&state(Vector3::new(0.0, 0.6, -0.8)), &skel, &AssetLibrary::standard(), &CameraSpec::default()).unwrap();
        assert!(grid.count() > 20);
        assert_eq!(grid.side, 32);
    }

    #[test]
    fn identical_states_render_identically() {
        let skel = SkeletonTemplate::default();
        let assets = AssetLibrary::standard();
        let s = state(Vector3::new(0.3, 0.6, -0.5));
        let cam = CameraSpec::default();
        assert_eq!(
            render_silhouette(&s, &skel, &assets, &cam).unwrap(),
            render_silhouette(&s, &skel, &assets, &cam).unwrap()
        );
    }

    #[test]
    fn object_outside_window_leaves_only_human_pixels() {
        let skel = SkeletonTemplate::default();
        let assets = AssetLibrary::standard();
        let cam = CameraSpec::default();
        let inside = state(Vector3::new(0.6, 0.6, -0.5));
        let outside = state(Vector3::new(10.0, 0.6, -0.5));
        let (human_in, object_in) = render_layers(&inside, &skel, &assets, &cam).unwrap();
        assert!(object_in.count() > 0);
        let grid_out = render_silhouette(&outside, &skel, &assets, &cam).unwrap();
        assert_eq!(grid_out, human_in);
        let (human_out, object_out) = render_layers(&outside, &skel, &assets, &cam).unwrap();
        assert_eq!(object_out.count(), 0);
        assert_eq!(human_out, human_in);
    }

    #[test]
    fn unknown_asset_is_lookup_error() {
        let mut s = state(Vector3::zeros());
        s.object_id = "piano".into();
        let err = render_silhouette(&s, &SkeletonTemplate::default(), &AssetLibrary::standard(), &CameraSpec::default()).unwrap_err();
        assert!(matches!(err, HoiError::Lookup(_)));
    }

    #[test]
    fn camera_validation() {
        let mut cam = CameraSpec::default();
        cam.side = 4;
        assert!(cam.validate().is_err());
        let mut cam = CameraSpec::default();
        cam.view_dir = [0.0, 2.0, 0.0];
        assert!(cam.validate().is_err());
    }

    #[test]
    fn pbm_round_trip() {
        let skel = SkeletonTemplate::default();
        let grid = render_silhouette(&state(Vector3::new(0.0, 0.6, -0.8)), &skel, &AssetLibrary::standard(), &CameraSpec::default()).unwrap();
        assert_eq!(OccupancyGrid::from_pbm(&grid.to_pbm()).unwrap(), grid);
    }
}
