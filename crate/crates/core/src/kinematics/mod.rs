//! Simplified articulated body: forward kinematics on a fixed 24-joint tree,
//! capsule surface sampling per body part, rigid object transforms and a
//! coarse silhouette renderer.

pub mod assets;
pub mod render;
pub mod sampling;
pub mod skeleton;

pub use assets::{AssetLibrary, ObjectAsset};
pub use render::{render_layers, render_silhouette, CameraSpec, OccupancyGrid};
pub use sampling::{sample_part_points, transform_object_points, PointSet};
pub use skeleton::{forward_kinematics, Kinematics, Segment, SkeletonTemplate};
