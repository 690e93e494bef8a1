//! Core of the fine-grained human-object interaction toolkit: state types and
//! their offset algebra, the articulated body model, the synthetic annotated
//! dataset pipeline, and evaluation metrics.

pub mod dataset;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod rotation;
pub mod types;

pub use error::{HoiError, Result};
pub use types::{
    apply_offset, state_offset, BodyPart, FineGrainedDescription, HoiOffset, HoiState, HumanPose,
    ObjectPose, TransitionDescription, HUMAN_DIM, NUM_JOINTS, OBJECT_DIM,
};
