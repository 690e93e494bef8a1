use super::describe::Describer;
use crate::error::Result;
use crate::types::{FineGrainedDescription, HoiState, TransitionDescription};

/// Source of state and pair annotations. The rule-based [`Describer`] is the
/// only implementation shipped; a vision-language client can be plugged in.
pub trait ExternalAnnotator {
    fn describe_state(&self, state: &HoiState) -> Result<FineGrainedDescription>;
    fn describe_transition(&self, a: &HoiState, b: &HoiState) -> Result<TransitionDescription>;
}

impl ExternalAnnotator for Describer {
    fn describe_state(&self, state: &HoiState) -> Result<FineGrainedDescription> {
        Describer::describe_state(self, state)
    }

    fn describe_transition(&self, a: &HoiState, b: &HoiState) -> Result<TransitionDescription> {
        Describer::describe_transition(self, a, b)
    }
}
