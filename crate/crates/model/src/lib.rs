//! A small multimodal decoder-only language model with pose detokenization,
//! trained from scratch with its own reverse-mode autograd.

pub mod checkpoint;
pub mod collate;
pub mod config;
pub mod eval;
pub mod infer;
pub mod loss;
pub mod model;
pub mod params;
pub mod sample;
pub mod tape;
pub mod train;
pub mod tensor;
pub mod vocab;

pub use collate::{collate, Batch};
pub use config::ModelConfig;
pub use model::Model;
pub use sample::{ModelSample, SampleContext, Supervision};
pub use vocab::Vocabulary;
