//! Text and geometry metrics and report files.

pub mod geometry;
pub mod report;
pub mod text;

pub use geometry::{chamfer, chamfer_raw, eval_state, PartwiseReport, METERS_TO_CM};
pub use report::{write_sidecar, ReportSidecar, RunReport, RunScore};
pub use text::{bleu4, rouge, text_score, RougeVariant, TextScore};
