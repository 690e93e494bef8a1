//! Synthetic annotated interaction data: scripted motions, rule-based
//! descriptions, pair records, splits and instruction samples.

pub mod annotator;
pub mod describe;
pub mod generate;
pub mod grammar;
pub mod instruction;
pub mod jsonl;
pub mod motion;
pub mod record;
pub mod split;

pub use annotator::ExternalAnnotator;
pub use describe::Describer;
pub use generate::{generate_corpus, CorpusConfig};
pub use grammar::GrammarConfig;
pub use instruction::{generation_prompt, generation_request, to_instruction, InstructionSample, Modality, Task};
pub use jsonl::{read_jsonl, read_records, write_jsonl, write_records};
pub use motion::{script_motion, MotionClip, MotionConfig, MotionFamily, Phase};
pub use record::{validate_record, HoiPairRecord, SourceTag, Split, ValidationReport, Violation, SCHEMA_VERSION};
pub use split::{split_dataset, SplitSummary};
