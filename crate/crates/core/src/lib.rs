//! Toolkit for radiology-report summarization corpora.
//!
//! - [`ingest`]: split free-text reports into sections, attach disease labels
//! - [`textnorm`]: normalization, word tokens, sentences
//! - [`rouge`]: ROUGE-1/2/L/Lsum scoring and corpus aggregation
//! - [`augment`]: seeded field-order permutation schedules and input rendering
//! - [`dataset`]: completeness filtering, train/test split, collation, length stats
//! - [`evaluation`]: baselines and disease-stratified analysis
//! - [`loss`]: embedding-distance and cross-entropy objective evaluators

pub mod augment;
pub mod dataset;
pub mod evaluation;
pub mod ingest;
pub mod loss;
pub mod rouge;
pub mod seeding;
pub mod textnorm;

pub use augment::{ExamplePair, PermutationSchedule, ShuffleMode};
pub use ingest::{LabelValue, RadiologyReport, SectionName};
pub use rouge::{RougeReport, RougeScore, ScoreSet};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
