//! Benchmark construction: synthetic phantom cases and image–prompt–answer
//! items with per-topology expected plans across three task tiers, plus the
//! dataset file format and the episode harness.

pub mod dataset;
pub mod oracle;
pub mod phantom;
pub mod runner;
pub mod suite;
pub mod templates;

pub use dataset::{load_dataset, save_dataset, AnswerField, BenchmarkItem, CaseRecord, Dataset};
pub use phantom::{build_ground_truth, LesionSpec, PhantomSpec};
pub use suite::{generate_suite, SuiteConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("spec error: {0}")]
    Spec(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(String),
}
