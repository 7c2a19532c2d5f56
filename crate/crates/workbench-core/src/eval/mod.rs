//! Three-dimensional evaluation: tool-call fidelity, computational cost, and
//! output quality, plus report aggregation.

pub mod fidelity;
pub mod judge;
pub mod metrics;
pub mod report;

pub use fidelity::{count_errors, plan_fidelity, FidelityScore};
pub use judge::{judge_answer, JudgeVerdict};
pub use metrics::{evaluate_run, RunMetrics, RunReport};
pub use report::{aggregate, ReportTable};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("configuration error: {0}")]
    Config(String),
}
