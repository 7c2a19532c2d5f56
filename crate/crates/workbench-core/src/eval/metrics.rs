//! Per-run metric composition: fidelity, errors, tokens, cost, and output
//! quality for one (item, topology) episode.

use serde::{Deserialize, Serialize};

use crate::backends::tokens::{cost_cents, PriceTable};
use crate::benchmark::dataset::BenchmarkItem;
use crate::kernel::agents::Topology;
use crate::kernel::trace::Trace;

use super::fidelity::{count_errors, plan_fidelity, FidelityScore};
use super::judge::{judge_answer, JudgeVerdict};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub errors: usize,
    pub actions: usize,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub cost_cents: f64,
    pub inclusion_rate: f64,
    pub accuracy: f64,
}

/// Everything evaluated for one run, exportable as one JSONL record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub item_id: String,
    pub tier: u8,
    pub topology: String,
    pub backend: String,
    pub metrics: RunMetrics,
    pub fidelity: FidelityScore,
    pub verdict: JudgeVerdict,
}

/// Evaluate one trace against its item: plan fidelity, error count,
/// token/cost accounting, and answer judging.
pub fn evaluate_run(
    trace: &Trace,
    item: &BenchmarkItem,
    topology: Topology,
    backend_model: &str,
    prices: &PriceTable,
) -> Result<RunReport, EvalError> {
    let plan = item.plan(topology).ok_or_else(|| {
        EvalError::Config(format!(
            "item {} has no expected plan for {topology}",
            item.item_id
        ))
    })?;
    let fidelity = plan_fidelity(trace, plan);
    let errors = count_errors(trace);
    let tokens_in = trace.tokens_in();
    let tokens_out = trace.tokens_out();
    let cost = cost_cents(tokens_in, tokens_out, backend_model, prices)
        .map_err(|e| EvalError::Config(e.to_string()))?;
    let answer = trace.final_answer().unwrap_or_default();
    let verdict = judge_answer(answer, &item.expected_answer);
    Ok(RunReport {
        item_id: item.item_id.clone(),
        tier: item.tier,
        topology: topology.as_str().to_string(),
        backend: backend_model.to_string(),
        metrics: RunMetrics {
            errors,
            actions: trace.actions(),
            tokens_in,
            tokens_out,
            cost_cents: cost,
            inclusion_rate: verdict.inclusion_rate(),
            accuracy: verdict.accuracy(),
        },
        fidelity,
        verdict,
    })
}
