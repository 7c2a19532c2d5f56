//! Order-invariant tool-call fidelity: multiset matching of executed actions
//! against the expected plan.

use serde_json::{Map, Value};

use crate::backends::scripted::{flatten, EpisodeScript, PlanStepKind};
use crate::kernel::trace::{EventDetail, EventKind, Trace};

/// Canonical action key: (kind, tool or target name, plan-named args).
#[derive(Debug, Clone, PartialEq)]
pub struct ActionKey {
    pub kind: &'static str,
    pub name: String,
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FidelityScore {
    pub precision: f64,
    pub recall: f64,
    pub matched: usize,
    pub extra: usize,
    pub missing: usize,
}

/// Expected action keys from a plan: the final answer is excluded (it is
/// always present), and only plan-named (pinned) arguments constrain matches,
/// so run-specific handle ids never spoil them.
pub fn expected_actions(plan: &EpisodeScript) -> Vec<ActionKey> {
    flatten(&plan.steps)
        .into_iter()
        .filter_map(|step| match &step.kind {
            PlanStepKind::ToolCall {
                tool, pinned_args, ..
            } => Some(ActionKey {
                kind: "tool",
                name: tool.clone(),
                args: pinned_args.clone(),
            }),
            PlanStepKind::Handoff { target } => Some(ActionKey {
                kind: "handoff",
                name: target.as_str().to_string(),
                args: Map::new(),
            }),
            PlanStepKind::Delegate { target, .. } => Some(ActionKey {
                kind: "request",
                name: target.as_str().to_string(),
                args: Map::new(),
            }),
            PlanStepKind::FinalAnswer { .. } => None,
        })
        .collect()
}

/// Executed action keys from a trace: successful tool calls, handoffs, and
/// sub-agent requests. Errored attempts are tracked by the error count, not
/// fidelity; responses and final answers are not actions.
pub fn trace_actions(trace: &Trace) -> Vec<ActionKey> {
    trace
        .events
        .iter()
        .filter_map(|e| match (&e.kind, &e.detail) {
            (EventKind::ToolCall, EventDetail::Tool { tool, args, .. }) => Some(ActionKey {
                kind: "tool",
                name: tool.clone(),
                args: args.clone(),
            }),
            (EventKind::Handoff, EventDetail::Handoff { target }) => Some(ActionKey {
                kind: "handoff",
                name: target.clone(),
                args: Map::new(),
            }),
            (EventKind::SubagentRequest, EventDetail::Request { target, .. }) => Some(ActionKey {
                kind: "request",
                name: target.clone(),
                args: Map::new(),
            }),
            _ => None,
        })
        .collect()
}

/// Numeric-tolerant value equality (1 == 1.0; strings and structures exact).
fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(u, v)| value_eq(u, v))
        }
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len()
                && x.iter()
                    .all(|(k, u)| y.get(k).map(|v| value_eq(u, v)).unwrap_or(false))
        }
        _ => a == b,
    }
}

fn key_matches(expected: &ActionKey, predicted: &ActionKey) -> bool {
    expected.kind == predicted.kind
        && expected.name == predicted.name
        && expected
            .args
            .iter()
            .all(|(k, v)| predicted.args.get(k).map(|p| value_eq(v, p)).unwrap_or(false))
}

/// Compute precision/recall of the trace against the plan, order ignored.
/// An empty predicted set scores precision 0 unless the expected set is also
/// empty (then 1); the mirror convention holds for recall.
pub fn plan_fidelity(trace: &Trace, plan: &EpisodeScript) -> FidelityScore {
    let expected = expected_actions(plan);
    let predicted = trace_actions(trace);
    let mut consumed = vec![false; predicted.len()];
    let mut matched = 0usize;
    for exp in &expected {
        if let Some(i) = predicted
            .iter()
            .enumerate()
            .position(|(i, p)| !consumed[i] && key_matches(exp, p))
        {
            consumed[i] = true;
            matched += 1;
        }
    }
    let precision = if predicted.is_empty() {
        if expected.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        matched as f64 / predicted.len() as f64
    };
    let recall = if expected.is_empty() {
        1.0
    } else {
        matched as f64 / expected.len() as f64
    };
    FidelityScore {
        precision,
        recall,
        matched,
        extra: predicted.len() - matched,
        missing: expected.len() - matched,
    }
}

/// Number of ToolError events, counted per occurrence.
pub fn count_errors(trace: &Trace) -> usize {
    trace.errors()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::scripted::PlanStep;
    use crate::kernel::agents::AgentName;
    use crate::kernel::trace::TraceEvent;
    use serde_json::json;

    fn tool_event(tool: &str, args: &[(&str, Value)], error: Option<&str>) -> TraceEvent {
        TraceEvent {
            seq: 0,
            agent: AgentName::Generalist,
            kind: if error.is_some() {
                EventKind::ToolError
            } else {
                EventKind::ToolCall
            },
            detail: EventDetail::Tool {
                tool: tool.into(),
                args: args.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
                error: error.map(str::to_string),
            },
            tokens_in: 0,
            tokens_out: 0,
            synthetic: false,
        }
    }

    fn final_event() -> TraceEvent {
        TraceEvent {
            seq: 0,
            agent: AgentName::Generalist,
            kind: EventKind::FinalAnswer,
            detail: EventDetail::Answer { text: "x".into() },
            tokens_in: 0,
            tokens_out: 0,
            synthetic: false,
        }
    }

    fn plan(tools: &[&str]) -> EpisodeScript {
        let mut steps: Vec<PlanStep> = tools
            .iter()
            .map(|t| PlanStep::tool(AgentName::Generalist, t, &[], &[], &[]))
            .collect();
        steps.push(PlanStep::final_answer(AgentName::Generalist, "done"));
        EpisodeScript { steps }
    }

    fn trace(tools: &[&str]) -> Trace {
        let mut t = Trace::default();
        for tool in tools {
            t.push(tool_event(tool, &[("image", json!("obj_1"))], None));
        }
        t.push(final_event());
        t
    }

    #[test]
    fn identical_trace_scores_one() {
        let p = plan(&["skull_strip", "register", "segment_pathology"]);
        let t = trace(&["skull_strip", "register", "segment_pathology"]);
        let s = plan_fidelity(&t, &p);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn extra_action_lowers_precision_only() {
        // Expected {strip, register, segment}; predicted adds list_labels.
        let p = plan(&["skull_strip", "register", "segment_pathology"]);
        let t = trace(&["skull_strip", "register", "segment_pathology", "list_labels"]);
        let s = plan_fidelity(&t, &p);
        assert_eq!(s.precision, 0.75);
        assert_eq!(s.recall, 1.0);
        assert_eq!(s.extra, 1);
    }

    #[test]
    fn permutations_score_identically() {
        let p = plan(&["a", "b", "c"]);
        let t1 = trace(&["a", "b", "c"]);
        let t2 = trace(&["c", "a", "b"]);
        assert_eq!(plan_fidelity(&t1, &p), plan_fidelity(&t2, &p));
    }

    #[test]
    fn pinned_args_constrain_matching() {
        let mut steps = vec![PlanStep::tool(
            AgentName::Generalist,
            "list_labels",
            &[("scope", json!("anatomy"))],
            &[],
            &[],
        )];
        steps.push(PlanStep::final_answer(AgentName::Generalist, "done"));
        let p = EpisodeScript { steps };
        let mut t = Trace::default();
        t.push(tool_event("list_labels", &[("scope", json!("lobes"))], None));
        t.push(final_event());
        let s = plan_fidelity(&t, &p);
        assert_eq!(s.matched, 0);
        assert_eq!(s.precision, 0.0);

        let mut t2 = Trace::default();
        t2.push(tool_event("list_labels", &[("scope", json!("anatomy"))], None));
        t2.push(final_event());
        assert_eq!(plan_fidelity(&t2, &p).precision, 1.0);
    }

    #[test]
    fn errors_are_counted_not_matched() {
        let p = plan(&["skull_strip"]);
        let mut t = Trace::default();
        t.push(tool_event("skull_stripp", &[], Some("unknown_tool")));
        t.push(tool_event("skull_strip", &[], None));
        t.push(final_event());
        assert_eq!(count_errors(&t), 1);
        let s = plan_fidelity(&t, &p);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn empty_predicted_conventions() {
        let p = plan(&["skull_strip"]);
        let mut t = Trace::default();
        t.push(final_event());
        let s = plan_fidelity(&t, &p);
        assert_eq!(s.precision, 0.0);
        assert_eq!(s.recall, 0.0);

        let empty_plan = EpisodeScript {
            steps: vec![PlanStep::final_answer(AgentName::Generalist, "done")],
        };
        let s = plan_fidelity(&t, &empty_plan);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
    }
}
