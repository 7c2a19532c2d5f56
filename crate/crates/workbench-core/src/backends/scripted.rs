//! Deterministic replay backend: walks a ground-truth plan, resolving handle
//! slots against the live episode, and reproduces it exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::kernel::agents::AgentName;
use crate::kernel::episode::{
    BackendDecision, BackendError, DecisionBackend, DecisionContext, Message, Role,
    ToolInvocation,
};
use crate::kernel::protocol::InterAgentRequest;
use crate::toolbox::result::ToolResult;

/// One expected action of a ground-truth plan.
///
/// Tool arguments split into `pinned_args` (literal values the evaluation may
/// match on) and `slot_args` (handle references like "$seg_t0" that only a
/// live episode can resolve, so they never constrain matching).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub agent: AgentName,
    #[serde(flatten)]
    pub kind: PlanStepKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanStepKind {
    ToolCall {
        tool: String,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        pinned_args: Map<String, Value>,
        #[serde(default, skip_serializing_if = "Map::is_empty")]
        slot_args: Map<String, Value>,
        /// After execution, bind the i-th result handle to a slot name.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        bind: Vec<(String, usize)>,
    },
    Handoff {
        target: AgentName,
    },
    Delegate {
        target: AgentName,
        task: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        input_slots: Vec<String>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        expected_outputs: Vec<String>,
        steps: Vec<PlanStep>,
    },
    FinalAnswer {
        text: String,
    },
}

impl PlanStep {
    pub fn tool(
        agent: AgentName,
        tool: &str,
        pinned: &[(&str, Value)],
        slots: &[(&str, &str)],
        bind: &[(&str, usize)],
    ) -> Self {
        PlanStep {
            agent,
            kind: PlanStepKind::ToolCall {
                tool: tool.to_string(),
                pinned_args: pinned
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.clone()))
                    .collect(),
                slot_args: slots
                    .iter()
                    .map(|(k, v)| (k.to_string(), Value::String(format!("${v}"))))
                    .collect(),
                bind: bind.iter().map(|(s, i)| (s.to_string(), *i)).collect(),
            },
        }
    }

    pub fn handoff(agent: AgentName, target: AgentName) -> Self {
        PlanStep {
            agent,
            kind: PlanStepKind::Handoff { target },
        }
    }

    pub fn final_answer(agent: AgentName, text: &str) -> Self {
        PlanStep {
            agent,
            kind: PlanStepKind::FinalAnswer {
                text: text.to_string(),
            },
        }
    }
}

/// Flattened plan length: delegation markers count one action each, plus
/// their nested steps.
pub fn plan_len(steps: &[PlanStep]) -> usize {
    steps
        .iter()
        .map(|s| match &s.kind {
            PlanStepKind::Delegate { steps, .. } => 1 + plan_len(steps),
            _ => 1,
        })
        .sum()
}

/// Flatten a plan into the action sequence an episode should produce.
pub fn flatten(steps: &[PlanStep]) -> Vec<&PlanStep> {
    let mut out = Vec::new();
    for s in steps {
        out.push(s);
        if let PlanStepKind::Delegate { steps, .. } = &s.kind {
            out.extend(flatten(steps));
        }
    }
    out
}

/// A full per-topology plan for one benchmark item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScript {
    pub steps: Vec<PlanStep>,
}

impl EpisodeScript {
    pub fn len(&self) -> usize {
        plan_len(&self.steps)
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

struct Frame {
    steps: Vec<PlanStep>,
    pos: usize,
}

/// Replays an [`EpisodeScript`]. Handle slots are resolved from the seeded
/// inventory plus handles observed in tool results; per-agent positions are
/// implicit in the frame stack (one frame per delegation).
pub struct ScriptedBackend {
    frames: Vec<Frame>,
    bindings: BTreeMap<String, String>,
    pending_bind: Vec<(String, usize)>,
    model: String,
}

impl ScriptedBackend {
    pub fn new(script: EpisodeScript, seeded_bindings: BTreeMap<String, String>) -> Self {
        ScriptedBackend {
            frames: vec![Frame {
                steps: script.steps,
                pos: 0,
            }],
            bindings: seeded_bindings,
            pending_bind: Vec::new(),
            model: "scripted".to_string(),
        }
    }

    fn resolve(&self, v: &Value) -> Result<Value, BackendError> {
        match v {
            Value::String(s) if s.starts_with('$') => {
                let slot = &s[1..];
                self.bindings
                    .get(slot)
                    .map(|id| Value::String(id.clone()))
                    .ok_or_else(|| BackendError(format!("unresolved handle slot '${slot}'")))
            }
            other => Ok(other.clone()),
        }
    }

    /// Apply any pending handle bindings from the newest tool observation.
    fn absorb_observation(&mut self, messages: &[Message]) {
        if self.pending_bind.is_empty() {
            return;
        }
        let Some(last_tool) = messages.iter().rev().find(|m| m.role == Role::Tool) else {
            return;
        };
        if let Ok(result) = serde_json::from_str::<ToolResult>(&last_tool.content) {
            for (slot, idx) in self.pending_bind.drain(..) {
                if let Some(h) = result.handles.get(idx) {
                    self.bindings.insert(slot, h.id.clone());
                }
            }
        }
    }
}

impl DecisionBackend for ScriptedBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
        self.absorb_observation(ctx.messages);

        loop {
            let depth = self.frames.len();
            let frame = self.frames.last_mut().expect("frame stack never empties");
            if frame.pos >= frame.steps.len() {
                // A finished sub-episode reports back; the main frame always
                // ends in an explicit FinalAnswer step.
                if depth > 1 {
                    self.frames.pop();
                    return Ok(BackendDecision::Final("done".to_string()));
                }
                return Err(BackendError(
                    "script exhausted without a final answer".into(),
                ));
            }
            let step = frame.steps[frame.pos].clone();
            frame.pos += 1;

            if step.agent != ctx.agent.name {
                return Err(BackendError(format!(
                    "replay desync: step expects agent {}, kernel asked {}",
                    step.agent, ctx.agent.name
                )));
            }

            match step.kind {
                PlanStepKind::ToolCall {
                    tool,
                    pinned_args,
                    slot_args,
                    bind,
                } => {
                    let mut args = pinned_args;
                    for (k, v) in &slot_args {
                        args.insert(k.clone(), self.resolve(v)?);
                    }
                    self.pending_bind = bind;
                    return Ok(BackendDecision::ToolCalls(vec![ToolInvocation {
                        tool,
                        args,
                    }]));
                }
                PlanStepKind::Handoff { target } => {
                    return Ok(BackendDecision::Handoff(target.as_str().to_string()));
                }
                PlanStepKind::Delegate {
                    target,
                    task,
                    input_slots,
                    expected_outputs,
                    steps,
                } => {
                    let mut inputs = Vec::new();
                    for slot in &input_slots {
                        match self.bindings.get(slot) {
                            Some(id) => inputs.push(id.clone()),
                            None => inputs.push(slot.clone()),
                        }
                    }
                    self.frames.push(Frame { steps, pos: 0 });
                    return Ok(BackendDecision::Subagent(InterAgentRequest {
                        target,
                        task,
                        inputs,
                        expected_outputs,
                    }));
                }
                PlanStepKind::FinalAnswer { text } => {
                    return Ok(BackendDecision::Final(text));
                }
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}
