//! Episode trace: one ordered record per step, with token accounting.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::agents::AgentName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    ToolCall,
    ToolError,
    Handoff,
    SubagentRequest,
    SubagentResponse,
    FinalAnswer,
}

impl EventKind {
    /// Actions are the steps the per-run action count and budget reason
    /// about: tool calls, handoffs, sub-agent requests, and the final answer.
    pub fn is_action(self) -> bool {
        matches!(
            self,
            EventKind::ToolCall
                | EventKind::Handoff
                | EventKind::SubagentRequest
                | EventKind::FinalAnswer
        )
    }
}

/// Step payload: the tool and canonical arguments, the handoff target, the
/// request/response bodies, or the answer text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventDetail {
    Tool {
        tool: String,
        args: Map<String, Value>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Handoff {
        target: String,
    },
    Request {
        target: String,
        task: String,
        inputs: Vec<String>,
        expected_outputs: Vec<String>,
    },
    Response {
        from: String,
        status: String,
        summary: String,
    },
    Answer {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub agent: AgentName,
    pub kind: EventKind,
    pub detail: EventDetail,
    pub tokens_in: u64,
    pub tokens_out: u64,
    /// True for the kernel-synthesized budget-exceeded final answer, which is
    /// recorded but not counted as an action.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
}

/// The full episode record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, mut event: TraceEvent) {
        event.seq = self.events.len() as u64 + 1;
        self.events.push(event);
    }

    /// Count of actions (tool calls, handoffs, sub-agent requests, the final
    /// answer), excluding errored attempts and the synthetic budget final.
    pub fn actions(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind.is_action() && !e.synthetic)
            .count()
    }

    pub fn errors(&self) -> usize {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::ToolError)
            .count()
    }

    pub fn tokens_in(&self) -> u64 {
        self.events.iter().map(|e| e.tokens_in).sum()
    }

    pub fn tokens_out(&self) -> u64 {
        self.events.iter().map(|e| e.tokens_out).sum()
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.events.iter().rev().find_map(|e| match &e.detail {
            EventDetail::Answer { text } if e.kind == EventKind::FinalAnswer => {
                Some(text.as_str())
            }
            _ => None,
        })
    }

    /// Line-delimited export: one JSON record per event.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let mut events = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(line)?);
        }
        Ok(Trace { events })
    }

    /// Sequence numbers strictly increase and exactly one non-synthetic or
    /// synthetic final answer closes a completed episode.
    pub fn validate(&self) -> Result<(), String> {
        for (i, e) in self.events.iter().enumerate() {
            if e.seq != i as u64 + 1 {
                return Err(format!("seq {} at position {}", e.seq, i));
            }
        }
        let finals = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::FinalAnswer)
            .count();
        if finals != 1 {
            return Err(format!("expected exactly one final answer, found {finals}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(kind: EventKind) -> TraceEvent {
        TraceEvent {
            seq: 0,
            agent: AgentName::Generalist,
            kind,
            detail: match kind {
                EventKind::FinalAnswer => EventDetail::Answer { text: "done".into() },
                _ => EventDetail::Tool {
                    tool: "list_labels".into(),
                    args: Map::new(),
                    error: None,
                },
            },
            tokens_in: 10,
            tokens_out: 2,
            synthetic: false,
        }
    }

    #[test]
    fn actions_exclude_errors_and_responses() {
        let mut t = Trace::default();
        t.push(event(EventKind::ToolCall));
        t.push(event(EventKind::ToolError));
        t.push(event(EventKind::SubagentResponse));
        t.push(event(EventKind::FinalAnswer));
        assert_eq!(t.actions(), 2);
        assert_eq!(t.errors(), 1);
        assert_eq!(t.tokens_in(), 40);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut t = Trace::default();
        t.push(event(EventKind::ToolCall));
        t.push(event(EventKind::FinalAnswer));
        let text = t.to_jsonl();
        let back = Trace::from_jsonl(&text).unwrap();
        assert_eq!(back, t);
        back.validate().unwrap();
    }
}
