//! Structured inter-agent protocol. Agents-as-tools and orchestrator modes
//! exchange only well-formed Request/Response documents; free-text messages
//! between agents are rejected.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::agents::AgentName;

/// A delegation order from one agent to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAgentRequest {
    pub target: AgentName,
    /// Verb phrase describing the job.
    pub task: String,
    /// Handle ids and named parameters the callee may use.
    pub inputs: Vec<String>,
    /// Field names the caller expects back.
    pub expected_outputs: Vec<String>,
}

impl InterAgentRequest {
    pub fn validate(&self) -> Result<(), String> {
        if self.task.trim().is_empty() {
            return Err("request task must be a non-empty verb phrase".into());
        }
        for input in &self.inputs {
            if input.trim().is_empty() {
                return Err("request inputs must be non-empty tokens".into());
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("requests serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseStatus {
    Done,
    Failed,
}

/// A callee's structured report back to its caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterAgentResponse {
    pub status: ResponseStatus,
    pub outputs: Map<String, Value>,
    pub summary: String,
}

impl InterAgentResponse {
    pub fn done(outputs: Map<String, Value>, summary: impl Into<String>) -> Self {
        InterAgentResponse {
            status: ResponseStatus::Done,
            outputs,
            summary: summary.into(),
        }
    }

    pub fn failed(detail: impl Into<String>) -> Self {
        InterAgentResponse {
            status: ResponseStatus::Failed,
            outputs: Map::new(),
            summary: detail.into(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.summary.trim().is_empty() {
            return Err("response summary must be non-empty".into());
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("responses serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_task_rejected() {
        let req = InterAgentRequest {
            target: AgentName::Segmentation,
            task: "  ".into(),
            inputs: vec![],
            expected_outputs: vec![],
        };
        assert!(req.validate().is_err());
    }

    #[test]
    fn round_trip() {
        let req = InterAgentRequest {
            target: AgentName::Preprocessing,
            task: "skull-strip and register all modalities".into(),
            inputs: vec!["obj_1".into(), "obj_2".into()],
            expected_outputs: vec!["handles".into()],
        };
        req.validate().unwrap();
        let back: InterAgentRequest = serde_json::from_str(&req.render()).unwrap();
        assert_eq!(back, req);
    }
}
