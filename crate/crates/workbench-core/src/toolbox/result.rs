//! The uniform tool envelope: every tool returns a [`ToolResult`]; errors are
//! data the agent observes, never aborts.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Opaque pointer to an object held by the episode's handle store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectHandle {
    pub id: String,
    pub kind: HandleKind,
    /// Name of the tool that produced it ("seed" for pre-loaded case images).
    pub origin: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HandleKind {
    Image,
    Mask,
    Report,
}

impl HandleKind {
    pub fn name(self) -> &'static str {
        match self {
            HandleKind::Image => "image",
            HandleKind::Mask => "mask",
            HandleKind::Report => "report",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolStatus {
    Ok,
    Error,
}

/// Error tags tools report through the envelope.
pub mod error_kind {
    pub const NOT_FOUND: &str = "not_found";
    pub const BAD_HANDLE: &str = "bad_handle";
    pub const WRONG_KIND: &str = "wrong_kind";
    pub const BAD_ARGUMENT: &str = "bad_argument";
    pub const MISSING_INPUT: &str = "missing_input";
    pub const PRECONDITION_FAILED: &str = "precondition_failed";
    pub const GRID_ERROR: &str = "grid_error";
}

/// Envelope carried back to the agent: a text-serializable payload plus any
/// object handles the tool produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub payload: Map<String, Value>,
    pub handles: Vec<ObjectHandle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
}

impl ToolResult {
    pub fn ok(payload: Map<String, Value>, handles: Vec<ObjectHandle>) -> Self {
        ToolResult {
            status: ToolStatus::Ok,
            payload,
            handles,
            error_kind: None,
        }
    }

    pub fn error(kind: &str, message: impl Into<String>) -> Self {
        let mut payload = Map::new();
        payload.insert("message".into(), Value::String(message.into()));
        ToolResult {
            status: ToolStatus::Error,
            payload,
            handles: Vec::new(),
            error_kind: Some(kind.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }

    pub fn is_error(&self) -> bool {
        self.status == ToolStatus::Error
    }

    /// Serialized form embedded in agent observation messages.
    pub fn render(&self) -> String {
        serde_json::to_string(self).expect("tool results are always serializable")
    }
}

/// Builder-style payload map.
pub fn payload() -> Map<String, Value> {
    Map::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_results_carry_kind() {
        let r = ToolResult::error(error_kind::BAD_HANDLE, "obj_9 was never issued");
        assert!(r.is_error());
        assert_eq!(r.error_kind.as_deref(), Some("bad_handle"));
        assert!(r.render().contains("obj_9"));
    }

    #[test]
    fn ok_results_have_no_kind() {
        let r = ToolResult::ok(payload(), vec![]);
        assert!(r.is_ok());
        assert!(r.error_kind.is_none());
    }
}
