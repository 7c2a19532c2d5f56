//! Orchestration core: tool registry, agent specifications, episode loop, and
//! the four topologies with the structured inter-agent protocol.

pub mod agents;
pub mod episode;
pub mod protocol;
pub mod registry;
pub mod schema;
pub mod trace;

pub use agents::{team_for, validate_team, AgentName, AgentSpec, Team, Topology};
pub use episode::{
    run_episode, BackendDecision, BackendError, DecisionBackend, DecisionContext, EpisodeResult,
    Message, Role, ToolInvocation,
};
pub use protocol::{InterAgentRequest, InterAgentResponse, ResponseStatus};
pub use registry::{canonicalize_args, ParamKind, ParamSpec, ToolDescriptor, ToolRegistry};
pub use schema::render_tool_schemas;
pub use trace::{EventDetail, EventKind, Trace, TraceEvent};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("duplicate tool name '{0}'")]
    Duplicate(String),
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("backend failure: {0}")]
    Backend(String),
}
