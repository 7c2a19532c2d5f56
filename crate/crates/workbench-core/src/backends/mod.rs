//! Decision backends: a scripted replayer, a rule-based planner, and a remote
//! chat-completions client, plus token/cost accounting.

pub mod planner;
pub mod remote;
pub mod scripted;
pub mod tokens;

pub use planner::PlannerBackend;
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::{EpisodeScript, PlanStep, PlanStepKind, ScriptedBackend};
pub use tokens::{cost_cents, estimate_tokens, ModelPrice, PriceTable};
