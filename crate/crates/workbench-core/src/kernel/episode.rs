//! The episode loop: the backend decides, the kernel executes tool calls,
//! handoffs, and sub-agent delegations, appends observations, and repeats
//! until a final answer or the action budget.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::backends::tokens::estimate_tokens;
use crate::toolbox::result::ToolResult;

use super::agents::{AgentName, AgentSpec, Team, Topology};
use super::protocol::{InterAgentRequest, InterAgentResponse, ResponseStatus};
use super::registry::{canonicalize_args, ToolRegistry};
use super::schema::render_tool_schemas;
use super::trace::{EventDetail, EventKind, Trace, TraceEvent};
use super::KernelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

/// One transcript entry.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }

    pub fn tool(content: impl Into<String>) -> Self {
        Message {
            role: Role::Tool,
            content: content.into(),
        }
    }
}

/// A single tool call the backend wants executed.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ToolInvocation {
    pub tool: String,
    pub args: Map<String, Value>,
}

/// What the decision-maker chose to do next. Exactly one variant per decision;
/// `ToolCalls` is nonempty when chosen.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BackendDecision {
    ToolCalls(Vec<ToolInvocation>),
    Handoff(String),
    Subagent(InterAgentRequest),
    Final(String),
}

impl BackendDecision {
    fn render(&self) -> String {
        serde_json::to_string(self).expect("decisions serialize")
    }
}

/// Transport or protocol failure below the decision layer. Remote backends
/// retry internally; an error reaching the kernel is final for the episode.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// Everything a backend may look at when deciding.
pub struct DecisionContext<'a> {
    pub agent: &'a AgentSpec,
    pub topology: Topology,
    pub messages: &'a [Message],
    pub schema_doc: &'a str,
    /// True inside a delegated sub-episode (the callee sees only its request).
    pub in_subepisode: bool,
}

impl DecisionContext<'_> {
    /// Deterministic estimate of the rendered context this decision consumed.
    pub fn token_estimate(&self) -> u64 {
        let mut total = estimate_tokens(&self.agent.instructions);
        total += estimate_tokens(self.schema_doc);
        for m in self.messages {
            total += estimate_tokens(&m.content);
        }
        total
    }
}

/// The decision-maker contract: scripted replayer, rule-based planner, or a
/// remote chat-completions client.
pub trait DecisionBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError>;

    /// Model name used for cost attribution.
    fn model_name(&self) -> &str;
}

#[derive(Debug)]
pub struct EpisodeResult {
    pub final_text: String,
    pub trace: Trace,
    pub budget_exceeded: bool,
}

struct Runner<'a, C> {
    registry: &'a ToolRegistry<C>,
    team: &'a Team,
    backend: &'a mut dyn DecisionBackend,
    trace: Trace,
    used: usize,
    budget: usize,
}

/// Run one episode to completion. Every step is logged as a trace event with
/// token accounting, and the episode always terminates: each applied decision
/// consumes budget, and budget exhaustion ends with a synthetic
/// "budget_exceeded" final answer rather than an error.
pub fn run_episode<C>(
    registry: &ToolRegistry<C>,
    ctx: &mut C,
    team: &Team,
    user_message: &str,
    backend: &mut dyn DecisionBackend,
    budget: usize,
) -> Result<EpisodeResult, KernelError> {
    if budget == 0 {
        return Err(KernelError::Invalid("budget must be at least 1".into()));
    }
    let mut runner = Runner {
        registry,
        team,
        backend,
        trace: Trace::default(),
        used: 0,
        budget,
    };
    let mut messages = vec![Message::user(user_message)];
    let mut active = team.topology.entry_agent();
    let mut final_text = None;

    while final_text.is_none() {
        if runner.used >= runner.budget {
            break;
        }
        let agent = team
            .agent(active)
            .ok_or_else(|| KernelError::Invalid(format!("agent {active} not in team")))?;
        let (decision, tokens_in, tokens_out) = runner.decide(agent, &messages, false, ctx)?;
        let mut tokens = Some((tokens_in, tokens_out));
        match decision {
            BackendDecision::ToolCalls(calls) if calls.is_empty() => {
                runner.log_invalid(active, "empty ToolCalls decision", &mut tokens);
                messages.push(Message::tool(
                    "error: a ToolCalls decision must name at least one tool",
                ));
            }
            BackendDecision::ToolCalls(calls) => {
                for call in calls {
                    if runner.used >= runner.budget {
                        break;
                    }
                    let (event, result) = runner.execute_tool_call(active, &call, &mut tokens, ctx);
                    messages.push(Message::assistant(format!(
                        "call {} {}",
                        call.tool,
                        Value::Object(canonicalize_args(&call.args))
                    )));
                    messages.push(Message::tool(result.render()));
                    runner.trace.push(event);
                }
            }
            BackendDecision::Handoff(target) => {
                runner.used += 1;
                match AgentName::parse(&target) {
                    Some(t) if team.topology == Topology::Handoffs && team.agent(t).is_some() => {
                        let (ti, to) = tokens.take().unwrap_or((0, 0));
                        runner.trace.push(TraceEvent {
                            seq: 0,
                            agent: active,
                            kind: EventKind::Handoff,
                            detail: EventDetail::Handoff {
                                target: t.as_str().into(),
                            },
                            tokens_in: ti,
                            tokens_out: to,
                            synthetic: false,
                        });
                        messages.push(Message::assistant(format!("handoff to {t}")));
                        active = t;
                    }
                    _ => {
                        let reason = if team.topology != Topology::Handoffs {
                            "handoffs are not available in this topology".to_string()
                        } else {
                            format!("unknown handoff target '{target}'")
                        };
                        runner.log_handoff_error(active, &target, &reason, &mut tokens);
                        messages.push(Message::tool(format!("error: {reason}")));
                    }
                }
            }
            BackendDecision::Subagent(request) => {
                runner.run_delegation(active, agent, request, &mut messages, &mut tokens, ctx)?;
            }
            BackendDecision::Final(text) => {
                runner.used += 1;
                let (ti, to) = tokens.take().unwrap_or((0, 0));
                runner.trace.push(TraceEvent {
                    seq: 0,
                    agent: active,
                    kind: EventKind::FinalAnswer,
                    detail: EventDetail::Answer { text: text.clone() },
                    tokens_in: ti,
                    tokens_out: to,
                    synthetic: false,
                });
                final_text = Some(text);
            }
        }
    }

    let budget_exceeded = final_text.is_none();
    let final_text = final_text.unwrap_or_else(|| {
        let text = "budget_exceeded".to_string();
        runner.trace.push(TraceEvent {
            seq: 0,
            agent: active,
            kind: EventKind::FinalAnswer,
            detail: EventDetail::Answer { text: text.clone() },
            tokens_in: 0,
            tokens_out: 0,
            synthetic: true,
        });
        text
    });
    Ok(EpisodeResult {
        final_text,
        trace: runner.trace,
        budget_exceeded,
    })
}

impl<C> Runner<'_, C> {
    fn decide(
        &mut self,
        agent: &AgentSpec,
        messages: &[Message],
        in_subepisode: bool,
        _ctx: &mut C,
    ) -> Result<(BackendDecision, u64, u64), KernelError> {
        let (schema_doc, _) = render_tool_schemas(agent, self.registry)?;
        let dctx = DecisionContext {
            agent,
            topology: self.team.topology,
            messages,
            schema_doc: &schema_doc,
            in_subepisode,
        };
        let tokens_in = dctx.token_estimate();
        let decision = self
            .backend
            .decide(&dctx)
            .map_err(|e| KernelError::Backend(e.to_string()))?;
        let tokens_out = estimate_tokens(&decision.render());
        Ok((decision, tokens_in, tokens_out))
    }

    /// Execute one tool call: canonicalize arguments, dispatch through the
    /// registry, and build the trace event. Unknown tools and argument-schema
    /// violations become ToolError events; the episode continues.
    fn execute_tool_call(
        &mut self,
        agent: AgentName,
        call: &ToolInvocation,
        tokens: &mut Option<(u64, u64)>,
        ctx: &mut C,
    ) -> (TraceEvent, ToolResult) {
        self.used += 1;
        let args = canonicalize_args(&call.args);
        let result = match self.registry.execute(&call.tool, &args, ctx) {
            Ok(r) => r,
            Err(KernelError::UnknownTool(name)) => ToolResult::error(
                "unknown_tool",
                format!("'{name}' is not a registered tool"),
            ),
            Err(e) => ToolResult::error("unknown_tool", e.to_string()),
        };
        let (ti, to) = tokens.take().unwrap_or((0, 0));
        let event = TraceEvent {
            seq: 0,
            agent,
            kind: if result.is_ok() {
                EventKind::ToolCall
            } else {
                EventKind::ToolError
            },
            detail: EventDetail::Tool {
                tool: call.tool.clone(),
                args,
                error: result.error_kind.clone(),
            },
            tokens_in: ti,
            tokens_out: to,
            synthetic: false,
        };
        (event, result)
    }

    fn log_invalid(&mut self, agent: AgentName, reason: &str, tokens: &mut Option<(u64, u64)>) {
        self.used += 1;
        let (ti, to) = tokens.take().unwrap_or((0, 0));
        self.trace.push(TraceEvent {
            seq: 0,
            agent,
            kind: EventKind::ToolError,
            detail: EventDetail::Tool {
                tool: "invalid_decision".into(),
                args: Map::new(),
                error: Some(reason.to_string()),
            },
            tokens_in: ti,
            tokens_out: to,
            synthetic: false,
        });
    }

    fn log_handoff_error(
        &mut self,
        agent: AgentName,
        target: &str,
        reason: &str,
        tokens: &mut Option<(u64, u64)>,
    ) {
        let (ti, to) = tokens.take().unwrap_or((0, 0));
        self.trace.push(TraceEvent {
            seq: 0,
            agent,
            kind: EventKind::ToolError,
            detail: EventDetail::Tool {
                tool: "handoff".into(),
                args: {
                    let mut m = Map::new();
                    m.insert("target".into(), json!(target));
                    m
                },
                error: Some(format!("handoff_target: {reason}")),
            },
            tokens_in: ti,
            tokens_out: to,
            synthetic: false,
        });
    }

    /// Delegate to a sub-agent: the callee runs its own sub-episode seeded
    /// only with the request, its trace events are appended globally under
    /// its own name, and a schema-validated response flows back.
    fn run_delegation(
        &mut self,
        caller: AgentName,
        caller_spec: &AgentSpec,
        request: InterAgentRequest,
        messages: &mut Vec<Message>,
        tokens: &mut Option<(u64, u64)>,
        ctx: &mut C,
    ) -> Result<(), KernelError> {
        let delegation_ok = matches!(
            self.team.topology,
            Topology::AgentsAsTools | Topology::Orchestrator
        );
        if !delegation_ok {
            self.log_invalid(
                caller,
                "sub-agent requests are not available in this topology",
                tokens,
            );
            messages.push(Message::tool(
                "error: sub-agent requests are not available in this topology",
            ));
            return Ok(());
        }
        if !caller_spec.peers.contains(&request.target) {
            self.log_invalid(
                caller,
                &format!("'{}' is not a peer of {caller}", request.target),
                tokens,
            );
            messages.push(Message::tool(format!(
                "error: '{}' is not a callable peer",
                request.target
            )));
            return Ok(());
        }

        self.used += 1;
        let (ti, to) = tokens.take().unwrap_or((0, 0));
        self.trace.push(TraceEvent {
            seq: 0,
            agent: caller,
            kind: EventKind::SubagentRequest,
            detail: EventDetail::Request {
                target: request.target.as_str().into(),
                task: request.task.clone(),
                inputs: request.inputs.clone(),
                expected_outputs: request.expected_outputs.clone(),
            },
            tokens_in: ti,
            tokens_out: to,
            synthetic: false,
        });

        let response = if let Err(detail) = request.validate() {
            InterAgentResponse::failed(format!("validation: {detail}"))
        } else {
            self.run_subepisode(&request, ctx)?
        };
        let response = match response.validate() {
            Ok(()) => response,
            Err(detail) => InterAgentResponse::failed(format!("validation: {detail}")),
        };
        self.trace.push(TraceEvent {
            seq: 0,
            agent: request.target,
            kind: EventKind::SubagentResponse,
            detail: EventDetail::Response {
                from: request.target.as_str().into(),
                status: match response.status {
                    ResponseStatus::Done => "done".into(),
                    ResponseStatus::Failed => "failed".into(),
                },
                summary: response.summary.clone(),
            },
            tokens_in: 0,
            tokens_out: 0,
            synthetic: false,
        });
        messages.push(Message::assistant(request.render()));
        messages.push(Message::tool(response.render()));
        Ok(())
    }

    /// The callee's sub-episode. It sees only its instructions and the
    /// request; nested delegation and handoffs are rejected here.
    fn run_subepisode(
        &mut self,
        request: &InterAgentRequest,
        ctx: &mut C,
    ) -> Result<InterAgentResponse, KernelError> {
        let callee = request.target;
        let Some(callee_spec) = self.team.agent(callee) else {
            return Ok(InterAgentResponse::failed(format!(
                "validation: '{callee}' is not in this team"
            )));
        };
        let callee_spec = callee_spec.clone();
        let mut sub_messages = vec![Message::user(request.render())];
        let mut produced_handles: Vec<String> = Vec::new();

        loop {
            if self.used >= self.budget {
                return Ok(InterAgentResponse::failed("budget_exceeded"));
            }
            let (decision, tokens_in, tokens_out) =
                self.decide(&callee_spec, &sub_messages, true, ctx)?;
            let mut tokens = Some((tokens_in, tokens_out));
            match decision {
                BackendDecision::ToolCalls(calls) if calls.is_empty() => {
                    self.log_invalid(callee, "empty ToolCalls decision", &mut tokens);
                    sub_messages.push(Message::tool(
                        "error: a ToolCalls decision must name at least one tool",
                    ));
                }
                BackendDecision::ToolCalls(calls) => {
                    for call in calls {
                        if self.used >= self.budget {
                            return Ok(InterAgentResponse::failed("budget_exceeded"));
                        }
                        let (event, result) =
                            self.execute_tool_call(callee, &call, &mut tokens, ctx);
                        for h in &result.handles {
                            produced_handles.push(h.id.clone());
                        }
                        sub_messages.push(Message::assistant(format!(
                            "call {} {}",
                            call.tool,
                            Value::Object(canonicalize_args(&call.args))
                        )));
                        sub_messages.push(Message::tool(result.render()));
                        self.trace.push(event);
                    }
                }
                BackendDecision::Handoff(_) => {
                    self.log_invalid(callee, "handoffs are not available in a sub-episode", &mut tokens);
                    sub_messages.push(Message::tool(
                        "error: handoffs are not available in a sub-episode",
                    ));
                }
                BackendDecision::Subagent(_) => {
                    // Only the entry agent delegates: depth is bounded at one.
                    self.log_invalid(callee, "nested sub-agent delegation is rejected", &mut tokens);
                    sub_messages.push(Message::tool(
                        "error: nested sub-agent delegation is rejected",
                    ));
                }
                BackendDecision::Final(text) => {
                    let mut outputs = Map::new();
                    outputs.insert("handles".into(), json!(produced_handles));
                    return Ok(InterAgentResponse::done(outputs, text));
                }
            }
        }
    }
}
