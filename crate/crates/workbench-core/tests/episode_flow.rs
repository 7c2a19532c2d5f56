//! Episode-loop behavior over a toy tool registry: topology mechanics,
//! budgets, context isolation, and replay determinism.

use std::collections::BTreeMap;

use serde_json::json;
use workbench_core::backends::scripted::{EpisodeScript, PlanStep, PlanStepKind, ScriptedBackend};
use workbench_core::kernel::agents::{AgentName, AgentSpec, Team, Topology};
use workbench_core::kernel::episode::{
    run_episode, BackendDecision, BackendError, DecisionBackend, DecisionContext, Message,
    ToolInvocation,
};
use workbench_core::kernel::protocol::InterAgentRequest;
use workbench_core::kernel::registry::{ParamKind, ParamSpec, ToolDescriptor, ToolRegistry};
use workbench_core::kernel::trace::EventKind;
use workbench_core::toolbox::result::{payload, ToolResult};

#[derive(Default)]
struct Counter {
    calls: usize,
}

fn toy_registry() -> ToolRegistry<Counter> {
    let mut reg = ToolRegistry::new();
    reg.register(
        ToolDescriptor {
            name: "ping".into(),
            description: "answers pong".into(),
            params: vec![],
            returns: "pong".into(),
        },
        |ctx: &mut Counter, _| {
            ctx.calls += 1;
            let mut p = payload();
            p.insert("pong".into(), json!(ctx.calls));
            ToolResult::ok(p, vec![])
        },
    )
    .unwrap();
    reg.register(
        ToolDescriptor {
            name: "probe".into(),
            description: "requires a target".into(),
            params: vec![ParamSpec::new("target", ParamKind::Text, true, "what to probe")],
            returns: "echo".into(),
        },
        |_, args| {
            let mut p = payload();
            p.insert("target".into(), args["target"].clone());
            ToolResult::ok(p, vec![])
        },
    )
    .unwrap();
    reg
}

fn script(steps: Vec<PlanStep>) -> ScriptedBackend {
    ScriptedBackend::new(EpisodeScript { steps }, BTreeMap::new())
}

/// Teams whose tool lists match the toy registry.
fn toy_team(topology: Topology) -> Team {
    let spec = |name: AgentName, peers: &[AgentName]| AgentSpec {
        name,
        instructions: format!("you are {name}"),
        tools: vec!["ping".into(), "probe".into()],
        peers: peers.to_vec(),
    };
    let agents = match topology {
        Topology::Single => vec![spec(AgentName::Generalist, &[])],
        Topology::AgentsAsTools => vec![
            spec(
                AgentName::Analysis,
                &[AgentName::Preprocessing, AgentName::Segmentation],
            ),
            spec(AgentName::Preprocessing, &[]),
            spec(AgentName::Segmentation, &[]),
        ],
        Topology::Handoffs => vec![
            spec(
                AgentName::Analysis,
                &[AgentName::Preprocessing, AgentName::Segmentation],
            ),
            spec(
                AgentName::Preprocessing,
                &[AgentName::Analysis, AgentName::Segmentation],
            ),
            spec(
                AgentName::Segmentation,
                &[AgentName::Analysis, AgentName::Preprocessing],
            ),
        ],
        Topology::Orchestrator => vec![
            AgentSpec {
                name: AgentName::Orchestrator,
                instructions: "plan".into(),
                tools: vec![],
                peers: vec![
                    AgentName::Preprocessing,
                    AgentName::Segmentation,
                    AgentName::Analysis,
                ],
            },
            spec(AgentName::Preprocessing, &[]),
            spec(AgentName::Segmentation, &[]),
            spec(AgentName::Analysis, &[]),
        ],
    };
    Team::new(topology, agents).unwrap()
}

#[test]
fn single_topology_segment_and_stop_is_two_actions() {
    let reg = toy_registry();
    let team = toy_team(Topology::Single);
    let mut ctx = Counter::default();
    let mut backend = script(vec![
        PlanStep::tool(AgentName::Generalist, "ping", &[], &[], &[]),
        PlanStep::final_answer(AgentName::Generalist, "done"),
    ]);
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    assert_eq!(result.trace.actions(), 2);
    assert_eq!(result.final_text, "done");
    assert!(!result.budget_exceeded);
    result.trace.validate().unwrap();
}

#[test]
fn budget_one_with_two_step_plan_exceeds() {
    let reg = toy_registry();
    let team = toy_team(Topology::Single);
    let mut ctx = Counter::default();
    let mut backend = script(vec![
        PlanStep::tool(AgentName::Generalist, "ping", &[], &[], &[]),
        PlanStep::tool(AgentName::Generalist, "ping", &[], &[], &[]),
        PlanStep::final_answer(AgentName::Generalist, "done"),
    ]);
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 1).unwrap();
    assert!(result.budget_exceeded);
    assert_eq!(result.final_text, "budget_exceeded");
    assert_eq!(result.trace.actions(), 1);
    // The synthetic final is recorded but not an action.
    assert_eq!(
        result
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::FinalAnswer)
            .count(),
        1
    );
}

#[test]
fn handoffs_trace_has_handoffs_and_no_requests() {
    let reg = toy_registry();
    let team = toy_team(Topology::Handoffs);
    let mut ctx = Counter::default();
    let mut backend = script(vec![
        PlanStep::handoff(AgentName::Analysis, AgentName::Segmentation),
        PlanStep::tool(AgentName::Segmentation, "ping", &[], &[], &[]),
        PlanStep::final_answer(AgentName::Segmentation, "done"),
    ]);
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    let handoffs = result
        .trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Handoff)
        .count();
    let requests = result
        .trace
        .events
        .iter()
        .filter(|e| e.kind == EventKind::SubagentRequest)
        .count();
    assert!(handoffs >= 1);
    assert_eq!(requests, 0);
    assert_eq!(result.trace.actions(), 3);
}

#[test]
fn self_handoff_is_a_counted_noop() {
    let reg = toy_registry();
    let team = toy_team(Topology::Handoffs);
    let mut ctx = Counter::default();
    let mut backend = script(vec![
        PlanStep::handoff(AgentName::Analysis, AgentName::Analysis),
        PlanStep::tool(AgentName::Analysis, "ping", &[], &[], &[]),
        PlanStep::final_answer(AgentName::Analysis, "done"),
    ]);
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    assert_eq!(result.trace.actions(), 3);
    assert_eq!(result.trace.errors(), 0);
}

struct OneShot {
    decisions: Vec<BackendDecision>,
    pos: usize,
}

impl DecisionBackend for OneShot {
    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
        let d = self.decisions[self.pos.min(self.decisions.len() - 1)].clone();
        self.pos += 1;
        Ok(d)
    }

    fn model_name(&self) -> &str {
        "test"
    }
}

#[test]
fn unknown_handoff_target_is_a_tool_error() {
    let reg = toy_registry();
    let team = toy_team(Topology::Handoffs);
    let mut ctx = Counter::default();
    let mut backend = OneShot {
        decisions: vec![
            BackendDecision::Handoff("surgery".into()),
            BackendDecision::Final("done".into()),
        ],
        pos: 0,
    };
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    assert_eq!(result.trace.errors(), 1);
    assert_eq!(result.final_text, "done");
}

#[test]
fn unknown_tool_and_missing_argument_keep_the_episode_alive() {
    let reg = toy_registry();
    let team = toy_team(Topology::Single);
    let mut ctx = Counter::default();
    let mut backend = OneShot {
        decisions: vec![
            BackendDecision::ToolCalls(vec![ToolInvocation {
                tool: "pinng".into(),
                args: Default::default(),
            }]),
            BackendDecision::ToolCalls(vec![ToolInvocation {
                tool: "probe".into(),
                args: Default::default(),
            }]),
            BackendDecision::Final("recovered".into()),
        ],
        pos: 0,
    };
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    assert_eq!(result.trace.errors(), 2);
    assert_eq!(result.final_text, "recovered");
}

#[test]
fn canonicalized_args_are_sorted_in_the_trace() {
    let reg = toy_registry();
    let team = toy_team(Topology::Single);
    let mut ctx = Counter::default();
    let mut args = serde_json::Map::new();
    args.insert("zeta".into(), json!(1));
    args.insert("target".into(), json!("x"));
    let mut backend = OneShot {
        decisions: vec![
            BackendDecision::ToolCalls(vec![ToolInvocation {
                tool: "probe".into(),
                args,
            }]),
            BackendDecision::Final("ok".into()),
        ],
        pos: 0,
    };
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    let line = result.trace.to_jsonl();
    let target_pos = line.find("\"target\"").unwrap();
    let zeta_pos = line.find("\"zeta\"").unwrap();
    assert!(target_pos < zeta_pos);
}

/// A probe that records every context the callee sees.
struct IsolationProbe {
    script: ScriptedBackend,
    callee_contexts: Vec<Vec<Message>>,
}

impl DecisionBackend for IsolationProbe {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
        if ctx.in_subepisode {
            self.callee_contexts.push(ctx.messages.to_vec());
        }
        self.script.decide(ctx)
    }

    fn model_name(&self) -> &str {
        "test"
    }
}

fn delegation_script() -> EpisodeScript {
    EpisodeScript {
        steps: vec![
            PlanStep {
                agent: AgentName::Analysis,
                kind: PlanStepKind::Delegate {
                    target: AgentName::Segmentation,
                    task: "run the probe".into(),
                    input_slots: vec![],
                    expected_outputs: vec!["handles".into()],
                    steps: vec![PlanStep::tool(AgentName::Segmentation, "ping", &[], &[], &[])],
                },
            },
            PlanStep::final_answer(AgentName::Analysis, "done"),
        ],
    }
}

#[test]
fn agents_as_tools_callee_never_sees_the_user_prompt() {
    let reg = toy_registry();
    let team = toy_team(Topology::AgentsAsTools);
    let mut ctx = Counter::default();
    let mut backend = IsolationProbe {
        script: ScriptedBackend::new(delegation_script(), BTreeMap::new()),
        callee_contexts: Vec::new(),
    };
    let secret = "the user prompt mentions a zebra";
    let result = run_episode(&reg, &mut ctx, &team, secret, &mut backend, 40).unwrap();
    assert_eq!(result.final_text, "done");
    assert!(!backend.callee_contexts.is_empty());
    for messages in &backend.callee_contexts {
        for m in messages {
            assert!(!m.content.contains("zebra"), "callee saw the caller prompt");
        }
    }
    // The request and its response both appear in the trace.
    assert_eq!(
        result
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::SubagentRequest)
            .count(),
        1
    );
    assert_eq!(
        result
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::SubagentResponse)
            .count(),
        1
    );
}

#[test]
fn handoff_preserves_the_full_transcript() {
    struct TranscriptProbe {
        script: ScriptedBackend,
        post_handoff: Vec<Vec<Message>>,
    }
    impl DecisionBackend for TranscriptProbe {
        fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
            if ctx.agent.name == AgentName::Segmentation {
                self.post_handoff.push(ctx.messages.to_vec());
            }
            self.script.decide(ctx)
        }
        fn model_name(&self) -> &str {
            "test"
        }
    }
    let reg = toy_registry();
    let team = toy_team(Topology::Handoffs);
    let mut ctx = Counter::default();
    let mut backend = TranscriptProbe {
        script: ScriptedBackend::new(
            EpisodeScript {
                steps: vec![
                    PlanStep::tool(AgentName::Analysis, "ping", &[], &[], &[]),
                    PlanStep::handoff(AgentName::Analysis, AgentName::Segmentation),
                    PlanStep::final_answer(AgentName::Segmentation, "done"),
                ],
            },
            BTreeMap::new(),
        ),
        post_handoff: Vec::new(),
    };
    let user = "longitudinal question about case-x";
    run_episode(&reg, &mut ctx, &team, user, &mut backend, 40).unwrap();
    assert!(!backend.post_handoff.is_empty());
    for messages in &backend.post_handoff {
        assert!(messages.iter().any(|m| m.content.contains("case-x")));
        assert!(messages.iter().any(|m| m.content.contains("ping")));
    }
}

#[test]
fn nested_delegation_is_rejected() {
    struct Nester {
        stage: usize,
    }
    impl DecisionBackend for Nester {
        fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
            self.stage += 1;
            if !ctx.in_subepisode {
                if self.stage == 1 {
                    return Ok(BackendDecision::Subagent(InterAgentRequest {
                        target: AgentName::Segmentation,
                        task: "outer".into(),
                        inputs: vec![],
                        expected_outputs: vec![],
                    }));
                }
                return Ok(BackendDecision::Final("done".into()));
            }
            if self.stage == 2 {
                // The callee tries to delegate onward.
                return Ok(BackendDecision::Subagent(InterAgentRequest {
                    target: AgentName::Preprocessing,
                    task: "inner".into(),
                    inputs: vec![],
                    expected_outputs: vec![],
                }));
            }
            Ok(BackendDecision::Final("sub done".into()))
        }
        fn model_name(&self) -> &str {
            "test"
        }
    }
    let reg = toy_registry();
    let team = toy_team(Topology::AgentsAsTools);
    let mut ctx = Counter::default();
    let mut backend = Nester { stage: 0 };
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    assert_eq!(result.trace.errors(), 1);
    assert_eq!(
        result
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::SubagentRequest)
            .count(),
        1,
        "only the outer request is accepted"
    );
    assert_eq!(result.final_text, "done");
}

#[test]
fn invalid_request_yields_failed_response() {
    struct BadRequester {
        stage: usize,
    }
    impl DecisionBackend for BadRequester {
        fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
            self.stage += 1;
            if self.stage == 1 {
                return Ok(BackendDecision::Subagent(InterAgentRequest {
                    target: AgentName::Segmentation,
                    task: "   ".into(),
                    inputs: vec![],
                    expected_outputs: vec![],
                }));
            }
            Ok(BackendDecision::Final("done".into()))
        }
        fn model_name(&self) -> &str {
            "test"
        }
    }
    let reg = toy_registry();
    let team = toy_team(Topology::AgentsAsTools);
    let mut ctx = Counter::default();
    let mut backend = BadRequester { stage: 0 };
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    let response = result
        .trace
        .events
        .iter()
        .find(|e| e.kind == EventKind::SubagentResponse)
        .expect("a response event exists");
    match &response.detail {
        workbench_core::kernel::trace::EventDetail::Response { status, summary, .. } => {
            assert_eq!(status, "failed");
            assert!(summary.contains("validation"));
        }
        other => panic!("unexpected detail {other:?}"),
    }
}

#[test]
fn replay_is_byte_for_byte_deterministic() {
    let run = || {
        let reg = toy_registry();
        let team = toy_team(Topology::AgentsAsTools);
        let mut ctx = Counter::default();
        let mut backend = ScriptedBackend::new(delegation_script(), BTreeMap::new());
        run_episode(&reg, &mut ctx, &team, "question", &mut backend, 40)
            .unwrap()
            .trace
            .to_jsonl()
    };
    assert_eq!(run(), run());
}

#[test]
fn token_totals_equal_the_sum_over_events() {
    let reg = toy_registry();
    let team = toy_team(Topology::Single);
    let mut ctx = Counter::default();
    let mut backend = script(vec![
        PlanStep::tool(AgentName::Generalist, "ping", &[], &[], &[]),
        PlanStep::final_answer(AgentName::Generalist, "done"),
    ]);
    let result = run_episode(&reg, &mut ctx, &team, "go", &mut backend, 40).unwrap();
    let sum_in: u64 = result.trace.events.iter().map(|e| e.tokens_in).sum();
    assert_eq!(result.trace.tokens_in(), sum_in);
    assert!(sum_in > 0);
    assert!(result.trace.events.iter().all(|e| e.tokens_in > 0 || !e.kind.is_action() || e.synthetic));
}
