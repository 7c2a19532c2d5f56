//! Rendering agent tool schemas into the text block a backend sees, with the
//! token estimate that block (plus the agent's instructions) costs per call.

use serde_json::json;

use crate::backends::tokens::estimate_tokens;

use super::agents::AgentSpec;
use super::registry::ToolRegistry;
use super::KernelError;

/// Render the schema document listing exactly the agent's tools, in the
/// agent's declared order, and estimate the per-call context cost of
/// instructions plus schemas. Deterministic: same spec, same bytes.
pub fn render_tool_schemas<C>(
    agent: &AgentSpec,
    registry: &ToolRegistry<C>,
) -> Result<(String, u64), KernelError> {
    let mut doc = String::new();
    for name in &agent.tools {
        let descriptor = registry
            .descriptor(name)
            .ok_or_else(|| KernelError::UnknownTool(name.clone()))?;
        let params: Vec<_> = descriptor
            .params
            .iter()
            .map(|p| {
                json!({
                    "name": p.name,
                    "type": p.kind.name(),
                    "required": p.required,
                    "description": p.description,
                })
            })
            .collect();
        let line = json!({
            "name": descriptor.name,
            "description": descriptor.description,
            "parameters": params,
            "returns": descriptor.returns,
        });
        doc.push_str(&serde_json::to_string(&line).expect("descriptors serialize"));
        doc.push('\n');
    }
    let estimate = estimate_tokens(&agent.instructions) + estimate_tokens(&doc);
    Ok((doc, estimate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::agents::{team_for, AgentName, Topology};
    use crate::kernel::registry::{ParamKind, ParamSpec, ToolDescriptor};
    use crate::toolbox::result::ToolResult;

    fn registry_with(names: &[&str]) -> ToolRegistry<()> {
        let mut reg = ToolRegistry::new();
        for name in names {
            reg.register(
                ToolDescriptor {
                    name: name.to_string(),
                    description: format!("the {name} tool"),
                    params: vec![ParamSpec::new("image", ParamKind::Handle, true, "input")],
                    returns: "a result".into(),
                },
                |_, _| ToolResult::ok(Default::default(), vec![]),
            )
            .unwrap();
        }
        reg
    }

    #[test]
    fn orchestrator_costs_instructions_only() {
        let team = team_for(Topology::Orchestrator);
        let reg = registry_with(&[]);
        let orch = team.agent(AgentName::Orchestrator).unwrap();
        let (doc, estimate) = render_tool_schemas(orch, &reg).unwrap();
        assert!(doc.is_empty());
        assert_eq!(estimate, estimate_tokens(&orch.instructions));
    }

    #[test]
    fn unregistered_tool_is_an_error() {
        let team = team_for(Topology::Single);
        let reg = registry_with(&["load_image"]);
        assert!(matches!(
            render_tool_schemas(team.entry(), &reg),
            Err(KernelError::UnknownTool(_))
        ));
    }

    #[test]
    fn rendering_is_deterministic() {
        let team = team_for(Topology::AgentsAsTools);
        let names: Vec<&str> = crate::kernel::agents::ANALYSIS_TOOLS.to_vec();
        let reg = registry_with(&names);
        let agent = team.agent(AgentName::Analysis).unwrap();
        let a = render_tool_schemas(agent, &reg).unwrap();
        let b = render_tool_schemas(agent, &reg).unwrap();
        assert_eq!(a, b);
    }
}
