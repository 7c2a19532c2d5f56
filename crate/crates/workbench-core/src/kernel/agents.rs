//! Agent specifications and the four wiring topologies.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::KernelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentName {
    Preprocessing,
    Segmentation,
    Analysis,
    Orchestrator,
    Generalist,
}

impl AgentName {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentName::Preprocessing => "preprocessing",
            AgentName::Segmentation => "segmentation",
            AgentName::Analysis => "analysis",
            AgentName::Orchestrator => "orchestrator",
            AgentName::Generalist => "generalist",
        }
    }

    pub fn parse(s: &str) -> Option<AgentName> {
        match s {
            "preprocessing" => Some(AgentName::Preprocessing),
            "segmentation" => Some(AgentName::Segmentation),
            "analysis" => Some(AgentName::Analysis),
            "orchestrator" => Some(AgentName::Orchestrator),
            "generalist" => Some(AgentName::Generalist),
            _ => None,
        }
    }
}

impl std::fmt::Display for AgentName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One agent: its instructions, the tools it may see, and the peers it can
/// reach (as callable sub-agents or handoff targets, per topology).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: AgentName,
    pub instructions: String,
    pub tools: Vec<String>,
    pub peers: Vec<AgentName>,
}

/// The four agent wirings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Single,
    AgentsAsTools,
    Handoffs,
    Orchestrator,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Single,
        Topology::AgentsAsTools,
        Topology::Handoffs,
        Topology::Orchestrator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Single => "single",
            Topology::AgentsAsTools => "agents-as-tools",
            Topology::Handoffs => "handoffs",
            Topology::Orchestrator => "orchestrator",
        }
    }

    pub fn parse(s: &str) -> Option<Topology> {
        Topology::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    /// The agent that receives the user prompt.
    pub fn entry_agent(self) -> AgentName {
        match self {
            Topology::Single => AgentName::Generalist,
            Topology::AgentsAsTools | Topology::Handoffs => AgentName::Analysis,
            Topology::Orchestrator => AgentName::Orchestrator,
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The agents wired for one topology.
#[derive(Debug, Clone)]
pub struct Team {
    pub topology: Topology,
    agents: BTreeMap<AgentName, AgentSpec>,
}

impl Team {
    /// Assemble a team from explicit agent specs (the entry agent for the
    /// topology must be present).
    pub fn new(topology: Topology, specs: Vec<AgentSpec>) -> Result<Self, KernelError> {
        let agents: BTreeMap<AgentName, AgentSpec> =
            specs.into_iter().map(|s| (s.name, s)).collect();
        if !agents.contains_key(&topology.entry_agent()) {
            return Err(KernelError::Invalid(format!(
                "team for {topology} lacks its entry agent {}",
                topology.entry_agent()
            )));
        }
        Ok(Team { topology, agents })
    }

    pub fn entry(&self) -> &AgentSpec {
        &self.agents[&self.topology.entry_agent()]
    }

    pub fn agent(&self, name: AgentName) -> Option<&AgentSpec> {
        self.agents.get(&name)
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentSpec> {
        self.agents.values()
    }
}

pub const PREPROCESSING_TOOLS: [&str; 3] = ["skull_strip", "register", "resample"];
pub const SEGMENTATION_TOOLS: [&str; 3] = [
    "segment_pathology",
    "segment_anatomy",
    "verify_registration",
];
pub const ANALYSIS_TOOLS: [&str; 8] = [
    "enumerate_lesions",
    "match_lesions",
    "lesion_geometry",
    "lesion_features",
    "localize_lesion",
    "load_image",
    "list_labels",
    "visualize",
];

fn spec(name: AgentName, instructions: &str, tools: &[&str], peers: &[AgentName]) -> AgentSpec {
    AgentSpec {
        name,
        instructions: instructions.to_string(),
        tools: tools.iter().map(|t| t.to_string()).collect(),
        peers: peers.to_vec(),
    }
}

const PREPROCESSING_INSTRUCTIONS: &str = "You are the preprocessing expert for brain MRI. \
You skull-strip scans, register them to atlas templates, and resample grids. \
Report the handles of every derived image.";

const SEGMENTATION_INSTRUCTIONS: &str = "You are the segmentation expert for brain MRI. \
Before running a pathology model, verify its prerequisites locally: inputs must be \
skull-stripped and header-equal to the model's atlas template (SRI24, or MNI152 for \
postop-glioma). Anatomy segmentation works in any space. Report output handles and paths.";

const ANALYSIS_INSTRUCTIONS: &str = "You are the analysis expert for brain MRI. \
You enumerate lesions, match them across timepoints, extract geometry and features, \
localize lesions to lobes, and handle utilities (loading, label vocabularies, snapshots). \
Answer the user's question with one 'field: value' line per requested field.";

const ORCHESTRATOR_INSTRUCTIONS: &str = "You are the workflow planner. You hold no tools; \
delegate preprocessing, segmentation, and analysis to the domain experts with structured \
requests, then compose the final answer as 'field: value' lines.";

const GENERALIST_INSTRUCTIONS: &str = "You are a neuro-imaging agent with the full tool suite: \
preprocessing (skull-strip, registration, resampling), segmentation (pathology models, \
anatomy), and analysis (enumeration, matching, features, localization, utilities). \
Plan and execute the workflow yourself, then answer with one 'field: value' line per \
requested field.";

/// Build the team for a topology with the standard tool allocation:
/// registration verification lives with the segmentation agent, utilities
/// with the analysis agent, and the orchestrator holds no tools.
pub fn team_for(topology: Topology) -> Team {
    let all_tools: Vec<&str> = PREPROCESSING_TOOLS
        .iter()
        .chain(SEGMENTATION_TOOLS.iter())
        .chain(ANALYSIS_TOOLS.iter())
        .copied()
        .collect();
    let mut agents = BTreeMap::new();
    match topology {
        Topology::Single => {
            agents.insert(
                AgentName::Generalist,
                spec(AgentName::Generalist, GENERALIST_INSTRUCTIONS, &all_tools, &[]),
            );
        }
        Topology::AgentsAsTools => {
            agents.insert(
                AgentName::Analysis,
                spec(
                    AgentName::Analysis,
                    ANALYSIS_INSTRUCTIONS,
                    &ANALYSIS_TOOLS,
                    &[AgentName::Preprocessing, AgentName::Segmentation],
                ),
            );
            agents.insert(
                AgentName::Preprocessing,
                spec(AgentName::Preprocessing, PREPROCESSING_INSTRUCTIONS, &PREPROCESSING_TOOLS, &[]),
            );
            agents.insert(
                AgentName::Segmentation,
                spec(AgentName::Segmentation, SEGMENTATION_INSTRUCTIONS, &SEGMENTATION_TOOLS, &[]),
            );
        }
        Topology::Handoffs => {
            let peers_of = |me: AgentName| -> Vec<AgentName> {
                [AgentName::Preprocessing, AgentName::Segmentation, AgentName::Analysis]
                    .into_iter()
                    .filter(|a| *a != me)
                    .collect()
            };
            agents.insert(
                AgentName::Analysis,
                spec(
                    AgentName::Analysis,
                    ANALYSIS_INSTRUCTIONS,
                    &ANALYSIS_TOOLS,
                    &peers_of(AgentName::Analysis),
                ),
            );
            agents.insert(
                AgentName::Preprocessing,
                spec(
                    AgentName::Preprocessing,
                    PREPROCESSING_INSTRUCTIONS,
                    &PREPROCESSING_TOOLS,
                    &peers_of(AgentName::Preprocessing),
                ),
            );
            agents.insert(
                AgentName::Segmentation,
                spec(
                    AgentName::Segmentation,
                    SEGMENTATION_INSTRUCTIONS,
                    &SEGMENTATION_TOOLS,
                    &peers_of(AgentName::Segmentation),
                ),
            );
        }
        Topology::Orchestrator => {
            agents.insert(
                AgentName::Orchestrator,
                spec(
                    AgentName::Orchestrator,
                    ORCHESTRATOR_INSTRUCTIONS,
                    &[],
                    &[AgentName::Preprocessing, AgentName::Segmentation, AgentName::Analysis],
                ),
            );
            agents.insert(
                AgentName::Preprocessing,
                spec(AgentName::Preprocessing, PREPROCESSING_INSTRUCTIONS, &PREPROCESSING_TOOLS, &[]),
            );
            agents.insert(
                AgentName::Segmentation,
                spec(AgentName::Segmentation, SEGMENTATION_INSTRUCTIONS, &SEGMENTATION_TOOLS, &[]),
            );
            agents.insert(
                AgentName::Analysis,
                spec(AgentName::Analysis, ANALYSIS_INSTRUCTIONS, &ANALYSIS_TOOLS, &[]),
            );
        }
    }
    let team = Team { topology, agents };
    validate_team(&team).expect("built-in teams satisfy the allocation rules");
    team
}

/// Tool-allocation rules every team must satisfy.
pub fn validate_team(team: &Team) -> Result<(), KernelError> {
    for agent in team.agents() {
        match agent.name {
            AgentName::Orchestrator => {
                if !agent.tools.is_empty() {
                    return Err(KernelError::Invalid(
                        "the orchestrator must hold no tools".into(),
                    ));
                }
            }
            AgentName::Preprocessing | AgentName::Analysis => {
                if agent.tools.iter().any(|t| t == "verify_registration") {
                    return Err(KernelError::Invalid(format!(
                        "verify_registration belongs to the segmentation agent, not {}",
                        agent.name
                    )));
                }
            }
            _ => {}
        }
        if agent.name != AgentName::Analysis && agent.name != AgentName::Generalist {
            for utility in ["load_image", "list_labels", "visualize"] {
                if agent.tools.iter().any(|t| t == utility) {
                    return Err(KernelError::Invalid(format!(
                        "utility tool {utility} belongs to the analysis agent, not {}",
                        agent.name
                    )));
                }
            }
        }
    }
    Ok(())
}
