//! Question templates: deterministic free-text phrasing with sampled slots,
//! oracle-computed expected answers, and per-topology expected plans built
//! from one shared skeleton.

use std::collections::BTreeMap;

use serde_json::json;

use crate::backends::scripted::{EpisodeScript, PlanStep, PlanStepKind};
use crate::kernel::agents::{AgentName, Topology};
use crate::toolbox::env::Modality;
use crate::toolbox::ground_truth::GroundTruth;
use crate::toolbox::vocab::{AtlasSpace, Pathology, SegModel};

use super::dataset::{render_answer, AnswerField, BenchmarkItem, FieldValue};
use super::oracle;
use super::phantom::PhantomSpec;
use super::BenchError;

pub const DEFAULT_MATCH_THRESHOLD: f64 = 0.25;
/// Stable-vs-changed boundary for the growth-trend template, in percent.
pub const GROWTH_THRESHOLD_PCT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    SegPathology,
    SegAnatomy,
    CountVolume,
    LargestGeometry,
    LargestLobe,
    LesionFeatures,
    FullReport,
    FeatureReport,
    Vocabulary,
    Snapshot,
    VolumeChange,
    NewResolved,
    MatchedReport,
    Growth,
    Trajectory,
}

impl TemplateKind {
    pub const TIER1: [TemplateKind; 2] = [TemplateKind::SegPathology, TemplateKind::SegAnatomy];
    pub const TIER2: [TemplateKind; 8] = [
        TemplateKind::CountVolume,
        TemplateKind::LargestGeometry,
        TemplateKind::LargestLobe,
        TemplateKind::LesionFeatures,
        TemplateKind::FullReport,
        TemplateKind::FeatureReport,
        TemplateKind::Vocabulary,
        TemplateKind::Snapshot,
    ];
    pub const TIER3: [TemplateKind; 5] = [
        TemplateKind::VolumeChange,
        TemplateKind::NewResolved,
        TemplateKind::MatchedReport,
        TemplateKind::Growth,
        TemplateKind::Trajectory,
    ];

    pub fn tier(self) -> u8 {
        if TemplateKind::TIER1.contains(&self) {
            1
        } else if TemplateKind::TIER2.contains(&self) {
            2
        } else {
            3
        }
    }
}

/// Sampled slots that complete a template.
#[derive(Debug, Clone)]
pub struct TemplateSlots {
    pub timepoints: Vec<usize>,
    pub lesion: u32,
    pub modality: Modality,
}

impl Default for TemplateSlots {
    fn default() -> Self {
        TemplateSlots {
            timepoints: vec![0],
            lesion: 1,
            modality: Modality::T1ce,
        }
    }
}

/// Everything the planner needs to recover from the question text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedQuestion {
    pub template: TemplateKind,
    pub case_id: String,
    pub pathology: Pathology,
    pub timepoints: Vec<usize>,
    pub lesion: u32,
    pub modality: Modality,
}

// ---- question grammar ------------------------------------------------------

pub fn render_question(
    template: TemplateKind,
    case_id: &str,
    pathology: Pathology,
    slots: &TemplateSlots,
) -> String {
    let tp = slots.timepoints[0];
    let phrase = pathology.phrase();
    let modality = slots.modality.name();
    let pair = || {
        format!(
            "Case {case_id}, timepoints {} and {}",
            slots.timepoints[0], slots.timepoints[1]
        )
    };
    match template {
        TemplateKind::SegPathology => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} with the appropriate model \
and stop; report the segmentation output path."
        ),
        TemplateKind::SegAnatomy => format!(
            "Case {case_id}, timepoint {tp}: run anatomical segmentation on the {modality} scan \
and stop; report both output file paths."
        ),
        TemplateKind::CountVolume => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} and report the lesion count \
and the total lesion volume in mm3."
        ),
        TemplateKind::LargestGeometry => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} and report the volume in mm3 \
and the centroid in mm of the largest lesion."
        ),
        TemplateKind::LargestLobe => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} and report which lobe contains \
the largest lesion and the overlap fraction."
        ),
        TemplateKind::LesionFeatures => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} and report volume, surface \
area, sphericity, elongation, and the mean and maximum {modality} intensity of lesion {}.",
            slots.lesion
        ),
        TemplateKind::FullReport => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} and report the lesion count \
plus the volume, centroid, and lobe of every lesion."
        ),
        TemplateKind::FeatureReport => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase} and produce a morphological \
feature report for every lesion: volume, surface area, sphericity, elongation, mean and \
maximum {modality} intensity."
        ),
        TemplateKind::Vocabulary => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase}; report the lesion count and \
the label names the {} model can produce.",
            pathology.model().name()
        ),
        TemplateKind::Snapshot => format!(
            "Case {case_id}, timepoint {tp}: segment the {phrase}, save an axial overlay \
snapshot, and report the snapshot path and lesion count."
        ),
        TemplateKind::VolumeChange => format!(
            "{}: segment the {phrase} at both timepoints and report the total lesion volume at \
each, the absolute change in mm3, and the percent change.",
            pair()
        ),
        TemplateKind::NewResolved => format!(
            "{}: segment the {phrase} at both timepoints, match lesions across them, and report \
the matched, new, and resolved lesion counts.",
            pair()
        ),
        TemplateKind::MatchedReport => format!(
            "{}: segment the {phrase} at both timepoints, match lesions, and report for every \
matched pair the volumes at both timepoints and the percent change.",
            pair()
        ),
        TemplateKind::Growth => format!(
            "{}: segment the {phrase} at both timepoints and classify the total lesion volume \
trend as increased, decreased, or stable (beyond {GROWTH_THRESHOLD_PCT} percent change), \
reporting the percent change.",
            pair()
        ),
        TemplateKind::Trajectory => format!(
            "Case {case_id}, all three timepoints: segment the {phrase} at each timepoint and \
report the total lesion volume at timepoints 0, 1, and 2."
        ),
    }
}

/// Template-matching over the benchmark's own question grammar.
pub fn parse_question(question: &str) -> Option<ParsedQuestion> {
    let template = if question.contains("anatomical segmentation") {
        TemplateKind::SegAnatomy
    } else if question.contains("and stop") {
        TemplateKind::SegPathology
    } else if question.contains("lesion count and the total lesion volume") {
        TemplateKind::CountVolume
    } else if question.contains("centroid in mm of the largest") {
        TemplateKind::LargestGeometry
    } else if question.contains("which lobe") {
        TemplateKind::LargestLobe
    } else if question.contains("intensity of lesion") {
        TemplateKind::LesionFeatures
    } else if question.contains("volume, centroid, and lobe of every lesion") {
        TemplateKind::FullReport
    } else if question.contains("morphological feature report") {
        TemplateKind::FeatureReport
    } else if question.contains("label names") {
        TemplateKind::Vocabulary
    } else if question.contains("snapshot") {
        TemplateKind::Snapshot
    } else if question.contains("absolute change in mm3") {
        TemplateKind::VolumeChange
    } else if question.contains("matched, new, and resolved") {
        TemplateKind::NewResolved
    } else if question.contains("every matched pair") {
        TemplateKind::MatchedReport
    } else if question.contains("increased, decreased, or stable") {
        TemplateKind::Growth
    } else if question.contains("all three timepoints") {
        TemplateKind::Trajectory
    } else {
        return None;
    };

    let case_id = question
        .strip_prefix("Case ")?
        .split([',', ':'])
        .next()?
        .trim()
        .to_string();
    let pathology = if question.contains("post-operative glioma") {
        Pathology::PostopGlioma
    } else if question.contains("glioma") {
        Pathology::Glioma
    } else if question.contains("metastases") {
        Pathology::Metastasis
    } else if question.contains("meningioma") {
        Pathology::Meningioma
    } else {
        Pathology::Glioma
    };
    let timepoints = if template == TemplateKind::Trajectory {
        vec![0, 1, 2]
    } else if let Some(rest) = question.split("timepoints ").nth(1) {
        let mut parts = rest.split(" and ");
        let a = parts.next()?.trim().parse().ok()?;
        let b = parts.next()?.split([':', ' ']).next()?.trim().parse().ok()?;
        vec![a, b]
    } else if let Some(rest) = question.split("timepoint ").nth(1) {
        vec![rest.split([':', ' ']).next()?.trim().parse().ok()?]
    } else {
        vec![0]
    };
    let lesion = question
        .split("of lesion ")
        .nth(1)
        .and_then(|rest| rest.trim_end_matches('.').trim().parse().ok())
        .unwrap_or(1);
    let modality = ["t1ce", "flair", "t2", "t1"]
        .iter()
        .find(|m| {
            question.contains(&format!("the {m} scan"))
                || question.contains(&format!("maximum {m} intensity"))
        })
        .and_then(|m| Modality::parse(m))
        .unwrap_or(Modality::T1ce);
    Some(ParsedQuestion {
        template,
        case_id,
        pathology,
        timepoints,
        lesion,
        modality,
    })
}

// ---- analysis-step decomposition -------------------------------------------

/// One analysis-agent tool application.
#[derive(Debug, Clone, PartialEq)]
pub enum AnaStep {
    Enumerate { tp: usize },
    Localize { tp: usize, lesion: u32 },
    Features { tp: usize, lesion: u32, modality: Modality },
    ListLabels { scope: String },
    Match { tp0: usize, tp1: usize },
    Visualize { tp: usize },
}

/// The logical job an item demands, from which every topology's plan derives.
#[derive(Debug, Clone)]
pub struct JobShape {
    pub pathology_pipeline: bool,
    pub model: SegModel,
    pub atlas: AtlasSpace,
    pub timepoints: Vec<usize>,
    pub preprocessed: bool,
    pub anatomy_modality: Option<Modality>,
    pub ana_steps: Vec<AnaStep>,
    pub final_text: String,
}

/// Analysis steps for a template; `lesion_count` comes from the oracle at
/// generation time and from the enumerate observation in the live planner.
pub fn ana_steps_for(
    template: TemplateKind,
    slots_tp: &[usize],
    lesion_slot: u32,
    modality: Modality,
    model: SegModel,
    lesion_count: &dyn Fn(usize) -> u32,
) -> Vec<AnaStep> {
    let tp = slots_tp[0];
    match template {
        TemplateKind::SegPathology | TemplateKind::SegAnatomy => vec![],
        TemplateKind::CountVolume | TemplateKind::LargestGeometry => {
            vec![AnaStep::Enumerate { tp }]
        }
        TemplateKind::LargestLobe => vec![
            AnaStep::Enumerate { tp },
            AnaStep::Localize { tp, lesion: 1 },
        ],
        TemplateKind::LesionFeatures => vec![
            AnaStep::Enumerate { tp },
            AnaStep::Features {
                tp,
                lesion: lesion_slot,
                modality,
            },
        ],
        TemplateKind::FullReport => {
            let mut steps = vec![AnaStep::Enumerate { tp }];
            for lesion in 1..=lesion_count(tp) {
                steps.push(AnaStep::Localize { tp, lesion });
            }
            steps
        }
        TemplateKind::FeatureReport => {
            let mut steps = vec![AnaStep::Enumerate { tp }];
            for lesion in 1..=lesion_count(tp) {
                steps.push(AnaStep::Features {
                    tp,
                    lesion,
                    modality,
                });
            }
            steps
        }
        TemplateKind::Vocabulary => vec![
            AnaStep::ListLabels {
                scope: model.name().to_string(),
            },
            AnaStep::Enumerate { tp },
        ],
        TemplateKind::Snapshot => vec![AnaStep::Enumerate { tp }, AnaStep::Visualize { tp }],
        TemplateKind::VolumeChange => vec![
            AnaStep::Enumerate { tp: slots_tp[0] },
            AnaStep::Enumerate { tp: slots_tp[1] },
        ],
        TemplateKind::NewResolved | TemplateKind::MatchedReport | TemplateKind::Growth => vec![
            AnaStep::Enumerate { tp: slots_tp[0] },
            AnaStep::Enumerate { tp: slots_tp[1] },
            AnaStep::Match {
                tp0: slots_tp[0],
                tp1: slots_tp[1],
            },
        ],
        TemplateKind::Trajectory => slots_tp
            .iter()
            .map(|&tp| AnaStep::Enumerate { tp })
            .collect(),
    }
}

// ---- plan construction ------------------------------------------------------

fn seeded_slot(modality: Modality, tp: usize) -> String {
    format!("{}@t{tp}", modality.name())
}

fn source_slot(preprocessed: bool, needs_pipeline: bool, modality: Modality, tp: usize) -> String {
    if preprocessed || !needs_pipeline {
        seeded_slot(modality, tp)
    } else {
        format!("reg_{}@t{tp}", modality.name())
    }
}

fn pre_steps(agent: AgentName, tp: usize, atlas: AtlasSpace) -> Vec<PlanStep> {
    let mut steps = Vec::new();
    for m in Modality::ALL {
        steps.push(PlanStep::tool(
            agent,
            "skull_strip",
            &[],
            &[("image", &seeded_slot(m, tp))],
            &[(&format!("str_{}@t{tp}", m.name()), 0)],
        ));
    }
    for m in Modality::ALL {
        steps.push(PlanStep::tool(
            agent,
            "register",
            &[("target", json!(format!("atlas:{}", atlas.name())))],
            &[("image", &format!("str_{}@t{tp}", m.name()))],
            &[(&format!("reg_{}@t{tp}", m.name()), 0)],
        ));
    }
    steps
}

fn verify_step(agent: AgentName, shape: &JobShape, tp: usize) -> PlanStep {
    PlanStep::tool(
        agent,
        "verify_registration",
        &[("reference", json!(format!("atlas:{}", shape.atlas.name())))],
        &[(
            "image",
            &source_slot(shape.preprocessed, true, Modality::T1, tp),
        )],
        &[],
    )
}

fn segment_step(agent: AgentName, shape: &JobShape, tp: usize) -> PlanStep {
    // The model argument is deliberately unpinned: fidelity matches the call
    // by name, so a wrong-model run keeps a clean plan while its answer
    // degrades.
    let mut slots: Vec<(String, String)> = Vec::new();
    for m in Modality::ALL {
        slots.push((
            m.name().to_string(),
            source_slot(shape.preprocessed, true, m, tp),
        ));
    }
    let slot_refs: Vec<(&str, &str)> = slots
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    let mut step = PlanStep::tool(
        agent,
        "segment_pathology",
        &[],
        &slot_refs,
        &[(&format!("seg@t{tp}"), 0)],
    );
    if let PlanStepKind::ToolCall { slot_args, .. } = &mut step.kind {
        slot_args.insert("model".into(), json!(shape.model.name()));
    }
    step
}

fn anatomy_step(agent: AgentName, modality: Modality, tp: usize) -> PlanStep {
    PlanStep::tool(
        agent,
        "segment_anatomy",
        &[],
        &[("image", &seeded_slot(modality, tp))],
        &[(&format!("anat@t{tp}"), 0)],
    )
}

fn ana_tool_step(agent: AgentName, shape: &JobShape, step: &AnaStep) -> PlanStep {
    match step {
        AnaStep::Enumerate { tp } => PlanStep::tool(
            agent,
            "enumerate_lesions",
            &[],
            &[("mask", &format!("seg@t{tp}"))],
            &[],
        ),
        AnaStep::Localize { tp, lesion } => PlanStep::tool(
            agent,
            "localize_lesion",
            &[("lesion_id", json!(lesion))],
            &[("mask", &format!("seg@t{tp}"))],
            &[],
        ),
        AnaStep::Features {
            tp,
            lesion,
            modality,
        } => PlanStep::tool(
            agent,
            "lesion_features",
            &[("lesion_id", json!(lesion))],
            &[
                ("mask", &format!("seg@t{tp}")),
                (
                    "image",
                    &source_slot(shape.preprocessed, shape.pathology_pipeline, *modality, *tp),
                ),
            ],
            &[],
        ),
        AnaStep::ListLabels { scope } => PlanStep::tool(
            agent,
            "list_labels",
            &[("scope", json!(scope))],
            &[],
            &[],
        ),
        AnaStep::Match { tp0, tp1 } => PlanStep::tool(
            agent,
            "match_lesions",
            &[("threshold", json!(DEFAULT_MATCH_THRESHOLD))],
            &[
                ("mask_t0", &format!("seg@t{tp0}")),
                ("mask_t1", &format!("seg@t{tp1}")),
            ],
            &[],
        ),
        AnaStep::Visualize { tp } => PlanStep::tool(
            agent,
            "visualize",
            &[],
            &[
                (
                    "image",
                    &source_slot(shape.preprocessed, shape.pathology_pipeline, Modality::T1, *tp),
                ),
                ("mask", &format!("seg@t{tp}")),
            ],
            &[],
        ),
    }
}

fn seeded_input_slots(shape: &JobShape) -> Vec<String> {
    let mut inputs = Vec::new();
    for &tp in &shape.timepoints {
        for m in Modality::ALL {
            inputs.push(seeded_slot(m, tp));
        }
    }
    inputs
}

/// Segmentation-leg steps (per timepoint): a local prerequisite check before
/// each pathology model run; anatomy runs directly.
fn seg_leg_steps(agent: AgentName, shape: &JobShape) -> Vec<PlanStep> {
    let mut steps = Vec::new();
    for &tp in &shape.timepoints {
        if let Some(modality) = shape.anatomy_modality {
            steps.push(anatomy_step(agent, modality, tp));
        } else {
            steps.push(verify_step(agent, shape, tp));
            steps.push(segment_step(agent, shape, tp));
        }
    }
    steps
}

fn needs_preprocessing_leg(shape: &JobShape) -> bool {
    shape.pathology_pipeline && !shape.preprocessed
}

/// Build the expected plan for one topology.
pub fn build_plan(shape: &JobShape, topology: Topology) -> EpisodeScript {
    let mut steps = Vec::new();
    match topology {
        Topology::Single => {
            let g = AgentName::Generalist;
            if needs_preprocessing_leg(shape) {
                for &tp in &shape.timepoints {
                    steps.extend(pre_steps(g, tp, shape.atlas));
                }
            }
            for &tp in &shape.timepoints {
                if let Some(modality) = shape.anatomy_modality {
                    steps.push(anatomy_step(g, modality, tp));
                } else {
                    steps.push(segment_step(g, shape, tp));
                }
            }
            for ana in &shape.ana_steps {
                steps.push(ana_tool_step(g, shape, ana));
            }
            steps.push(PlanStep::final_answer(g, &shape.final_text));
        }
        Topology::AgentsAsTools => {
            let a = AgentName::Analysis;
            if needs_preprocessing_leg(shape) {
                let mut pre = Vec::new();
                for &tp in &shape.timepoints {
                    pre.extend(pre_steps(AgentName::Preprocessing, tp, shape.atlas));
                }
                steps.push(PlanStep {
                    agent: a,
                    kind: PlanStepKind::Delegate {
                        target: AgentName::Preprocessing,
                        task: "skull-strip and register the scans".into(),
                        input_slots: seeded_input_slots(shape),
                        expected_outputs: vec!["handles".into()],
                        steps: pre,
                    },
                });
            }
            steps.push(PlanStep {
                agent: a,
                kind: PlanStepKind::Delegate {
                    target: AgentName::Segmentation,
                    task: seg_task(shape),
                    input_slots: seeded_input_slots(shape),
                    expected_outputs: vec!["handles".into()],
                    steps: seg_leg_steps(AgentName::Segmentation, shape),
                },
            });
            for ana in &shape.ana_steps {
                steps.push(ana_tool_step(a, shape, ana));
            }
            steps.push(PlanStep::final_answer(a, &shape.final_text));
        }
        Topology::Handoffs => {
            // Shared skeleton with kind substitution: each delegation becomes
            // a forward handoff and control never returns; the last active
            // agent answers.
            let mut current = AgentName::Analysis;
            if needs_preprocessing_leg(shape) {
                steps.push(PlanStep::handoff(current, AgentName::Preprocessing));
                current = AgentName::Preprocessing;
                for &tp in &shape.timepoints {
                    steps.extend(pre_steps(current, tp, shape.atlas));
                }
            }
            steps.push(PlanStep::handoff(current, AgentName::Segmentation));
            current = AgentName::Segmentation;
            steps.extend(seg_leg_steps(current, shape));
            for ana in &shape.ana_steps {
                steps.push(ana_tool_step(current, shape, ana));
            }
            steps.push(PlanStep::final_answer(current, &shape.final_text));
        }
        Topology::Orchestrator => {
            let o = AgentName::Orchestrator;
            // The orchestrator always routes a preprocessing check first; on
            // ready cases the sub-episode has nothing to do.
            let pre = if needs_preprocessing_leg(shape) {
                let mut v = Vec::new();
                for &tp in &shape.timepoints {
                    v.extend(pre_steps(AgentName::Preprocessing, tp, shape.atlas));
                }
                v
            } else {
                Vec::new()
            };
            steps.push(PlanStep {
                agent: o,
                kind: PlanStepKind::Delegate {
                    target: AgentName::Preprocessing,
                    task: "prepare the scans for segmentation".into(),
                    input_slots: seeded_input_slots(shape),
                    expected_outputs: vec!["handles".into()],
                    steps: pre,
                },
            });
            steps.push(PlanStep {
                agent: o,
                kind: PlanStepKind::Delegate {
                    target: AgentName::Segmentation,
                    task: seg_task(shape),
                    input_slots: seeded_input_slots(shape),
                    expected_outputs: vec!["handles".into()],
                    steps: seg_leg_steps(AgentName::Segmentation, shape),
                },
            });
            if !shape.ana_steps.is_empty() {
                let ana: Vec<PlanStep> = shape
                    .ana_steps
                    .iter()
                    .map(|s| ana_tool_step(AgentName::Analysis, shape, s))
                    .collect();
                steps.push(PlanStep {
                    agent: o,
                    kind: PlanStepKind::Delegate {
                        target: AgentName::Analysis,
                        task: "measure the segmentation and report the requested fields".into(),
                        input_slots: shape
                            .timepoints
                            .iter()
                            .map(|tp| format!("seg@t{tp}"))
                            .collect(),
                        expected_outputs: vec!["fields".into()],
                        steps: ana,
                    },
                });
            }
            steps.push(PlanStep::final_answer(o, &shape.final_text));
        }
    }
    EpisodeScript { steps }
}

/// Analysis tool step exposed for the live planner's per-lesion expansion.
pub fn planner_ana_step(agent: AgentName, shape: &JobShape, step: &AnaStep) -> PlanStep {
    ana_tool_step(agent, shape, step)
}

fn seg_task(shape: &JobShape) -> String {
    if shape.anatomy_modality.is_some() {
        "segment the anatomical regions".to_string()
    } else {
        format!("verify prerequisites and segment with the {} model", shape.model.name())
    }
}

// ---- expected answers -------------------------------------------------------

fn num(name: &str, value: f64) -> AnswerField {
    AnswerField {
        name: name.into(),
        aliases: vec![],
        value: FieldValue::Numeric {
            value,
            rel_tol: 0.01,
            abs_tol: 0.0,
        },
    }
}

fn num_abs(name: &str, value: f64, abs_tol: f64) -> AnswerField {
    AnswerField {
        name: name.into(),
        aliases: vec![],
        value: FieldValue::Numeric {
            value,
            rel_tol: 0.01,
            abs_tol,
        },
    }
}

fn count(name: &str, value: usize) -> AnswerField {
    AnswerField {
        name: name.into(),
        aliases: vec![],
        value: FieldValue::Numeric {
            value: value as f64,
            rel_tol: 0.0,
            abs_tol: 1e-9,
        },
    }
}

fn text(name: &str, value: &str) -> AnswerField {
    AnswerField {
        name: name.into(),
        aliases: vec![],
        value: FieldValue::ExactString {
            value: value.into(),
        },
    }
}

fn vector(name: &str, value: [f64; 3]) -> AnswerField {
    AnswerField {
        name: name.into(),
        aliases: vec![],
        value: FieldValue::Vector {
            value,
            abs_tol: 1.0,
        },
    }
}

fn pct_change(v0: f64, v1: f64) -> f64 {
    if v0 == 0.0 {
        if v1 == 0.0 {
            0.0
        } else {
            100.0
        }
    } else {
        (v1 - v0) / v0 * 100.0
    }
}

/// Classify a percent change against the growth threshold.
pub fn trend_of(pct: f64) -> &'static str {
    if pct > GROWTH_THRESHOLD_PCT {
        "increased"
    } else if pct < -GROWTH_THRESHOLD_PCT {
        "decreased"
    } else {
        "stable"
    }
}

/// Compute the expected answer fields for a template by brute force over
/// ground truth, bypassing the toolbox.
pub fn expected_answer(
    template: TemplateKind,
    spec: &PhantomSpec,
    gt: &GroundTruth,
    slots: &TemplateSlots,
) -> Result<Vec<AnswerField>, BenchError> {
    let case = &spec.case_id;
    let tp = slots.timepoints[0];
    let model = gt.pathology.model();
    let fields = match template {
        TemplateKind::SegPathology => vec![AnswerField {
            name: "segmentation_path".into(),
            aliases: vec!["segmentation output path".into(), "output path".into()],
            value: FieldValue::ExactString {
                value: format!("outputs/{case}_t{tp}_{}_seg.nii", model.name()),
            },
        }],
        TemplateKind::SegAnatomy => vec![
            AnswerField {
                name: "anatomy_mask_path".into(),
                aliases: vec!["mask path".into()],
                value: FieldValue::ExactString {
                    value: format!("outputs/{case}_t{tp}_anatomy_seg.nii"),
                },
            },
            AnswerField {
                name: "volumes_table_path".into(),
                aliases: vec!["volume table path".into()],
                value: FieldValue::ExactString {
                    value: format!("outputs/{case}_t{tp}_anatomy_volumes.csv"),
                },
            },
        ],
        TemplateKind::CountVolume => {
            let lesions = oracle::lesions_at(gt, tp);
            vec![
                count("lesion_count", lesions.len()),
                num("total_volume_mm3", oracle::total_volume_mm3(&lesions)),
            ]
        }
        TemplateKind::LargestGeometry => {
            let lesions = oracle::lesions_at(gt, tp);
            let largest = lesions
                .first()
                .ok_or_else(|| BenchError::Template("case has no lesions".into()))?;
            vec![
                num("largest_lesion_volume_mm3", largest.volume_mm3),
                vector("largest_lesion_centroid_mm", largest.centroid_mm),
            ]
        }
        TemplateKind::LargestLobe => {
            let lesions = oracle::lesions_at(gt, tp);
            let largest = lesions
                .first()
                .ok_or_else(|| BenchError::Template("case has no lesions".into()))?;
            let (lobe, fraction) = oracle::lobe_of(gt, largest);
            vec![text("lobe", &lobe), num_abs("overlap_fraction", fraction, 0.02)]
        }
        TemplateKind::LesionFeatures => {
            let lesions = oracle::lesions_at(gt, tp);
            let lesion = lesions
                .get(slots.lesion as usize - 1)
                .ok_or_else(|| BenchError::Template("lesion slot out of range".into()))?;
            let grid = gt.atlas_grid();
            let area = oracle::surface_area_mm2(lesion, &grid);
            let (mean, max) = oracle::intensity_stats(spec, gt, tp, slots.modality, lesion);
            vec![
                num("volume_mm3", lesion.volume_mm3),
                num("surface_area_mm2", area),
                num_abs("sphericity", oracle::sphericity(lesion.volume_mm3, area), 0.01),
                num_abs("elongation", oracle::elongation(lesion, grid.spacing), 0.01),
                num("mean_intensity", mean),
                num("max_intensity", max),
            ]
        }
        TemplateKind::FullReport => {
            let lesions = oracle::lesions_at(gt, tp);
            let mut fields = vec![count("lesion_count", lesions.len())];
            for lesion in &lesions {
                let (lobe, _) = oracle::lobe_of(gt, lesion);
                fields.push(num(
                    &format!("lesion_{}_volume_mm3", lesion.id),
                    lesion.volume_mm3,
                ));
                fields.push(vector(
                    &format!("lesion_{}_centroid_mm", lesion.id),
                    lesion.centroid_mm,
                ));
                fields.push(text(&format!("lesion_{}_lobe", lesion.id), &lobe));
            }
            fields
        }
        TemplateKind::FeatureReport => {
            let lesions = oracle::lesions_at(gt, tp);
            let grid = gt.atlas_grid();
            let mut fields = vec![count("lesion_count", lesions.len())];
            for lesion in &lesions {
                let area = oracle::surface_area_mm2(lesion, &grid);
                let (mean, max) = oracle::intensity_stats(spec, gt, tp, slots.modality, lesion);
                let id = lesion.id;
                fields.push(num(&format!("lesion_{id}_volume_mm3"), lesion.volume_mm3));
                fields.push(num(&format!("lesion_{id}_surface_area_mm2"), area));
                fields.push(num_abs(
                    &format!("lesion_{id}_sphericity"),
                    oracle::sphericity(lesion.volume_mm3, area),
                    0.01,
                ));
                fields.push(num_abs(
                    &format!("lesion_{id}_elongation"),
                    oracle::elongation(lesion, grid.spacing),
                    0.01,
                ));
                fields.push(num(&format!("lesion_{id}_mean_intensity"), mean));
                fields.push(num(&format!("lesion_{id}_max_intensity"), max));
            }
            fields
        }
        TemplateKind::Vocabulary => {
            let lesions = oracle::lesions_at(gt, tp);
            vec![
                count("lesion_count", lesions.len()),
                AnswerField {
                    name: "label_names".into(),
                    aliases: vec!["labels".into()],
                    value: FieldValue::StringSet {
                        values: model.vocabulary().values().cloned().collect(),
                    },
                },
            ]
        }
        TemplateKind::Snapshot => {
            let lesions = oracle::lesions_at(gt, tp);
            vec![
                AnswerField {
                    name: "snapshot_path".into(),
                    aliases: vec!["snapshot".into(), "path".into()],
                    value: FieldValue::ExactString {
                        value: "viz_1.pgm".into(),
                    },
                },
                count("lesion_count", lesions.len()),
            ]
        }
        TemplateKind::VolumeChange => {
            let (a, b) = (slots.timepoints[0], slots.timepoints[1]);
            let v0 = oracle::total_volume_mm3(&oracle::lesions_at(gt, a));
            let v1 = oracle::total_volume_mm3(&oracle::lesions_at(gt, b));
            vec![
                num(&format!("total_volume_t{a}_mm3"), v0),
                num(&format!("total_volume_t{b}_mm3"), v1),
                num_abs("volume_change_mm3", v1 - v0, 0.5),
                num_abs("volume_change_percent", pct_change(v0, v1), 0.1),
            ]
        }
        TemplateKind::NewResolved => {
            let (a, b) = (slots.timepoints[0], slots.timepoints[1]);
            let t0 = oracle::lesions_at(gt, a);
            let t1 = oracle::lesions_at(gt, b);
            let pairs = oracle::optimal_matching(&t0, &t1, DEFAULT_MATCH_THRESHOLD);
            vec![
                count("matched_lesion_count", pairs.len()),
                count("new_lesion_count", t1.len() - pairs.len()),
                count("resolved_lesion_count", t0.len() - pairs.len()),
            ]
        }
        TemplateKind::MatchedReport => {
            let (a, b) = (slots.timepoints[0], slots.timepoints[1]);
            let t0 = oracle::lesions_at(gt, a);
            let t1 = oracle::lesions_at(gt, b);
            let pairs = oracle::optimal_matching(&t0, &t1, DEFAULT_MATCH_THRESHOLD);
            let mut fields = vec![count("matched_lesion_count", pairs.len())];
            for (j, (id0, id1, _)) in pairs.iter().enumerate() {
                let v0 = t0[*id0 as usize - 1].volume_mm3;
                let v1 = t1[*id1 as usize - 1].volume_mm3;
                let j = j + 1;
                fields.push(num(&format!("pair_{j}_volume_t{a}_mm3"), v0));
                fields.push(num(&format!("pair_{j}_volume_t{b}_mm3"), v1));
                fields.push(num_abs(&format!("pair_{j}_change_percent"), pct_change(v0, v1), 0.1));
            }
            fields
        }
        TemplateKind::Growth => {
            let (a, b) = (slots.timepoints[0], slots.timepoints[1]);
            let v0 = oracle::total_volume_mm3(&oracle::lesions_at(gt, a));
            let v1 = oracle::total_volume_mm3(&oracle::lesions_at(gt, b));
            let pct = pct_change(v0, v1);
            vec![
                text("trend", trend_of(pct)),
                num_abs("volume_change_percent", pct, 0.1),
            ]
        }
        TemplateKind::Trajectory => (0..3)
            .map(|tp| {
                num(
                    &format!("total_volume_t{tp}_mm3"),
                    oracle::total_volume_mm3(&oracle::lesions_at(gt, tp)),
                )
            })
            .collect(),
    };
    Ok(fields)
}

// ---- item assembly ----------------------------------------------------------

/// Compatibility rules between a template and a case.
pub fn template_compatible(
    template: TemplateKind,
    preprocessed: bool,
    timepoints: usize,
) -> Result<(), BenchError> {
    let tier = template.tier();
    if template == TemplateKind::SegPathology && !preprocessed {
        // Tier-1 pathology items are segment-and-stop on ready cases.
        return Err(BenchError::Template(
            "tier-1 pathology segmentation requires a preprocessed case".into(),
        ));
    }
    if template == TemplateKind::Trajectory && timepoints != 3 {
        return Err(BenchError::Template(
            "trajectory items need exactly three timepoints".into(),
        ));
    }
    if tier == 3 && timepoints < 2 {
        return Err(BenchError::Template(
            "tier-3 items need at least two timepoints".into(),
        ));
    }
    Ok(())
}

/// Assemble one benchmark item: oracle answer first, then one plan per
/// topology from the shared skeleton.
pub fn build_item(
    template: TemplateKind,
    spec: &PhantomSpec,
    gt: &GroundTruth,
    item_id: &str,
    slots: &TemplateSlots,
) -> Result<BenchmarkItem, BenchError> {
    template_compatible(template, spec.preprocessed, spec.timepoints)?;
    for &tp in &slots.timepoints {
        if tp >= spec.timepoints {
            return Err(BenchError::Template(format!(
                "timepoint {tp} out of range for {}",
                spec.case_id
            )));
        }
    }
    let question = render_question(template, &spec.case_id, spec.pathology, slots);
    let fields = expected_answer(template, spec, gt, slots)?;
    let final_text = render_answer(&fields);

    let model = gt.pathology.model();
    let shape = JobShape {
        pathology_pipeline: template != TemplateKind::SegAnatomy,
        model,
        atlas: gt.atlas,
        timepoints: slots.timepoints.clone(),
        preprocessed: spec.preprocessed,
        anatomy_modality: (template == TemplateKind::SegAnatomy).then_some(slots.modality),
        ana_steps: ana_steps_for(
            template,
            &slots.timepoints,
            slots.lesion,
            slots.modality,
            model,
            &|tp| oracle::lesions_at(gt, tp).len() as u32,
        ),
        final_text,
    };
    let mut plans = BTreeMap::new();
    for topology in Topology::ALL {
        plans.insert(topology.as_str().to_string(), build_plan(&shape, topology));
    }
    let item = BenchmarkItem {
        record: "item".into(),
        item_id: item_id.to_string(),
        tier: template.tier(),
        question,
        case_id: spec.case_id.clone(),
        item_timepoints: slots.timepoints.clone(),
        expected_plans: plans,
        expected_answer: fields,
        extra: Default::default(),
    };
    item.validate()?;
    Ok(item)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::scripted::plan_len;

    fn shape(preprocessed: bool, timepoints: Vec<usize>, ana: Vec<AnaStep>) -> JobShape {
        JobShape {
            pathology_pipeline: true,
            model: SegModel::Glioma,
            atlas: AtlasSpace::Sri24,
            timepoints,
            preprocessed,
            anatomy_modality: None,
            ana_steps: ana,
            final_text: "lesion_count: 1".into(),
        }
    }

    #[test]
    fn tier1_single_plan_is_two_actions() {
        let s = shape(true, vec![0], vec![]);
        let plan = build_plan(&s, Topology::Single);
        assert_eq!(plan.len(), 2);
    }

    #[test]
    fn plan_length_ordering_holds_per_shape() {
        for (preprocessed, tps, ana) in [
            (true, vec![0], vec![]),
            (false, vec![0], vec![AnaStep::Enumerate { tp: 0 }]),
            (
                true,
                vec![0, 1],
                vec![
                    AnaStep::Enumerate { tp: 0 },
                    AnaStep::Enumerate { tp: 1 },
                    AnaStep::Match { tp0: 0, tp1: 1 },
                ],
            ),
            (
                false,
                vec![0, 1],
                vec![
                    AnaStep::Enumerate { tp: 0 },
                    AnaStep::Enumerate { tp: 1 },
                    AnaStep::Match { tp0: 0, tp1: 1 },
                ],
            ),
        ] {
            let s = shape(preprocessed, tps, ana.clone());
            let single = plan_len(&build_plan(&s, Topology::Single).steps);
            let aat = plan_len(&build_plan(&s, Topology::AgentsAsTools).steps);
            let handoffs = plan_len(&build_plan(&s, Topology::Handoffs).steps);
            let orch = plan_len(&build_plan(&s, Topology::Orchestrator).steps);
            assert!(single <= aat, "single {single} > aat {aat}");
            assert_eq!(aat, handoffs, "aat {aat} != handoffs {handoffs}");
            assert!(orch >= aat, "orch {orch} < aat {aat}");
            if !ana.is_empty() {
                assert!(single < aat, "tier-2/3 must be strict: {single} vs {aat}");
                assert!(orch > handoffs, "tier-2/3 must be strict: {orch} vs {handoffs}");
            }
        }
    }

    #[test]
    fn question_round_trips_through_the_parser() {
        for template in TemplateKind::TIER1
            .iter()
            .chain(TemplateKind::TIER2.iter())
            .chain(TemplateKind::TIER3.iter())
        {
            let slots = TemplateSlots {
                timepoints: match template.tier() {
                    3 if *template == TemplateKind::Trajectory => vec![0, 1, 2],
                    3 => vec![0, 1],
                    _ => vec![0],
                },
                lesion: 2,
                modality: Modality::Flair,
            };
            let q = render_question(*template, "case-079", Pathology::Metastasis, &slots);
            let parsed = parse_question(&q).unwrap_or_else(|| panic!("unparsed: {q}"));
            assert_eq!(parsed.template, *template, "{q}");
            assert_eq!(parsed.case_id, "case-079");
            // Anatomy questions do not name a pathology; every other template does.
            if *template != TemplateKind::SegAnatomy {
                assert_eq!(parsed.pathology, Pathology::Metastasis);
            }
            assert_eq!(parsed.timepoints, slots.timepoints);
            if *template == TemplateKind::LesionFeatures {
                assert_eq!(parsed.lesion, 2);
            }
            if matches!(
                template,
                TemplateKind::LesionFeatures | TemplateKind::FeatureReport | TemplateKind::SegAnatomy
            ) {
                assert_eq!(parsed.modality, Modality::Flair);
            }
        }
    }

    #[test]
    fn postop_questions_parse_as_postop() {
        let slots = TemplateSlots::default();
        let q = render_question(
            TemplateKind::CountVolume,
            "case-003",
            Pathology::PostopGlioma,
            &slots,
        );
        assert_eq!(parse_question(&q).unwrap().pathology, Pathology::PostopGlioma);
    }
}
