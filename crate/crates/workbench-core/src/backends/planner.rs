//! Rule-based offline planner: template-matches the question, reads the case
//! inventory, and drives the same workflow skeletons the benchmark defines,
//! reacting to tool observations (discovered lesion counts, handles) and
//! composing the final answer from what it actually measured.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::benchmark::templates::{
    ana_steps_for, build_plan, parse_question, planner_ana_step, trend_of, AnaStep, JobShape,
    ParsedQuestion, TemplateKind,
};
use crate::kernel::agents::{AgentName, Topology};
use crate::kernel::episode::{
    BackendDecision, BackendError, DecisionBackend, DecisionContext, Message, Role,
    ToolInvocation,
};
use crate::kernel::protocol::InterAgentRequest;
use crate::toolbox::result::ToolResult;

/// Observation key: which logical measurement a tool result answers.
#[derive(Debug, Clone, PartialEq, Eq)]
struct ObsKey {
    tool: String,
    tp: usize,
    lesion: u64,
}

#[derive(Debug, Clone)]
enum PStep {
    Tool {
        tool: String,
        args: serde_json::Map<String, Value>,
        bind: Vec<(String, usize)>,
    },
    Handoff {
        target: AgentName,
    },
    Delegate {
        target: AgentName,
        task: String,
        input_slots: Vec<String>,
        expected_outputs: Vec<String>,
        sub: Vec<PStep>,
    },
    /// Expands into per-lesion steps once the enumerate count is observed.
    PerLesion { tp: usize },
    /// Composes the answer from accumulated observations.
    ComposeFinal,
}

struct Frame {
    steps: Vec<PStep>,
    pos: usize,
}

struct PlannerState {
    parsed: ParsedQuestion,
    shape: JobShape,
    frames: Vec<Frame>,
    bindings: BTreeMap<String, String>,
    pending_bind: Vec<(String, usize)>,
    pending_obs: Option<ObsKey>,
    observations: Vec<(ObsKey, ToolResult)>,
}

pub struct PlannerBackend {
    topology: Topology,
    state: Option<PlannerState>,
    model: String,
    model_override: Option<crate::toolbox::vocab::SegModel>,
}

impl PlannerBackend {
    pub fn new(topology: Topology) -> Self {
        PlannerBackend {
            topology,
            state: None,
            model: "planner".to_string(),
            model_override: None,
        }
    }

    /// Force a segmentation model regardless of the question, for fault
    /// injection: a wrong model leaves the plan clean and corrupts the answer.
    pub fn with_model_override(mut self, model: crate::toolbox::vocab::SegModel) -> Self {
        self.model_override = Some(model);
        self
    }

    /// The segmentation model the planner would pick for a question; always
    /// consistent with the pathology keywords.
    pub fn model_for_question(question: &str) -> Option<crate::toolbox::vocab::SegModel> {
        parse_question(question).map(|p| p.pathology.model())
    }

    fn init(&mut self, ctx: &DecisionContext<'_>) -> Result<(), BackendError> {
        let Some(first) = ctx.messages.first() else {
            return Err(BackendError("planner needs a user message".into()));
        };
        let (question, inventory) = first
            .content
            .split_once("\n\n")
            .ok_or_else(|| BackendError("user message lacks a case inventory".into()))?;
        let parsed = parse_question(question).ok_or_else(|| {
            BackendError(format!("question does not match the grammar: {question}"))
        })?;
        let preprocessed = inventory.contains("Preprocessing: done");
        let mut bindings = BTreeMap::new();
        for line in inventory.lines() {
            let Some(rest) = line.strip_prefix("Timepoint ") else {
                continue;
            };
            let Some((tp, images)) = rest.split_once(" images: ") else {
                continue;
            };
            let Ok(tp) = tp.trim().parse::<usize>() else {
                continue;
            };
            for part in images.split(", ") {
                if let Some((modality, handle)) = part.split_once('=') {
                    bindings.insert(format!("{modality}@t{tp}"), handle.trim().to_string());
                }
            }
        }

        // Per-lesion templates defer their fan-out until enumerate reports
        // the count; everything else is fully determined by the question.
        let deferred = matches!(
            parsed.template,
            TemplateKind::FullReport | TemplateKind::FeatureReport
        );
        let model = parsed.pathology.model();
        let ana_steps = ana_steps_for(
            parsed.template,
            &parsed.timepoints,
            parsed.lesion,
            parsed.modality,
            model,
            &|_| 0,
        );
        let shape = JobShape {
            pathology_pipeline: parsed.template != TemplateKind::SegAnatomy,
            model,
            atlas: parsed.pathology.atlas(),
            timepoints: parsed.timepoints.clone(),
            preprocessed,
            anatomy_modality: (parsed.template == TemplateKind::SegAnatomy)
                .then_some(parsed.modality),
            ana_steps,
            final_text: String::new(),
        };
        let script = build_plan(&shape, self.topology);
        let mut steps = convert_steps(&script.steps);
        if deferred {
            insert_per_lesion_marker(&mut steps, parsed.timepoints[0]);
        }
        self.state = Some(PlannerState {
            parsed,
            shape,
            frames: vec![Frame { steps, pos: 0 }],
            bindings,
            pending_bind: Vec::new(),
            pending_obs: None,
            observations: Vec::new(),
        });
        Ok(())
    }
}

/// Convert generated plan steps into the planner's runnable form, replacing
/// the final-answer placeholder with the compose hook.
fn convert_steps(steps: &[crate::backends::scripted::PlanStep]) -> Vec<PStep> {
    use crate::backends::scripted::PlanStepKind;
    steps
        .iter()
        .map(|s| match &s.kind {
            PlanStepKind::ToolCall {
                tool,
                pinned_args,
                slot_args,
                bind,
            } => {
                let mut args = pinned_args.clone();
                for (k, v) in slot_args {
                    args.insert(k.clone(), v.clone());
                }
                PStep::Tool {
                    tool: tool.clone(),
                    args,
                    bind: bind.clone(),
                }
            }
            PlanStepKind::Handoff { target } => PStep::Handoff { target: *target },
            PlanStepKind::Delegate {
                target,
                task,
                input_slots,
                expected_outputs,
                steps,
            } => PStep::Delegate {
                target: *target,
                task: task.clone(),
                input_slots: input_slots.clone(),
                expected_outputs: expected_outputs.clone(),
                sub: convert_steps(steps),
            },
            PlanStepKind::FinalAnswer { .. } => PStep::ComposeFinal,
        })
        .collect()
}

/// Insert the per-lesion expansion marker directly after the enumerate step
/// for the given timepoint, wherever it lives in the (possibly nested) plan.
fn insert_per_lesion_marker(steps: &mut Vec<PStep>, tp: usize) -> bool {
    let mask = format!("$seg@t{tp}");
    for i in 0..steps.len() {
        let found = match &mut steps[i] {
            PStep::Tool { tool, args, .. } => {
                tool == "enumerate_lesions"
                    && args.get("mask").and_then(Value::as_str) == Some(mask.as_str())
            }
            PStep::Delegate { sub, .. } => {
                if insert_per_lesion_marker(sub, tp) {
                    return true;
                }
                false
            }
            _ => false,
        };
        if found {
            steps.insert(i + 1, PStep::PerLesion { tp });
            return true;
        }
    }
    false
}

fn obs_key(tool: &str, args: &serde_json::Map<String, Value>) -> ObsKey {
    let slot_tp = |key: &str| -> usize {
        args.get(key)
            .and_then(Value::as_str)
            .and_then(|s| s.rsplit("@t").next())
            .and_then(|n| n.parse().ok())
            .unwrap_or(0)
    };
    let tp = match tool {
        "match_lesions" => slot_tp("mask_t0"),
        "segment_pathology" => slot_tp("t1"),
        "segment_anatomy" | "skull_strip" | "register" => slot_tp("image"),
        _ => slot_tp("mask"),
    };
    let lesion = args.get("lesion_id").and_then(Value::as_u64).unwrap_or(0);
    ObsKey {
        tool: tool.to_string(),
        tp,
        lesion,
    }
}

impl PlannerState {
    fn resolve(&self, v: &Value) -> Result<Value, BackendError> {
        match v {
            Value::String(s) if s.starts_with('$') => {
                let slot = &s[1..];
                self.bindings
                    .get(slot)
                    .map(|id| Value::String(id.clone()))
                    .ok_or_else(|| BackendError(format!("planner: unresolved slot '${slot}'")))
            }
            other => Ok(other.clone()),
        }
    }

    fn absorb(&mut self, messages: &[Message]) {
        if self.pending_bind.is_empty() && self.pending_obs.is_none() {
            return;
        }
        let Some(last_tool) = messages.iter().rev().find(|m| m.role == Role::Tool) else {
            return;
        };
        let Ok(result) = serde_json::from_str::<ToolResult>(&last_tool.content) else {
            return;
        };
        for (slot, idx) in self.pending_bind.drain(..) {
            if let Some(h) = result.handles.get(idx) {
                self.bindings.insert(slot, h.id.clone());
            }
        }
        if let Some(key) = self.pending_obs.take() {
            self.observations.push((key, result));
        }
    }

    fn observed(&self, tool: &str, tp: usize, lesion: u64) -> Option<&ToolResult> {
        self.observations
            .iter()
            .find(|(k, _)| k.tool == tool && k.tp == tp && k.lesion == lesion)
            .map(|(_, r)| r)
    }

    fn lesion_count(&self, tp: usize) -> u64 {
        self.observed("enumerate_lesions", tp, 0)
            .and_then(|r| r.payload.get("lesion_count"))
            .and_then(Value::as_u64)
            .unwrap_or(0)
    }
}

impl DecisionBackend for PlannerBackend {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<BackendDecision, BackendError> {
        if self.state.is_none() {
            self.init(ctx)?;
        }
        let state = self.state.as_mut().expect("initialized above");
        state.absorb(ctx.messages);

        loop {
            let depth = state.frames.len();
            let frame = state.frames.last_mut().expect("frame stack never empties");
            if frame.pos >= frame.steps.len() {
                if depth > 1 {
                    state.frames.pop();
                    return Ok(BackendDecision::Final("done".to_string()));
                }
                return Err(BackendError("planner exhausted without an answer".into()));
            }
            let step = frame.steps[frame.pos].clone();
            frame.pos += 1;
            match step {
                PStep::Tool { tool, args, bind } => {
                    let mut resolved = serde_json::Map::new();
                    for (k, v) in &args {
                        resolved.insert(k.clone(), state.resolve(v)?);
                    }
                    if tool == "segment_pathology" {
                        if let Some(model) = self.model_override {
                            resolved.insert("model".into(), Value::String(model.name().into()));
                        }
                    }
                    state.pending_bind = bind;
                    state.pending_obs = Some(obs_key(&tool, &args));
                    return Ok(BackendDecision::ToolCalls(vec![ToolInvocation {
                        tool,
                        args: resolved,
                    }]));
                }
                PStep::Handoff { target } => {
                    return Ok(BackendDecision::Handoff(target.as_str().to_string()));
                }
                PStep::Delegate {
                    target,
                    task,
                    input_slots,
                    expected_outputs,
                    sub,
                } => {
                    let inputs = input_slots
                        .iter()
                        .map(|slot| {
                            state
                                .bindings
                                .get(slot)
                                .cloned()
                                .unwrap_or_else(|| slot.clone())
                        })
                        .collect();
                    state.frames.push(Frame { steps: sub, pos: 0 });
                    return Ok(BackendDecision::Subagent(InterAgentRequest {
                        target,
                        task,
                        inputs,
                        expected_outputs,
                    }));
                }
                PStep::PerLesion { tp } => {
                    let count = state.lesion_count(tp) as u32;
                    let agent = ctx.agent.name;
                    let per_lesion: Vec<AnaStep> = match state.parsed.template {
                        TemplateKind::FullReport => (1..=count)
                            .map(|lesion| AnaStep::Localize { tp, lesion })
                            .collect(),
                        TemplateKind::FeatureReport => (1..=count)
                            .map(|lesion| AnaStep::Features {
                                tp,
                                lesion,
                                modality: state.parsed.modality,
                            })
                            .collect(),
                        _ => vec![],
                    };
                    let shape = state.shape.clone();
                    let converted: Vec<PStep> = per_lesion
                        .iter()
                        .map(|ana| {
                            let plan_step = planner_ana_step(agent, &shape, ana);
                            convert_steps(std::slice::from_ref(&plan_step)).remove(0)
                        })
                        .collect();
                    let frame = state.frames.last_mut().expect("frame exists");
                    let at = frame.pos;
                    for (offset, s) in converted.into_iter().enumerate() {
                        frame.steps.insert(at + offset, s);
                    }
                }
                PStep::ComposeFinal => {
                    let text = compose_answer(state);
                    return Ok(BackendDecision::Final(text));
                }
            }
        }
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

// ---- answer composition ------------------------------------------------------

fn fnum(v: f64) -> String {
    format!("{v}")
}

fn payload_f64(r: &ToolResult, key: &str) -> f64 {
    r.payload.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

fn payload_str<'a>(r: &'a ToolResult, key: &str) -> &'a str {
    r.payload.get(key).and_then(Value::as_str).unwrap_or("")
}

fn lesion_rows(r: &ToolResult) -> Vec<&Value> {
    r.payload
        .get("lesions")
        .and_then(Value::as_array)
        .map(|a| a.iter().collect())
        .unwrap_or_default()
}

fn total_volume(r: &ToolResult) -> f64 {
    lesion_rows(r)
        .iter()
        .map(|l| l["volume_mm3"].as_f64().unwrap_or(0.0))
        .sum()
}

fn centroid_text(v: &Value) -> String {
    let c = v.as_array().map(|a| {
        a.iter()
            .map(|x| x.as_f64().unwrap_or(f64::NAN))
            .collect::<Vec<_>>()
    });
    match c.as_deref() {
        Some([x, y, z]) => format!("({x}, {y}, {z})"),
        _ => "(?, ?, ?)".to_string(),
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

fn compose_answer(state: &PlannerState) -> String {
    let parsed = &state.parsed;
    let tp = parsed.timepoints[0];
    let mut lines: Vec<String> = Vec::new();
    let mut push = |name: &str, value: String| lines.push(format!("{name}: {value}"));
    match parsed.template {
        TemplateKind::SegPathology => {
            if let Some(r) = state.observed("segment_pathology", tp, 0) {
                push("segmentation_path", payload_str(r, "output_path").into());
            }
        }
        TemplateKind::SegAnatomy => {
            if let Some(r) = state.observed("segment_anatomy", tp, 0) {
                push("anatomy_mask_path", payload_str(r, "mask_path").into());
                push(
                    "volumes_table_path",
                    payload_str(r, "volumes_table_path").into(),
                );
            }
        }
        TemplateKind::CountVolume => {
            if let Some(e) = state.observed("enumerate_lesions", tp, 0) {
                push("lesion_count", fnum(payload_f64(e, "lesion_count")));
                push("total_volume_mm3", fnum(total_volume(e)));
            }
        }
        TemplateKind::LargestGeometry => {
            if let Some(e) = state.observed("enumerate_lesions", tp, 0) {
                if let Some(first) = lesion_rows(e).first() {
                    push(
                        "largest_lesion_volume_mm3",
                        fnum(first["volume_mm3"].as_f64().unwrap_or(f64::NAN)),
                    );
                    push(
                        "largest_lesion_centroid_mm",
                        centroid_text(&first["centroid_mm"]),
                    );
                }
            }
        }
        TemplateKind::LargestLobe => {
            if let Some(r) = state.observed("localize_lesion", tp, 1) {
                push("lobe", payload_str(r, "lobe").into());
                push("overlap_fraction", fnum(payload_f64(r, "overlap_fraction")));
            }
        }
        TemplateKind::LesionFeatures => {
            if let Some(r) = state.observed("lesion_features", tp, parsed.lesion as u64) {
                push("volume_mm3", fnum(payload_f64(r, "volume_mm3")));
                let f = &r.payload["features"];
                push(
                    "surface_area_mm2",
                    fnum(f["surface_area_mm2"].as_f64().unwrap_or(f64::NAN)),
                );
                push("sphericity", fnum(f["sphericity"].as_f64().unwrap_or(f64::NAN)));
                push("elongation", fnum(f["elongation"].as_f64().unwrap_or(f64::NAN)));
                push(
                    "mean_intensity",
                    fnum(f["mean_intensity"].as_f64().unwrap_or(f64::NAN)),
                );
                push(
                    "max_intensity",
                    fnum(f["max_intensity"].as_f64().unwrap_or(f64::NAN)),
                );
            }
        }
        TemplateKind::FullReport => {
            if let Some(e) = state.observed("enumerate_lesions", tp, 0) {
                let rows = lesion_rows(e);
                push("lesion_count", fnum(rows.len() as f64));
                for (i, row) in rows.iter().enumerate() {
                    let id = i as u64 + 1;
                    push(
                        &format!("lesion_{id}_volume_mm3"),
                        fnum(row["volume_mm3"].as_f64().unwrap_or(f64::NAN)),
                    );
                    push(
                        &format!("lesion_{id}_centroid_mm"),
                        centroid_text(&row["centroid_mm"]),
                    );
                    if let Some(l) = state.observed("localize_lesion", tp, id) {
                        push(&format!("lesion_{id}_lobe"), payload_str(l, "lobe").into());
                    }
                }
            }
        }
        TemplateKind::FeatureReport => {
            if let Some(e) = state.observed("enumerate_lesions", tp, 0) {
                let rows = lesion_rows(e);
                push("lesion_count", fnum(rows.len() as f64));
                for i in 0..rows.len() {
                    let id = i as u64 + 1;
                    if let Some(r) = state.observed("lesion_features", tp, id) {
                        let f = &r.payload["features"];
                        push(
                            &format!("lesion_{id}_volume_mm3"),
                            fnum(payload_f64(r, "volume_mm3")),
                        );
                        push(
                            &format!("lesion_{id}_surface_area_mm2"),
                            fnum(f["surface_area_mm2"].as_f64().unwrap_or(f64::NAN)),
                        );
                        push(
                            &format!("lesion_{id}_sphericity"),
                            fnum(f["sphericity"].as_f64().unwrap_or(f64::NAN)),
                        );
                        push(
                            &format!("lesion_{id}_elongation"),
                            fnum(f["elongation"].as_f64().unwrap_or(f64::NAN)),
                        );
                        push(
                            &format!("lesion_{id}_mean_intensity"),
                            fnum(f["mean_intensity"].as_f64().unwrap_or(f64::NAN)),
                        );
                        push(
                            &format!("lesion_{id}_max_intensity"),
                            fnum(f["max_intensity"].as_f64().unwrap_or(f64::NAN)),
                        );
                    }
                }
            }
        }
        TemplateKind::Vocabulary => {
            if let Some(e) = state.observed("enumerate_lesions", tp, 0) {
                push("lesion_count", fnum(payload_f64(e, "lesion_count")));
            }
            if let Some(l) = state.observed("list_labels", 0, 0) {
                let names: Vec<String> = l.payload["labels"]
                    .as_array()
                    .map(|a| {
                        a.iter()
                            .filter_map(|e| e["name"].as_str().map(str::to_string))
                            .collect()
                    })
                    .unwrap_or_default();
                push("label_names", names.join(", "));
            }
        }
        TemplateKind::Snapshot => {
            if let Some(v) = state.observed("visualize", tp, 0) {
                push("snapshot_path", payload_str(v, "path").into());
            }
            if let Some(e) = state.observed("enumerate_lesions", tp, 0) {
                push("lesion_count", fnum(payload_f64(e, "lesion_count")));
            }
        }
        TemplateKind::VolumeChange => {
            let (a, b) = (parsed.timepoints[0], parsed.timepoints[1]);
            let v0 = state.observed("enumerate_lesions", a, 0).map(total_volume);
            let v1 = state.observed("enumerate_lesions", b, 0).map(total_volume);
            if let (Some(v0), Some(v1)) = (v0, v1) {
                push(&format!("total_volume_t{a}_mm3"), fnum(v0));
                push(&format!("total_volume_t{b}_mm3"), fnum(v1));
                push("volume_change_mm3", fnum(v1 - v0));
                push("volume_change_percent", fnum(pct_change(v0, v1)));
            }
        }
        TemplateKind::NewResolved => {
            if let Some(m) = state.observed("match_lesions", parsed.timepoints[0], 0) {
                push("matched_lesion_count", fnum(payload_f64(m, "matched_count")));
                push("new_lesion_count", fnum(payload_f64(m, "new_count")));
                push(
                    "resolved_lesion_count",
                    fnum(payload_f64(m, "resolved_count")),
                );
            }
        }
        TemplateKind::MatchedReport => {
            let (a, b) = (parsed.timepoints[0], parsed.timepoints[1]);
            let e0 = state.observed("enumerate_lesions", a, 0);
            let e1 = state.observed("enumerate_lesions", b, 0);
            if let (Some(m), Some(e0), Some(e1)) =
                (state.observed("match_lesions", a, 0), e0, e1)
            {
                let mut pairs: Vec<(u64, u64)> = m.payload["pairs"]
                    .as_array()
                    .map(|arr| {
                        arr.iter()
                            .filter_map(|p| Some((p["id_t0"].as_u64()?, p["id_t1"].as_u64()?)))
                            .collect()
                    })
                    .unwrap_or_default();
                pairs.sort_unstable();
                push("matched_lesion_count", fnum(pairs.len() as f64));
                let vol_of = |e: &ToolResult, id: u64| -> f64 {
                    lesion_rows(e)
                        .get(id as usize - 1)
                        .and_then(|l| l["volume_mm3"].as_f64())
                        .unwrap_or(f64::NAN)
                };
                for (j, (id0, id1)) in pairs.iter().enumerate() {
                    let j = j + 1;
                    let v0 = vol_of(e0, *id0);
                    let v1 = vol_of(e1, *id1);
                    push(&format!("pair_{j}_volume_t{a}_mm3"), fnum(v0));
                    push(&format!("pair_{j}_volume_t{b}_mm3"), fnum(v1));
                    push(
                        &format!("pair_{j}_change_percent"),
                        fnum(pct_change(v0, v1)),
                    );
                }
            }
        }
        TemplateKind::Growth => {
            let (a, b) = (parsed.timepoints[0], parsed.timepoints[1]);
            let v0 = state.observed("enumerate_lesions", a, 0).map(total_volume);
            let v1 = state.observed("enumerate_lesions", b, 0).map(total_volume);
            if let (Some(v0), Some(v1)) = (v0, v1) {
                let pct = pct_change(v0, v1);
                push("trend", trend_of(pct).to_string());
                push("volume_change_percent", fnum(pct));
            }
        }
        TemplateKind::Trajectory => {
            for &t in &parsed.timepoints {
                if let Some(e) = state.observed("enumerate_lesions", t, 0) {
                    push(&format!("total_volume_t{t}_mm3"), fnum(total_volume(e)));
                }
            }
        }
    }
    if lines.is_empty() {
        "cannot find the requested measurements".to_string()
    } else {
        lines.join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planner_picks_the_model_the_question_names() {
        for (phrase, model) in [
            ("glioma", "glioma"),
            ("post-operative glioma", "postop-glioma"),
            ("brain metastases", "metastasis"),
            ("meningioma", "meningioma"),
        ] {
            let q = format!(
                "Case case-001, timepoint 0: segment the {phrase} and report the lesion count \
and the total lesion volume in mm3."
            );
            let picked = PlannerBackend::model_for_question(&q).unwrap();
            assert_eq!(picked.name(), model, "{phrase}");
        }
    }
}
