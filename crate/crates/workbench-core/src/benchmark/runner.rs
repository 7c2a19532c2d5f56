//! Episode harness: wires a benchmark item, its case environment, a topology
//! team, and a decision backend into one `run_episode` call.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::backends::planner::PlannerBackend;
use crate::backends::remote::{RemoteBackend, RemoteConfig};
use crate::backends::scripted::ScriptedBackend;
use crate::kernel::agents::{team_for, Topology};
use crate::kernel::episode::{run_episode, DecisionBackend, EpisodeResult};
use crate::kernel::registry::ToolRegistry;
use crate::kernel::KernelError;
use crate::toolbox::env::{CaseFile, Modality, SimEnv};
use crate::toolbox::register::standard_registry;
use crate::toolbox::result::ObjectHandle;

use super::dataset::{BenchmarkItem, CaseRecord};
use super::phantom::build_ground_truth;
use super::BenchError;

/// Which decision-maker drives the episodes.
#[derive(Debug, Clone)]
pub enum BackendChoice {
    Scripted,
    Planner,
    Remote(RemoteConfig),
}

impl BackendChoice {
    pub fn name(&self) -> &str {
        match self {
            BackendChoice::Scripted => "scripted",
            BackendChoice::Planner => "planner",
            BackendChoice::Remote(cfg) => &cfg.model,
        }
    }
}

/// Default action budget: over twice the longest expected orchestrator plan.
pub const DEFAULT_BUDGET: usize = 40;

/// Build the per-episode tool environment for a case.
pub fn build_env(
    case: &CaseRecord,
    dataset_dir: &Path,
    work_dir: &Path,
    noise: f64,
) -> Result<SimEnv, BenchError> {
    let gt = Arc::new(build_ground_truth(&case.spec)?);
    let mut files = BTreeMap::new();
    for f in &case.files {
        files.insert(
            f.rel_path.clone(),
            CaseFile {
                abs_path: dataset_dir.join(&f.rel_path),
                timepoint: f.timepoint,
                modality: f.modality,
            },
        );
    }
    Ok(SimEnv::new(
        gt,
        files,
        work_dir.to_path_buf(),
        noise,
        case.spec.seed,
    ))
}

/// The inventory block appended to the question: case facts plus the
/// pre-loaded image handles per timepoint.
pub fn inventory_message(
    case: &CaseRecord,
    seeded: &[(String, usize, Modality, ObjectHandle)],
) -> String {
    let mut out = format!(
        "Case {} ({}). Preprocessing: {}.",
        case.case_id,
        case.pathology.phrase(),
        if case.preprocessed { "done" } else { "pending" }
    );
    for tp in 0..case.timepoints {
        let mut parts = Vec::new();
        for modality in Modality::ALL {
            if let Some((_, _, _, h)) = seeded
                .iter()
                .find(|(_, t, m, _)| *t == tp && *m == modality)
            {
                parts.push(format!("{}={}", modality.name(), h.id));
            }
        }
        out.push_str(&format!("\nTimepoint {tp} images: {}", parts.join(", ")));
    }
    out
}

/// Seeded-handle slot bindings ("t1@t0" -> "obj_1") for replay backends.
pub fn seeded_bindings(
    seeded: &[(String, usize, Modality, ObjectHandle)],
) -> BTreeMap<String, String> {
    seeded
        .iter()
        .map(|(_, tp, modality, h)| (format!("{}@t{tp}", modality.name()), h.id.clone()))
        .collect()
}

pub struct ItemRun {
    pub result: EpisodeResult,
    pub model_name: String,
}

/// Run one (item, topology) episode end to end.
pub fn run_item(
    item: &BenchmarkItem,
    case: &CaseRecord,
    dataset_dir: &Path,
    work_dir: &Path,
    topology: Topology,
    backend: &BackendChoice,
    noise: f64,
    budget: usize,
) -> Result<ItemRun, KernelError> {
    let registry: ToolRegistry<SimEnv> = standard_registry();
    let mut env = build_env(case, dataset_dir, work_dir, noise)
        .map_err(|e| KernelError::Invalid(e.to_string()))?;
    let seeded = env.seed_case_images();
    let user_message = format!(
        "{}\n\n{}",
        item.question,
        inventory_message(case, &seeded)
    );
    let team = team_for(topology);

    let mut backend: Box<dyn DecisionBackend> = match backend {
        BackendChoice::Scripted => {
            let script = item
                .plan(topology)
                .ok_or_else(|| {
                    KernelError::Invalid(format!(
                        "item {} has no plan for {topology}",
                        item.item_id
                    ))
                })?
                .clone();
            Box::new(ScriptedBackend::new(script, seeded_bindings(&seeded)))
        }
        BackendChoice::Planner => Box::new(PlannerBackend::new(topology)),
        BackendChoice::Remote(cfg) => Box::new(RemoteBackend::new(cfg.clone())),
    };
    let model_name = backend.model_name().to_string();
    let result = run_episode(
        &registry,
        &mut env,
        &team,
        &user_message,
        backend.as_mut(),
        budget,
    )?;
    Ok(ItemRun { result, model_name })
}
