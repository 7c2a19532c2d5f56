//! Dataset file format: line-delimited JSON. The first line is a manifest
//! (schema version + generator seed), followed by one record per case and one
//! per benchmark item. Unknown fields are preserved verbatim through a
//! save/load round trip.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backends::scripted::{EpisodeScript, PlanStepKind};
use crate::kernel::agents::Topology;
use crate::toolbox::env::Modality;
use crate::toolbox::vocab::Pathology;

use super::phantom::PhantomSpec;
use super::BenchError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub record: String,
    pub schema_version: u32,
    pub seed: u64,
    pub case_count: usize,
    pub item_count: usize,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

/// How one expected answer field is compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "compare", rename_all = "kebab-case")]
pub enum FieldValue {
    /// Case-insensitive exact string.
    ExactString { value: String },
    /// Numeric with relative and absolute slack.
    Numeric {
        value: f64,
        rel_tol: f64,
        #[serde(default)]
        abs_tol: f64,
    },
    /// A 3-vector compared per component with absolute slack (centroids).
    Vector { value: [f64; 3], abs_tol: f64 },
    /// Unordered set of strings, case-insensitive.
    StringSet { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerField {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    #[serde(flatten)]
    pub value: FieldValue,
}

impl AnswerField {
    pub fn render_value(&self) -> String {
        match &self.value {
            FieldValue::ExactString { value } => value.clone(),
            FieldValue::Numeric { value, .. } => format!("{value}"),
            FieldValue::Vector { value, .. } => {
                format!("({}, {}, {})", value[0], value[1], value[2])
            }
            FieldValue::StringSet { values } => values.join(", "),
        }
    }
}

/// Render an expected answer as the canonical "field: value" lines.
pub fn render_answer(fields: &[AnswerField]) -> String {
    fields
        .iter()
        .map(|f| format!("{}: {}", f.name, f.render_value()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub rel_path: String,
    pub timepoint: usize,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub record: String,
    pub case_id: String,
    pub pathology: Pathology,
    pub preprocessed: bool,
    pub timepoints: usize,
    pub spec: PhantomSpec,
    pub files: Vec<FileEntry>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub record: String,
    pub item_id: String,
    pub tier: u8,
    pub question: String,
    pub case_id: String,
    pub item_timepoints: Vec<usize>,
    pub expected_plans: BTreeMap<String, EpisodeScript>,
    pub expected_answer: Vec<AnswerField>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl BenchmarkItem {
    pub fn plan(&self, topology: Topology) -> Option<&EpisodeScript> {
        self.expected_plans.get(topology.as_str())
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(1..=3).contains(&self.tier) {
            return Err(BenchError::Format(format!(
                "{}: tier must be 1..=3",
                self.item_id
            )));
        }
        if self.tier == 3 && self.item_timepoints.len() < 2 {
            return Err(BenchError::Format(format!(
                "{}: tier-3 items reference at least two timepoints",
                self.item_id
            )));
        }
        if self.expected_answer.is_empty() {
            return Err(BenchError::Format(format!(
                "{}: expected_answer must be nonempty",
                self.item_id
            )));
        }
        for (topology, script) in &self.expected_plans {
            match script.steps.last().map(|s| &s.kind) {
                Some(PlanStepKind::FinalAnswer { .. }) => {}
                _ => {
                    return Err(BenchError::Format(format!(
                        "{}: {topology} plan does not end in a final answer",
                        self.item_id
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub cases: Vec<CaseRecord>,
    pub items: Vec<BenchmarkItem>,
}

impl Dataset {
    pub fn case(&self, case_id: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<(), BenchError> {
    let mut out = String::new();
    out.push_str(
        &serde_json::to_string(&dataset.manifest).map_err(|e| BenchError::Io(e.to_string()))?,
    );
    out.push('\n');
    for case in &dataset.cases {
        out.push_str(&serde_json::to_string(case).map_err(|e| BenchError::Io(e.to_string()))?);
        out.push('\n');
    }
    for item in &dataset.items {
        out.push_str(&serde_json::to_string(item).map_err(|e| BenchError::Io(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| BenchError::Io(e.to_string()))
}

pub fn load_dataset(path: &Path) -> Result<Dataset, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(e.to_string()))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| BenchError::Format("line 1: empty dataset file".into()))?;
    let manifest: Manifest = serde_json::from_str(first)
        .map_err(|e| BenchError::Format(format!("line 1: manifest: {e}")))?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(BenchError::Format(format!(
            "line 1: unsupported schema version {}",
            manifest.schema_version
        )));
    }
    let mut cases = Vec::new();
    let mut items = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let value: Value = serde_json::from_str(line)
            .map_err(|e| BenchError::Format(format!("line {lineno}: {e}")))?;
        match value.get("record").and_then(Value::as_str) {
            Some("case") => {
                let case: CaseRecord = serde_json::from_value(value).map_err(|e| {
                    BenchError::Format(format!("line {lineno}: case record: field {e}"))
                })?;
                cases.push(case);
            }
            Some("item") => {
                let item: BenchmarkItem = serde_json::from_value(value).map_err(|e| {
                    BenchError::Format(format!("line {lineno}: item record: field {e}"))
                })?;
                item.validate()
                    .map_err(|e| BenchError::Format(format!("line {lineno}: {e}")))?;
                items.push(item);
            }
            other => {
                return Err(BenchError::Format(format!(
                    "line {lineno}: unknown record type {other:?}"
                )))
            }
        }
    }
    Ok(Dataset {
        manifest,
        cases,
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::agents::AgentName;
    use crate::backends::scripted::PlanStep;
    use crate::volume::affine::SignedPermutation;

    fn sample_dataset() -> Dataset {
        let spec = PhantomSpec {
            case_id: "case-x".into(),
            pathology: Pathology::Glioma,
            timepoints: 1,
            preprocessed: true,
            seed: 3,
            lesions: vec![],
            native_permutation: SignedPermutation::identity(),
            native_offset_mm: [0.0; 3],
        };
        let case = CaseRecord {
            record: "case".into(),
            case_id: "case-x".into(),
            pathology: Pathology::Glioma,
            preprocessed: true,
            timepoints: 1,
            spec,
            files: vec![FileEntry {
                rel_path: "volumes/case-x/t0_t1.nii".into(),
                timepoint: 0,
                modality: Modality::T1,
            }],
            extra: Map::new(),
        };
        let mut plans = BTreeMap::new();
        plans.insert(
            "single".to_string(),
            EpisodeScript {
                steps: vec![
                    PlanStep::tool(AgentName::Generalist, "segment_pathology", &[], &[], &[]),
                    PlanStep::final_answer(AgentName::Generalist, "segmentation_path: x"),
                ],
            },
        );
        let item = BenchmarkItem {
            record: "item".into(),
            item_id: "t1-0001".into(),
            tier: 1,
            question: "Segment the glioma.".into(),
            case_id: "case-x".into(),
            item_timepoints: vec![0],
            expected_plans: plans,
            expected_answer: vec![AnswerField {
                name: "segmentation_path".into(),
                aliases: vec![],
                value: FieldValue::ExactString { value: "x".into() },
            }],
            extra: Map::new(),
        };
        Dataset {
            manifest: Manifest {
                record: "manifest".into(),
                schema_version: SCHEMA_VERSION,
                seed: 3,
                case_count: 1,
                item_count: 1,
                extra: Map::new(),
            },
            cases: vec![case],
            items: vec![item],
        }
    }

    #[test]
    fn save_load_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.jsonl");
        let ds = sample_dataset();
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(back, ds);

        // Byte-identical on re-save.
        let bytes_a = std::fs::read(&path).unwrap();
        save_dataset(&back, &path).unwrap();
        assert_eq!(bytes_a, std::fs::read(&path).unwrap());
    }

    #[test]
    fn missing_expected_answer_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.jsonl");
        let ds = sample_dataset();
        save_dataset(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let broken: String = text.replace("expected_answer", "expected_answers");
        std::fs::write(&path, broken).unwrap();
        match load_dataset(&path) {
            Err(BenchError::Format(msg)) => {
                assert!(msg.contains("line 3"), "{msg}");
                assert!(msg.contains("expected_answer"), "{msg}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.jsonl");
        let mut ds = sample_dataset();
        ds.items[0]
            .extra
            .insert("notes".into(), Value::String("external annotation".into()));
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert_eq!(
            back.items[0].extra.get("notes"),
            Some(&Value::String("external annotation".into()))
        );
    }
}
