//! The simulated tool environment: one [`SimEnv`] per episode, holding the
//! case's ground truth, file bundle, and handle store. Every tool is a pure
//! function of (handles, arguments) given the case seed and noise level.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::volume::components::{connected_components, ComponentSet, Connectivity, Foreground};
use crate::volume::grid::{GridDescriptor, LabelMask, Volume, VoxelVolume};
use crate::volume::headers::{compare_headers, HeaderTolerances};
use crate::volume::nifti::read_volume;
use crate::volume::overlap::iou_of_fields;
use crate::volume::resample::{apply_affine, resample, Interpolation};

use super::atlas;
use super::features::{elongation, sphericity, surface_area_mm2};
use super::ground_truth::{GroundTruth, Space};
use super::handles::{HandleStore, StoredObject};
use super::noise::apply_boundary_noise;
use super::result::{error_kind, payload, HandleKind, ObjectHandle, ToolResult};
use super::vocab::{anatomy_vocabulary, lobe_vocabulary, AtlasSpace, SegModel, LOBES};

pub type JsonMap = Map<String, Value>;

/// Scan modalities every case carries.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    T1,
    T1ce,
    T2,
    Flair,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::T1, Modality::T1ce, Modality::T2, Modality::Flair];

    pub fn name(self) -> &'static str {
        match self {
            Modality::T1 => "t1",
            Modality::T1ce => "t1ce",
            Modality::T2 => "t2",
            Modality::Flair => "flair",
        }
    }

    pub fn parse(s: &str) -> Option<Modality> {
        Modality::ALL.iter().copied().find(|m| m.name() == s)
    }
}

/// One file of the episode's case bundle.
#[derive(Debug, Clone)]
pub struct CaseFile {
    pub abs_path: PathBuf,
    pub timepoint: usize,
    pub modality: Modality,
}

/// Episode-confined tool environment. Distinct episodes get distinct `SimEnv`s
/// and never share mutable state; the ground truth itself is immutable.
pub struct SimEnv {
    pub gt: Arc<GroundTruth>,
    files: BTreeMap<String, CaseFile>,
    pub handles: HandleStore,
    pub noise_level: f64,
    pub connectivity: Connectivity,
    pub default_match_threshold: f64,
    seed: u64,
    out_dir: PathBuf,
    viz_count: usize,
}

/// Early-return flow for tool bodies: `Err` carries the finished error result.
type Flow<T> = Result<T, ToolResult>;

impl SimEnv {
    pub fn new(
        gt: Arc<GroundTruth>,
        files: BTreeMap<String, CaseFile>,
        out_dir: PathBuf,
        noise_level: f64,
        seed: u64,
    ) -> Self {
        SimEnv {
            gt,
            files,
            handles: HandleStore::new(),
            noise_level,
            connectivity: Connectivity::default(),
            default_match_threshold: 0.25,
            seed,
            out_dir,
            viz_count: 0,
        }
    }

    /// Pre-load every case file into the handle store, in (timepoint,
    /// modality) order, and return (relative path, timepoint, modality,
    /// handle) rows for the episode inventory.
    pub fn seed_case_images(&mut self) -> Vec<(String, usize, Modality, ObjectHandle)> {
        let mut entries: Vec<(String, CaseFile)> = self
            .files
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        entries.sort_by_key(|(_, f)| {
            (
                f.timepoint,
                Modality::ALL.iter().position(|m| *m == f.modality),
            )
        });
        let mut out = Vec::new();
        for (rel, file) in entries {
            let vol = self
                .load_and_stamp(&rel, &file)
                .expect("case bundle files are readable");
            let handle = self.handles.issue("seed", StoredObject::Image(vol));
            out.push((rel, file.timepoint, file.modality, handle));
        }
        out
    }

    fn load_and_stamp(&self, rel: &str, file: &CaseFile) -> crate::volume::Result<VoxelVolume> {
        let mut vol = read_volume(&file.abs_path)?;
        let scan = &self.gt.scans[file.timepoint];
        let space = if scan.preprocessed {
            Space::Atlas(self.gt.atlas)
        } else {
            Space::Native(file.timepoint)
        };
        let meta = vol.meta_mut();
        meta.insert("space".into(), space.tag());
        meta.insert("modality".into(), file.modality.name().into());
        meta.insert("timepoint".into(), file.timepoint.to_string());
        meta.insert(
            "skull_stripped".into(),
            if scan.preprocessed { "true" } else { "false" }.into(),
        );
        meta.insert("path".into(), rel.to_string());
        Ok(vol)
    }

    // ---- argument helpers -------------------------------------------------

    fn arg_str<'a>(&self, args: &'a JsonMap, key: &str) -> Flow<&'a str> {
        args.get(key).and_then(Value::as_str).ok_or_else(|| {
            ToolResult::error(
                error_kind::BAD_ARGUMENT,
                format!("missing or non-text argument '{key}'"),
            )
        })
    }

    fn object(&self, id: &str) -> Flow<&StoredObject> {
        self.handles.get(id).ok_or_else(|| {
            ToolResult::error(
                error_kind::BAD_HANDLE,
                format!("handle '{id}' was never issued in this episode"),
            )
        })
    }

    fn image_arg(&self, args: &JsonMap, key: &str) -> Flow<(String, VoxelVolume)> {
        let id = self.arg_str(args, key)?.to_string();
        match self.object(&id)? {
            StoredObject::Image(v) => Ok((id, v.clone())),
            other => Err(ToolResult::error(
                error_kind::WRONG_KIND,
                format!("'{id}' is a {} handle, expected an image", other.kind().name()),
            )),
        }
    }

    fn mask_arg(&self, args: &JsonMap, key: &str) -> Flow<(String, LabelMask)> {
        let id = self.arg_str(args, key)?.to_string();
        match self.object(&id)? {
            StoredObject::Mask(m) => Ok((id, m.clone())),
            other => Err(ToolResult::error(
                error_kind::WRONG_KIND,
                format!("'{id}' is a {} handle, expected a mask", other.kind().name()),
            )),
        }
    }

    fn space_of(&self, vol: &VoxelVolume) -> Option<Space> {
        vol.meta().get("space").and_then(|s| Space::parse(s))
    }

    /// Brain mask pulled onto an arbitrary grid in the given frame.
    fn brain_mask_on(&self, space: Space, grid: &GridDescriptor) -> Volume<u8> {
        let canon_grid = self.gt.atlas_grid();
        if space == Space::Atlas(self.gt.atlas) && *grid == canon_grid {
            return self.gt.brain_mask.clone();
        }
        let canon_to_space = self
            .gt
            .to_canonical(space)
            .inverse()
            .expect("rigid transforms are invertible");
        match apply_affine(
            &self.gt.brain_mask.clone().into(),
            &canon_to_space,
            grid,
            Interpolation::Nearest,
        )
        .expect("phantom grids are compatible")
        {
            VoxelVolume::U8(v) => v,
            _ => unreachable!("dtype preserved"),
        }
    }

    fn components(&self, mask: &LabelMask) -> ComponentSet {
        connected_components(mask, Foreground::AnyNonzero, self.connectivity)
    }

    // ---- tools ------------------------------------------------------------

    pub fn tool_load_image(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_load_image(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_load_image(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let rel = self.arg_str(args, "path")?.to_string();
        let Some(file) = self.files.get(&rel).cloned() else {
            return Err(ToolResult::error(
                error_kind::NOT_FOUND,
                format!("'{rel}' is not in this case bundle"),
            ));
        };
        let vol = match self.load_and_stamp(&rel, &file) {
            Ok(v) => v,
            Err(e) => return Err(ToolResult::error(error_kind::NOT_FOUND, e.to_string())),
        };
        let space = self.space_of(&vol).map(|s| s.tag()).unwrap_or_default();
        let handle = self.handles.issue("load_image", StoredObject::Image(vol));
        let mut p = payload();
        p.insert("path".into(), json!(rel));
        p.insert("modality".into(), json!(file.modality.name()));
        p.insert("timepoint".into(), json!(file.timepoint));
        p.insert("space".into(), json!(space));
        p.insert("image".into(), json!(handle.id));
        Ok(ToolResult::ok(p, vec![handle]))
    }

    pub fn tool_skull_strip(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_skull_strip(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_skull_strip(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, vol) = self.image_arg(args, "image")?;
        let Some(space) = self.space_of(&vol) else {
            return Err(ToolResult::error(
                error_kind::BAD_ARGUMENT,
                "image carries no space information",
            ));
        };
        let brain = self.brain_mask_on(space, vol.descriptor());
        let brain_voxels = brain.nonzero_count();
        let mut out = vol;
        macro_rules! strip {
            ($v:expr) => {
                for (d, &b) in $v.data_mut().iter_mut().zip(brain.data().iter()) {
                    if b == 0 {
                        *d = num_traits::Zero::zero();
                    }
                }
            };
        }
        match &mut out {
            VoxelVolume::U8(v) => strip!(v),
            VoxelVolume::I16(v) => strip!(v),
            VoxelVolume::F32(v) => strip!(v),
        }
        out.meta_mut().insert("skull_stripped".into(), "true".into());
        let mm3 = brain_voxels as f64 * out.descriptor().voxel_volume_mm3();
        let handle = self.handles.issue("skull_strip", StoredObject::Image(out));
        let mut p = payload();
        p.insert("brain_volume_mm3".into(), json!(mm3));
        p.insert("image".into(), json!(handle.id));
        Ok(ToolResult::ok(p, vec![handle]))
    }

    pub fn tool_register(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_register(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn resolve_target(&self, target: &str) -> Flow<(Space, GridDescriptor)> {
        if let Some(name) = target.strip_prefix("atlas:") {
            let Some(a) = AtlasSpace::parse(name) else {
                return Err(ToolResult::error(
                    error_kind::BAD_ARGUMENT,
                    format!("unknown atlas '{name}'"),
                ));
            };
            return Ok((Space::Atlas(a), atlas::grid_of(a)));
        }
        if let Some(a) = AtlasSpace::parse(target) {
            return Ok((Space::Atlas(a), atlas::grid_of(a)));
        }
        if target.starts_with("obj_") {
            let obj = self.object(target)?;
            let StoredObject::Image(v) = obj else {
                return Err(ToolResult::error(
                    error_kind::WRONG_KIND,
                    format!("registration target '{target}' is not an image"),
                ));
            };
            let Some(space) = self.space_of(v) else {
                return Err(ToolResult::error(
                    error_kind::BAD_ARGUMENT,
                    "target image carries no space information",
                ));
            };
            return Ok((space, v.descriptor().clone()));
        }
        Err(ToolResult::error(
            error_kind::BAD_ARGUMENT,
            format!("unknown registration target '{target}'"),
        ))
    }

    fn try_register(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, vol) = self.image_arg(args, "image")?;
        let target = self.arg_str(args, "target")?.to_string();
        let (target_space, target_grid) = self.resolve_target(&target)?;
        let Some(space) = self.space_of(&vol) else {
            return Err(ToolResult::error(
                error_kind::BAD_ARGUMENT,
                "image carries no space information",
            ));
        };
        let mut out = if space == target_space && *vol.descriptor() == target_grid {
            vol
        } else {
            let world = self.gt.transform(space, target_space);
            match apply_affine(&vol, &world, &target_grid, Interpolation::Nearest) {
                Ok(v) => v,
                Err(e) => {
                    return Err(ToolResult::error(error_kind::BAD_ARGUMENT, e.to_string()))
                }
            }
        };
        out.meta_mut().insert("space".into(), target_space.tag());
        let handle = self.handles.issue("register", StoredObject::Image(out));
        let mut p = payload();
        p.insert("space".into(), json!(target_space.tag()));
        p.insert("image".into(), json!(handle.id));
        Ok(ToolResult::ok(p, vec![handle]))
    }

    pub fn tool_resample(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_resample(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_resample(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let id = self.arg_str(args, "image")?.to_string();
        let spacing = parse_triple(args.get("spacing")).ok_or_else(|| {
            ToolResult::error(
                error_kind::BAD_ARGUMENT,
                "argument 'spacing' must be a triple of positive numbers",
            )
        })?;
        let interp = match args.get("interpolation").and_then(Value::as_str) {
            None => Interpolation::Nearest,
            Some("nearest") => Interpolation::Nearest,
            Some("trilinear") => Interpolation::Trilinear,
            Some(other) => {
                return Err(ToolResult::error(
                    error_kind::BAD_ARGUMENT,
                    format!("unknown interpolation '{other}'"),
                ))
            }
        };
        let (stored_kind, grid, vocab) = match self.object(&id)? {
            StoredObject::Image(v) => (HandleKind::Image, v.clone(), None),
            StoredObject::Mask(m) => (HandleKind::Mask, m.grid.clone(), Some(m.vocabulary.clone())),
            StoredObject::Report(_) => {
                return Err(ToolResult::error(
                    error_kind::WRONG_KIND,
                    "reports cannot be resampled",
                ))
            }
        };
        // Label data is always resampled with nearest-neighbor.
        let effective = if grid.dtype().is_integer() {
            Interpolation::Nearest
        } else {
            interp
        };
        let out = match resample(&grid, spacing, effective) {
            Ok(v) => v,
            Err(e) => return Err(ToolResult::error(error_kind::BAD_ARGUMENT, e.to_string())),
        };
        let dims = out.dims();
        let handle = match stored_kind {
            HandleKind::Mask => {
                let mask = LabelMask {
                    grid: out,
                    vocabulary: vocab.unwrap_or_default(),
                };
                self.handles.issue("resample", StoredObject::Mask(mask))
            }
            _ => self.handles.issue("resample", StoredObject::Image(out)),
        };
        let mut p = payload();
        p.insert("dims".into(), json!(dims));
        p.insert("spacing".into(), json!(spacing));
        p.insert("output".into(), json!(handle.id));
        Ok(ToolResult::ok(p, vec![handle]))
    }

    pub fn tool_verify_registration(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_verify_registration(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_verify_registration(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, vol) = self.image_arg(args, "image")?;
        let reference = self.arg_str(args, "reference")?.to_string();
        let (_, ref_grid) = self.resolve_target(&reference)?;
        let diff = compare_headers(vol.descriptor(), &ref_grid, &HeaderTolerances::default());
        let mut p = payload();
        p.insert("equal".into(), json!(diff.equal));
        p.insert(
            "mismatches".into(),
            Value::Array(
                diff.mismatches
                    .iter()
                    .map(|m| {
                        json!({
                            "field": m.field,
                            "value_a": m.value_a,
                            "value_b": m.value_b,
                        })
                    })
                    .collect(),
            ),
        );
        Ok(ToolResult::ok(p, vec![]))
    }

    pub fn tool_segment_pathology(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_segment_pathology(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_segment_pathology(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let model_name = self.arg_str(args, "model")?;
        let Some(model) = SegModel::parse(model_name) else {
            return Err(ToolResult::error(
                error_kind::BAD_ARGUMENT,
                format!("unknown segmentation model '{model_name}'"),
            ));
        };
        let mut inputs = Vec::new();
        for key in ["t1", "t1ce", "t2", "flair"] {
            if !args.contains_key(key) {
                return Err(ToolResult::error(
                    error_kind::MISSING_INPUT,
                    format!("modality '{key}' was not provided"),
                ));
            }
            let (id, vol) = self.image_arg(args, key)?;
            inputs.push((key, id, vol));
        }
        // Network prerequisites: skull-stripped inputs on the model's template
        // grid, all from one timepoint.
        let template = atlas::grid_of(model.required_atlas());
        let mut timepoints = Vec::new();
        for (key, _, vol) in &inputs {
            if vol.meta().get("skull_stripped").map(String::as_str) != Some("true") {
                return Err(ToolResult::error(
                    error_kind::PRECONDITION_FAILED,
                    format!("skull_strip: modality '{key}' is not skull-stripped"),
                ));
            }
            let diff = compare_headers(vol.descriptor(), &template, &HeaderTolerances::default());
            if !diff.equal {
                return Err(ToolResult::error(
                    error_kind::PRECONDITION_FAILED,
                    format!(
                        "space: modality '{key}' is not on the {} template grid",
                        model.required_atlas()
                    ),
                ));
            }
            if let Some(tp) = vol.meta().get("timepoint").and_then(|t| t.parse::<usize>().ok()) {
                timepoints.push(tp);
            }
        }
        timepoints.dedup();
        if timepoints.len() > 1 {
            return Err(ToolResult::error(
                error_kind::PRECONDITION_FAILED,
                "timepoint: inputs span multiple timepoints",
            ));
        }
        let tp = timepoints.first().copied().unwrap_or(0);
        if tp >= self.gt.timepoints() {
            return Err(ToolResult::error(
                error_kind::BAD_ARGUMENT,
                format!("timepoint {tp} does not exist for this case"),
            ));
        }

        // Models are pathology-specific, not validators: the wrong model
        // silently finds nothing.
        let out_grid = template;
        let mask = if model.matches(self.gt.pathology) {
            let instances = apply_boundary_noise(
                &self.gt.lesion_instances[tp],
                &self.gt.brain_mask,
                self.noise_level,
                self.seed ^ (tp as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let labels = &self.gt.pathology_masks[tp];
            let mut data = vec![0u8; instances.data().len()];
            for (i, &inst) in instances.data().iter().enumerate() {
                if inst != 0 {
                    let lab = labels.grid.label_at(i);
                    // Voxels grown past the painted sub-regions read as edema.
                    data[i] = if lab != 0 { lab as u8 } else { 2 };
                }
            }
            let grid = Volume::from_parts(out_grid.clone(), data).expect("same grid");
            LabelMask {
                grid: grid
                    .with_meta("space", &Space::Atlas(self.gt.atlas).tag())
                    .with_meta("timepoint", &tp.to_string())
                    .into(),
                vocabulary: model.vocabulary(),
            }
        } else {
            let grid = Volume::<u8>::zeros(out_grid.dims, out_grid.spacing, out_grid.origin)
                .with_meta("space", &Space::Atlas(model.required_atlas()).tag())
                .with_meta("timepoint", &tp.to_string());
            LabelMask {
                grid: grid.into(),
                vocabulary: model.vocabulary(),
            }
        };
        let lesion_voxels = mask.grid.nonzero_count();
        let out_path = format!("outputs/{}_t{}_{}_seg.nii", self.gt.case_id, tp, model.name());
        let handle = self
            .handles
            .issue("segment_pathology", StoredObject::Mask(mask));
        let mut p = payload();
        p.insert("model".into(), json!(model.name()));
        p.insert("timepoint".into(), json!(tp));
        p.insert("lesion_voxel_count".into(), json!(lesion_voxels));
        p.insert("output_path".into(), json!(out_path));
        p.insert("vocabulary".into(), vocab_json(&model.vocabulary()));
        p.insert("mask".into(), json!(handle.id));
        Ok(ToolResult::ok(p, vec![handle]))
    }

    pub fn tool_segment_anatomy(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_segment_anatomy(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_segment_anatomy(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, vol) = self.image_arg(args, "image")?;
        let Some(space) = self.space_of(&vol) else {
            return Err(ToolResult::error(
                error_kind::BAD_ARGUMENT,
                "image carries no space information",
            ));
        };
        let tp = vol
            .meta()
            .get("timepoint")
            .cloned()
            .unwrap_or_else(|| "0".to_string());
        // The anatomy model works in native or atlas space alike: pull the
        // canonical labeling onto the input grid.
        let anatomy = if space == Space::Atlas(self.gt.atlas)
            && *vol.descriptor() == self.gt.atlas_grid()
        {
            self.gt.anatomy.grid.clone()
        } else {
            let canon_to_space = self
                .gt
                .to_canonical(space)
                .inverse()
                .expect("rigid transforms are invertible");
            match apply_affine(
                &self.gt.anatomy.grid,
                &canon_to_space,
                vol.descriptor(),
                Interpolation::Nearest,
            ) {
                Ok(v) => v,
                Err(e) => return Err(ToolResult::error(error_kind::BAD_ARGUMENT, e.to_string())),
            }
        };
        let vocab = anatomy_vocabulary();
        let voxvol = anatomy.descriptor().voxel_volume_mm3();
        let mut counts: BTreeMap<i64, usize> = vocab.keys().map(|&k| (k, 0)).collect();
        let n = anatomy.descriptor().voxel_count();
        for i in 0..n {
            let lab = anatomy.label_at(i);
            if lab != 0 {
                *counts.entry(lab).or_insert(0) += 1;
            }
        }
        let mut csv = String::from("label_id,region_name,volume_mm3\n");
        for (&id, name) in &vocab {
            let mm3 = counts[&id] as f64 * voxvol;
            csv.push_str(&format!("{id},{name},{mm3}\n"));
        }
        let mask_path = format!("outputs/{}_t{}_anatomy_seg.nii", self.gt.case_id, tp);
        let table_path = format!("outputs/{}_t{}_anatomy_volumes.csv", self.gt.case_id, tp);
        let mut anatomy = anatomy;
        anatomy.meta_mut().insert("space".into(), space.tag());
        anatomy.meta_mut().insert("timepoint".into(), tp.clone());
        let mask_handle = self.handles.issue(
            "segment_anatomy",
            StoredObject::Mask(LabelMask {
                grid: anatomy,
                vocabulary: vocab,
            }),
        );
        let table_handle = self
            .handles
            .issue("segment_anatomy", StoredObject::Report(csv));
        let mut p = payload();
        p.insert("region_count".into(), json!(32));
        p.insert("mask_path".into(), json!(mask_path));
        p.insert("volumes_table_path".into(), json!(table_path));
        p.insert("mask".into(), json!(mask_handle.id));
        p.insert("volumes_table".into(), json!(table_handle.id));
        Ok(ToolResult::ok(p, vec![mask_handle, table_handle]))
    }

    pub fn tool_list_labels(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_list_labels(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_list_labels(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let scope = self.arg_str(args, "scope")?;
        let vocab = match scope {
            "anatomy" => anatomy_vocabulary(),
            "lobes" => lobe_vocabulary(),
            other => match SegModel::parse(other) {
                Some(m) => m.vocabulary(),
                None => {
                    return Err(ToolResult::error(
                        error_kind::BAD_ARGUMENT,
                        format!("unknown label scope '{other}'"),
                    ))
                }
            },
        };
        let mut p = payload();
        p.insert("scope".into(), json!(scope));
        p.insert("count".into(), json!(vocab.len()));
        p.insert("labels".into(), vocab_json(&vocab));
        Ok(ToolResult::ok(p, vec![]))
    }

    pub fn tool_enumerate_lesions(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_enumerate_lesions(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_enumerate_lesions(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, mask) = self.mask_arg(args, "mask")?;
        let set = self.components(&mask);
        let voxvol = mask.grid.descriptor().voxel_volume_mm3();
        let lesions: Vec<Value> = set
            .components
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "voxel_count": c.voxel_count,
                    "volume_mm3": c.voxel_count as f64 * voxvol,
                    "centroid_mm": c.centroid_mm,
                })
            })
            .collect();
        let mut p = payload();
        p.insert("lesion_count".into(), json!(set.count));
        p.insert("connectivity".into(), json!(set.connectivity.as_u8()));
        p.insert("lesions".into(), Value::Array(lesions));
        Ok(ToolResult::ok(p, vec![]))
    }

    pub fn tool_match_lesions(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_match_lesions(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_match_lesions(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, m0) = self.mask_arg(args, "mask_t0")?;
        let (_, m1) = self.mask_arg(args, "mask_t1")?;
        if m0.grid.descriptor() != m1.grid.descriptor() {
            return Err(ToolResult::error(
                error_kind::GRID_ERROR,
                "masks are on different grids",
            ));
        }
        let threshold = args
            .get("threshold")
            .and_then(Value::as_f64)
            .unwrap_or(self.default_match_threshold);
        let report = match_components(
            &self.components(&m0),
            &self.components(&m1),
            threshold,
        );
        let mut p = payload();
        p.insert("threshold".into(), json!(threshold));
        p.insert(
            "pairs".into(),
            Value::Array(
                report
                    .pairs
                    .iter()
                    .map(|pr| json!({"id_t0": pr.0, "id_t1": pr.1, "iou": pr.2}))
                    .collect(),
            ),
        );
        p.insert(
            "new".into(),
            Value::Array(
                report
                    .new
                    .iter()
                    .map(|(id, c)| json!({"id": id, "centroid_mm": c}))
                    .collect(),
            ),
        );
        p.insert(
            "resolved".into(),
            Value::Array(
                report
                    .resolved
                    .iter()
                    .map(|(id, c)| json!({"id": id, "centroid_mm": c}))
                    .collect(),
            ),
        );
        p.insert("matched_count".into(), json!(report.pairs.len()));
        p.insert("new_count".into(), json!(report.new.len()));
        p.insert("resolved_count".into(), json!(report.resolved.len()));
        Ok(ToolResult::ok(p, vec![]))
    }

    pub fn tool_lesion_geometry(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_lesion_geometry(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn lesion_id_arg(&self, args: &JsonMap, set: &ComponentSet) -> Flow<u32> {
        let id = args
            .get("lesion_id")
            .and_then(Value::as_u64)
            .ok_or_else(|| {
                ToolResult::error(
                    error_kind::BAD_ARGUMENT,
                    "missing or non-integer argument 'lesion_id'",
                )
            })?;
        if id == 0 || id > set.count as u64 {
            return Err(ToolResult::error(
                error_kind::NOT_FOUND,
                format!("lesion id {id} does not exist (count = {})", set.count),
            ));
        }
        Ok(id as u32)
    }

    fn try_lesion_geometry(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, mask) = self.mask_arg(args, "mask")?;
        let set = self.components(&mask);
        let id = self.lesion_id_arg(args, &set)?;
        let c = set.info(id).expect("id in range");
        let voxvol = mask.grid.descriptor().voxel_volume_mm3();
        let mut p = payload();
        p.insert("id".into(), json!(c.id));
        p.insert("voxel_count".into(), json!(c.voxel_count));
        p.insert("volume_mm3".into(), json!(c.voxel_count as f64 * voxvol));
        p.insert("centroid_mm".into(), json!(c.centroid_mm));
        p.insert("bbox_min".into(), json!(c.bbox_min));
        p.insert("bbox_max".into(), json!(c.bbox_max));
        Ok(ToolResult::ok(p, vec![]))
    }

    pub fn tool_lesion_features(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_lesion_features(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_lesion_features(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, mask) = self.mask_arg(args, "mask")?;
        let (_, image) = self.image_arg(args, "image")?;
        if image.descriptor() != mask.grid.descriptor() {
            return Err(ToolResult::error(
                error_kind::GRID_ERROR,
                "mask and image are on different grids",
            ));
        }
        let set = self.components(&mask);
        let id = self.lesion_id_arg(args, &set)?;
        let c = set.info(id).expect("id in range");
        let desc = mask.grid.descriptor();
        let member: Vec<bool> = set.labeling.data().iter().map(|&l| l == id).collect();
        let voxvol = desc.voxel_volume_mm3();
        let volume = c.voxel_count as f64 * voxvol;
        let area = surface_area_mm2(&member, desc);
        let spher = sphericity(volume, area);
        let elong = elongation(c.bbox_min, c.bbox_max, desc.spacing);
        let mut sum = 0.0;
        let mut max = f64::NEG_INFINITY;
        for (i, &m) in member.iter().enumerate() {
            if m {
                let v = image.value_f64(i);
                sum += v;
                if v > max {
                    max = v;
                }
            }
        }
        let mean = sum / c.voxel_count as f64;
        let lobe = self.lobe_of_component(&mask, &member, c.voxel_count);
        let mut features = payload();
        features.insert("surface_area_mm2".into(), json!(area));
        features.insert("sphericity".into(), json!(spher));
        features.insert("elongation".into(), json!(elong));
        features.insert("mean_intensity".into(), json!(mean));
        features.insert("max_intensity".into(), json!(max));
        let mut p = payload();
        p.insert("id".into(), json!(c.id));
        p.insert("volume_mm3".into(), json!(volume));
        p.insert("centroid_mm".into(), json!(c.centroid_mm));
        p.insert("bbox_min".into(), json!(c.bbox_min));
        p.insert("bbox_max".into(), json!(c.bbox_max));
        p.insert(
            "lobe".into(),
            json!(lobe.map(|(name, _)| name).unwrap_or_else(|| "unknown".into())),
        );
        p.insert("features".into(), Value::Object(features));
        Ok(ToolResult::ok(p, vec![]))
    }

    /// Majority lobe of a component, if the mask lives on the canonical grid.
    fn lobe_of_component(
        &self,
        mask: &LabelMask,
        member: &[bool],
        voxel_count: usize,
    ) -> Option<(String, f64)> {
        let on_atlas = self.space_of(&mask.grid) == Some(Space::Atlas(self.gt.atlas))
            && *mask.grid.descriptor() == self.gt.atlas_grid();
        if !on_atlas || voxel_count == 0 {
            return None;
        }
        let dims = mask.grid.dims();
        let mut overlap = [0usize; 6];
        for (i, &m) in member.iter().enumerate() {
            if !m {
                continue;
            }
            let x = i % dims[0];
            let y = (i / dims[0]) % dims[1];
            let z = i / (dims[0] * dims[1]);
            let lobe = self.gt.lobe_id(x, y, z);
            overlap[lobe as usize - 1] += 1;
        }
        let (best_idx, &best) = overlap
            .iter()
            .enumerate()
            .max_by_key(|(idx, &n)| (n, usize::MAX - idx))
            .expect("six lobes");
        Some((
            LOBES[best_idx].to_string(),
            best as f64 / voxel_count as f64,
        ))
    }

    pub fn tool_localize_lesion(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_localize_lesion(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_localize_lesion(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, mask) = self.mask_arg(args, "mask")?;
        let on_atlas = self.space_of(&mask.grid) == Some(Space::Atlas(self.gt.atlas))
            && *mask.grid.descriptor() == self.gt.atlas_grid();
        if !on_atlas {
            return Err(ToolResult::error(
                error_kind::PRECONDITION_FAILED,
                format!("space: mask is not in {} atlas space", self.gt.atlas),
            ));
        }
        let set = self.components(&mask);
        let id = self.lesion_id_arg(args, &set)?;
        let c = set.info(id).expect("id in range");
        let member: Vec<bool> = set.labeling.data().iter().map(|&l| l == id).collect();
        let (lobe, fraction) = self
            .lobe_of_component(&mask, &member, c.voxel_count)
            .expect("mask verified to be on the canonical grid");
        let mut p = payload();
        p.insert("lesion_id".into(), json!(id));
        p.insert("lobe".into(), json!(lobe));
        p.insert("overlap_fraction".into(), json!(fraction));
        Ok(ToolResult::ok(p, vec![]))
    }

    pub fn tool_visualize(&mut self, args: &JsonMap) -> ToolResult {
        match self.try_visualize(args) {
            Ok(r) | Err(r) => r,
        }
    }

    fn try_visualize(&mut self, args: &JsonMap) -> Flow<ToolResult> {
        let (_, image) = self.image_arg(args, "image")?;
        let mask = match args.get("mask") {
            Some(Value::String(_)) => Some(self.mask_arg(args, "mask")?.1),
            None | Some(Value::Null) => None,
            Some(_) => {
                return Err(ToolResult::error(
                    error_kind::BAD_ARGUMENT,
                    "argument 'mask' must be a handle id",
                ))
            }
        };
        if let Some(m) = &mask {
            if m.grid.descriptor() != image.descriptor() {
                return Err(ToolResult::error(
                    error_kind::GRID_ERROR,
                    "mask and image are on different grids",
                ));
            }
        }
        let [nx, ny, nz] = image.dims();
        let z = nz / 2;
        let plane = nx * ny;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..plane {
            let v = image.value_f64(z * plane + i);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = if hi > lo { hi - lo } else { 1.0 };
        let mut pixels = Vec::with_capacity(plane);
        for y in 0..ny {
            for x in 0..nx {
                let i = z * plane + y * nx + x;
                let masked = mask
                    .as_ref()
                    .map(|m| m.grid.label_at(i) != 0)
                    .unwrap_or(false);
                let byte = if masked {
                    255u8
                } else {
                    (((image.value_f64(i) - lo) / range) * 255.0).round() as u8
                };
                pixels.push(byte);
            }
        }
        self.viz_count += 1;
        let name = format!("viz_{}.pgm", self.viz_count);
        let path = self.out_dir.join(&name);
        let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
        bytes.extend_from_slice(&pixels);
        if let Some(parent) = path.parent() {
            let _ = std::fs::create_dir_all(parent);
        }
        if let Err(e) = std::fs::write(&path, &bytes) {
            return Err(ToolResult::error(
                error_kind::BAD_ARGUMENT,
                format!("cannot write snapshot: {e}"),
            ));
        }
        let mut p = payload();
        p.insert("path".into(), json!(name));
        p.insert("slice".into(), json!(z));
        Ok(ToolResult::ok(p, vec![]))
    }
}

/// Greedy longitudinal matching by descending pairwise IoU; every instance is
/// matched at most once and only pairs at or above the threshold survive.
/// Unmatched instances are reported with their centroids so downstream
/// reasoning about near-misses stays possible.
pub struct MatchOutcome {
    pub pairs: Vec<(u32, u32, f64)>,
    pub new: Vec<(u32, [f64; 3])>,
    pub resolved: Vec<(u32, [f64; 3])>,
}

pub fn match_components(t0: &ComponentSet, t1: &ComponentSet, threshold: f64) -> MatchOutcome {
    let mut candidates = Vec::new();
    for a in &t0.components {
        let fa: Vec<bool> = t0.labeling.data().iter().map(|&l| l == a.id).collect();
        for b in &t1.components {
            let fb: Vec<bool> = t1.labeling.data().iter().map(|&l| l == b.id).collect();
            let iou = iou_of_fields(&fa, &fb);
            if iou >= threshold && iou > 0.0 {
                candidates.push((a.id, b.id, iou));
            }
        }
    }
    candidates.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });
    let mut used0 = vec![false; t0.count + 1];
    let mut used1 = vec![false; t1.count + 1];
    let mut pairs = Vec::new();
    for (a, b, iou) in candidates {
        if used0[a as usize] || used1[b as usize] {
            continue;
        }
        used0[a as usize] = true;
        used1[b as usize] = true;
        pairs.push((a, b, iou));
    }
    let resolved = t0
        .components
        .iter()
        .filter(|c| !used0[c.id as usize])
        .map(|c| (c.id, c.centroid_mm))
        .collect();
    let new = t1
        .components
        .iter()
        .filter(|c| !used1[c.id as usize])
        .map(|c| (c.id, c.centroid_mm))
        .collect();
    MatchOutcome {
        pairs,
        new,
        resolved,
    }
}

fn vocab_json(vocab: &BTreeMap<i64, String>) -> Value {
    Value::Array(
        vocab
            .iter()
            .map(|(&id, name)| json!({"id": id, "name": name}))
            .collect(),
    )
}

fn parse_triple(v: Option<&Value>) -> Option<[f64; 3]> {
    let arr = v?.as_array()?;
    if arr.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (i, x) in arr.iter().enumerate() {
        out[i] = x.as_f64()?;
        if !(out[i] > 0.0) {
            return None;
        }
    }
    Some(out)
}
