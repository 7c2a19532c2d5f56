//! Synthetic phantom construction: analytic brain, anatomy partition, lesion
//! ellipsoids, and per-modality intensity maps, all deterministic from the
//! case spec. Unprocessed cases are emitted on a translated/permuted native
//! grid with a skull shell added.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::toolbox::atlas;
use crate::toolbox::env::Modality;
use crate::toolbox::ground_truth::{GroundTruth, ScanInfo};
use crate::toolbox::vocab::{anatomy_vocabulary, Pathology};
use crate::volume::affine::{Affine, SignedPermutation};
use crate::volume::grid::{GridDescriptor, LabelMask, Volume};

use super::BenchError;

/// One lesion: an ellipsoid with per-timepoint radius scaling. A scale of 0
/// means the lesion is absent at that timepoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
    /// Per-timepoint scale factors; length equals the case's timepoints.
    pub scales: Vec<f64>,
}

/// Full deterministic description of one phantom case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub case_id: String,
    pub pathology: Pathology,
    pub timepoints: usize,
    pub preprocessed: bool,
    pub seed: u64,
    pub lesions: Vec<LesionSpec>,
    /// Native-frame placement for unprocessed cases (ignored when
    /// preprocessed): a signed axis permutation plus integer translation.
    pub native_permutation: SignedPermutation,
    pub native_offset_mm: [f64; 3],
}

/// Analytic brain ellipsoid for an atlas grid.
pub struct BrainShape {
    pub center: [f64; 3],
    pub radii: [f64; 3],
}

pub fn brain_shape(grid: &GridDescriptor) -> BrainShape {
    let center = std::array::from_fn(|a| {
        grid.origin[a] + (grid.dims[a] as f64 - 1.0) * grid.spacing[a] * 0.5
    });
    let radii = std::array::from_fn(|a| (grid.dims[a] as f64 * grid.spacing[a]) * 0.42);
    BrainShape { center, radii }
}

fn rho(w: [f64; 3], center: [f64; 3], radii: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| {
            let d = (w[a] - center[a]) / radii[a];
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Anatomy partition: the brain bounding box split 4 x 4 x 2 into 32 cells.
fn anatomy_cell(bbox: &([usize; 3], [usize; 3]), x: usize, y: usize, z: usize) -> i64 {
    let (lo, hi) = bbox;
    let cell = |v: usize, a: usize, n: usize| -> usize {
        let ext = hi[a] - lo[a] + 1;
        (((v - lo[a]) * n) / ext).min(n - 1)
    };
    let cx = cell(x, 0, 4);
    let cy = cell(y, 1, 4);
    let cz = cell(z, 2, 2);
    (1 + cx + 4 * cy + 16 * cz) as i64
}

/// Build the immutable ground truth for a spec (pure function of the spec).
pub fn build_ground_truth(spec: &PhantomSpec) -> Result<GroundTruth, BenchError> {
    if spec.timepoints == 0 || spec.timepoints > 3 {
        return Err(BenchError::Spec(format!(
            "{}: timepoints must be 1..=3",
            spec.case_id
        )));
    }
    for lesion in &spec.lesions {
        if lesion.scales.len() != spec.timepoints {
            return Err(BenchError::Spec(format!(
                "{}: lesion scale list length must equal timepoints",
                spec.case_id
            )));
        }
        if lesion.scales.iter().any(|&s| s < 0.0) {
            return Err(BenchError::Spec(format!(
                "{}: lesion scale factors must be >= 0",
                spec.case_id
            )));
        }
    }
    let grid = atlas::grid_of(spec.pathology.atlas());
    let brain = brain_shape(&grid);

    let mut brain_mask = Volume::<u8>::zeros(grid.dims, grid.spacing, grid.origin);
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for z in 0..grid.dims[2] {
        for y in 0..grid.dims[1] {
            for x in 0..grid.dims[0] {
                let w = grid.index_to_world([x as f64, y as f64, z as f64]);
                if rho(w, brain.center, brain.radii) <= 1.0 {
                    brain_mask.set(x, y, z, 1);
                    let c = [x, y, z];
                    for a in 0..3 {
                        lo[a] = lo[a].min(c[a]);
                        hi[a] = hi[a].max(c[a]);
                    }
                }
            }
        }
    }
    let bbox = (lo, hi);

    let mut anatomy = Volume::<i16>::zeros(grid.dims, grid.spacing, grid.origin);
    let n = anatomy.data().len();
    for i in 0..n {
        if brain_mask.data()[i] != 0 {
            let [x, y, z] = anatomy.coords(i);
            anatomy.data_mut()[i] = anatomy_cell(&bbox, x, y, z) as i16;
        }
    }

    let vocabulary = spec.pathology.model().vocabulary();
    let mut lesion_instances = Vec::new();
    let mut pathology_masks = Vec::new();
    for tp in 0..spec.timepoints {
        let mut instances = Volume::<u8>::zeros(grid.dims, grid.spacing, grid.origin);
        let mut labels = Volume::<u8>::zeros(grid.dims, grid.spacing, grid.origin);
        // Paint each present lesion, tracking (size, centroid) for the
        // deterministic instance numbering (descending size, centroid ties).
        let mut painted: Vec<(usize, [f64; 3], Vec<usize>)> = Vec::new();
        for lesion in &spec.lesions {
            let scale = lesion.scales[tp];
            if scale <= 0.0 {
                continue;
            }
            let radii = std::array::from_fn(|a| lesion.radii_mm[a] * scale);
            let mut voxels = Vec::new();
            let mut idx_sum = [0.0f64; 3];
            for z in 0..grid.dims[2] {
                for y in 0..grid.dims[1] {
                    for x in 0..grid.dims[0] {
                        let w = grid.index_to_world([x as f64, y as f64, z as f64]);
                        let r = rho(w, lesion.center_mm, radii);
                        if r > 1.0 {
                            continue;
                        }
                        let i = x + grid.dims[0] * (y + grid.dims[1] * z);
                        if brain_mask.data()[i] == 0 {
                            return Err(BenchError::Spec(format!(
                                "{}: lesion at {:?} exits the brain at t{tp}",
                                spec.case_id, lesion.center_mm
                            )));
                        }
                        if labels.data()[i] != 0 {
                            return Err(BenchError::Spec(format!(
                                "{}: lesions overlap at t{tp}",
                                spec.case_id
                            )));
                        }
                        labels.data_mut()[i] = sub_region_label(r, spec.pathology);
                        voxels.push(i);
                        idx_sum[0] += x as f64;
                        idx_sum[1] += y as f64;
                        idx_sum[2] += z as f64;
                    }
                }
            }
            if voxels.is_empty() {
                return Err(BenchError::Spec(format!(
                    "{}: lesion at {:?} covers no voxels at t{tp}",
                    spec.case_id, lesion.center_mm
                )));
            }
            let count = voxels.len();
            let centroid = grid.index_to_world([
                idx_sum[0] / count as f64,
                idx_sum[1] / count as f64,
                idx_sum[2] / count as f64,
            ]);
            painted.push((count, centroid, voxels));
        }
        let mut order: Vec<usize> = (0..painted.len()).collect();
        order.sort_by(|&a, &b| {
            painted[b]
                .0
                .cmp(&painted[a].0)
                .then_with(|| painted[a].1.partial_cmp(&painted[b].1).unwrap())
        });
        for (instance_id0, &src) in order.iter().enumerate() {
            for &i in &painted[src].2 {
                instances.data_mut()[i] = instance_id0 as u8 + 1;
            }
        }
        lesion_instances.push(instances);
        pathology_masks.push(LabelMask {
            grid: labels.into(),
            vocabulary: vocabulary.clone(),
        });
    }

    let scans = (0..spec.timepoints)
        .map(|_| {
            if spec.preprocessed {
                ScanInfo {
                    preprocessed: true,
                    native_grid: grid.clone(),
                    native_to_atlas: Affine::identity(),
                }
            } else {
                let native_to_atlas = spec.native_permutation.to_affine(spec.native_offset_mm);
                ScanInfo {
                    preprocessed: false,
                    native_grid: native_grid_for(&grid, &native_to_atlas),
                    native_to_atlas,
                }
            }
        })
        .collect();

    let gt = GroundTruth {
        case_id: spec.case_id.clone(),
        pathology: spec.pathology,
        atlas: spec.pathology.atlas(),
        brain_mask,
        brain_bbox: bbox,
        anatomy: LabelMask {
            grid: anatomy.into(),
            vocabulary: anatomy_vocabulary(),
        },
        lesion_instances,
        pathology_masks,
        scans,
    };
    gt.validate()
        .map_err(|e| BenchError::Spec(format!("{}: {e}", spec.case_id)))?;
    Ok(gt)
}

/// Tumor sub-region by fractional radius: core inside, enhancing rim, edema
/// at the boundary; postop cases carve a resection cavity in the center.
fn sub_region_label(r: f64, pathology: Pathology) -> u8 {
    if pathology == Pathology::PostopGlioma && r <= 0.3 {
        return 4;
    }
    if r <= 0.5 {
        1
    } else if r <= 0.8 {
        3
    } else {
        2
    }
}

/// Native grid enclosing the atlas domain (pulled through the inverse rigid
/// transform) with a padding margin. Native grids stay identity-oriented;
/// the rotation lives in the world transform.
fn native_grid_for(atlas_grid: &GridDescriptor, native_to_atlas: &Affine) -> GridDescriptor {
    let inv = native_to_atlas
        .inverse()
        .expect("signed permutations are invertible");
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for cz in [0, atlas_grid.dims[2] - 1] {
        for cy in [0, atlas_grid.dims[1] - 1] {
            for cx in [0, atlas_grid.dims[0] - 1] {
                let w = atlas_grid.index_to_world([cx as f64, cy as f64, cz as f64]);
                let nw = inv.apply(w);
                for a in 0..3 {
                    lo[a] = lo[a].min(nw[a]);
                    hi[a] = hi[a].max(nw[a]);
                }
            }
        }
    }
    const PAD: f64 = 3.0;
    let origin = std::array::from_fn(|a| lo[a] - PAD);
    let dims = std::array::from_fn(|a| (hi[a] - lo[a] + 2.0 * PAD) as usize + 1);
    GridDescriptor::axis_aligned(dims, [1.0; 3], origin)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic micro-texture in [0, 2), keyed on the canonical voxel so the
/// same tissue reads identically in native and atlas space.
fn texture(seed: u64, tp: usize, modality: Modality, canonical_index: usize) -> f64 {
    let key = seed
        .wrapping_mul(31)
        .wrapping_add(tp as u64)
        .wrapping_mul(31)
        .wrapping_add(modality as u64 + 1)
        .wrapping_mul(31)
        .wrapping_add(canonical_index as u64);
    (splitmix64(key) >> 11) as f64 / (1u64 << 53) as f64 * 2.0
}

fn modality_base(modality: Modality) -> f64 {
    match modality {
        Modality::T1 => 70.0,
        Modality::T1ce => 74.0,
        Modality::T2 => 62.0,
        Modality::Flair => 58.0,
    }
}

/// Lesion contrast added on top of tissue intensity, by sub-region label.
fn lesion_delta(modality: Modality, label: u8) -> f64 {
    let l = f64::from(label);
    match modality {
        Modality::T1 => -15.0 - 2.0 * l,
        Modality::T1ce => {
            if label == 3 {
                18.0
            } else {
                6.0
            }
        }
        Modality::T2 => 12.0 + 3.0 * l,
        Modality::Flair => 18.0 + 2.0 * l,
    }
}

/// Intensity of a canonical-grid voxel (brain tissue only; zero outside).
fn canonical_intensity(
    spec: &PhantomSpec,
    gt: &GroundTruth,
    tp: usize,
    modality: Modality,
    i: usize,
    w: [f64; 3],
    brain: &BrainShape,
) -> f64 {
    if gt.brain_mask.data()[i] == 0 {
        return 0.0;
    }
    let mut v = modality_base(modality);
    v += 0.3 * (w[0] - brain.center[0]) + 0.2 * (w[1] - brain.center[1])
        + 0.1 * (w[2] - brain.center[2]);
    let region = gt.anatomy.grid.label_at(i);
    v += (region % 7) as f64 * 1.5;
    let label = gt.pathology_masks[tp].grid.label_at(i) as u8;
    if label != 0 {
        v += lesion_delta(modality, label);
    }
    v + texture(spec.seed, tp, modality, i)
}

/// The modality volume on the canonical atlas grid (skull-stripped content).
pub fn modality_volume_canonical(
    spec: &PhantomSpec,
    gt: &GroundTruth,
    tp: usize,
    modality: Modality,
) -> Volume<f32> {
    let grid = gt.atlas_grid();
    let brain = brain_shape(&grid);
    let mut vol = Volume::<f32>::zeros(grid.dims, grid.spacing, grid.origin);
    let n = vol.data().len();
    for i in 0..n {
        let [x, y, z] = vol.coords(i);
        let w = grid.index_to_world([x as f64, y as f64, z as f64]);
        let v = canonical_intensity(spec, gt, tp, modality, i, w, &brain);
        vol.data_mut()[i] = v as f32;
    }
    vol
}

/// The modality volume as acquired: the canonical content pulled onto the
/// native grid (an exact voxel bijection) with a bright skull shell outside
/// the brain. Preprocessed cases are acquired on the canonical grid itself.
pub fn modality_volume_acquired(
    spec: &PhantomSpec,
    gt: &GroundTruth,
    tp: usize,
    modality: Modality,
) -> Volume<f32> {
    if spec.preprocessed {
        return modality_volume_canonical(spec, gt, tp, modality);
    }
    let atlas_grid = gt.atlas_grid();
    let brain = brain_shape(&atlas_grid);
    let scan = &gt.scans[tp];
    let grid = scan.native_grid.clone();
    let mut vol = Volume::<f32>::zeros(grid.dims, grid.spacing, grid.origin);
    let n = vol.data().len();
    for i in 0..n {
        let [x, y, z] = vol.coords(i);
        let nw = grid.index_to_world([x as f64, y as f64, z as f64]);
        let w = scan.native_to_atlas.apply(nw);
        // Exact integer landing on the canonical grid by construction.
        let ci: Option<usize> = {
            let fx = (w[0] - atlas_grid.origin[0]) / atlas_grid.spacing[0];
            let fy = (w[1] - atlas_grid.origin[1]) / atlas_grid.spacing[1];
            let fz = (w[2] - atlas_grid.origin[2]) / atlas_grid.spacing[2];
            let (ix, iy, iz) = (fx.round() as isize, fy.round() as isize, fz.round() as isize);
            if ix >= 0
                && iy >= 0
                && iz >= 0
                && (ix as usize) < atlas_grid.dims[0]
                && (iy as usize) < atlas_grid.dims[1]
                && (iz as usize) < atlas_grid.dims[2]
            {
                Some(ix as usize + atlas_grid.dims[0] * (iy as usize + atlas_grid.dims[1] * iz as usize))
            } else {
                None
            }
        };
        let value = match ci {
            Some(ci) if gt.brain_mask.data()[ci] != 0 => {
                canonical_intensity(spec, gt, tp, modality, ci, w, &brain)
            }
            _ => {
                let r = rho(w, brain.center, brain.radii);
                if r > 1.0 && r <= 1.25 {
                    55.0 + texture(spec.seed ^ 0xface, tp, modality, i)
                } else {
                    0.0
                }
            }
        };
        vol.data_mut()[i] = value as f32;
    }
    vol
}

/// Relative file path of one acquired modality inside a dataset directory.
pub fn modality_rel_path(case_id: &str, tp: usize, modality: Modality) -> String {
    format!("volumes/{case_id}/t{tp}_{}.nii", modality.name())
}

/// Generate and write the case's files; returns the relative paths keyed by
/// (timepoint, modality).
pub fn write_case_volumes(
    spec: &PhantomSpec,
    gt: &GroundTruth,
    dataset_dir: &std::path::Path,
) -> Result<BTreeMap<(usize, Modality), String>, BenchError> {
    let mut out = BTreeMap::new();
    for tp in 0..spec.timepoints {
        for modality in Modality::ALL {
            let vol = modality_volume_acquired(spec, gt, tp, modality);
            let rel = modality_rel_path(&spec.case_id, tp, modality);
            let abs = dataset_dir.join(&rel);
            if let Some(parent) = abs.parent() {
                std::fs::create_dir_all(parent).map_err(|e| BenchError::Io(e.to_string()))?;
            }
            crate::volume::nifti::write_volume(&vol.clone().into(), &abs)
                .map_err(|e| BenchError::Io(e.to_string()))?;
            out.insert((tp, modality), rel);
        }
    }
    Ok(out)
}

impl Modality {
    /// Stable ordering index used for file layout and handle seeding.
    pub fn index(self) -> usize {
        Modality::ALL.iter().position(|m| *m == self).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolbox::Space;

    fn glioma_spec(preprocessed: bool) -> PhantomSpec {
        let grid = atlas::grid_of(Pathology::Glioma.atlas());
        let brain = brain_shape(&grid);
        PhantomSpec {
            case_id: "case-a".into(),
            pathology: Pathology::Glioma,
            timepoints: 1,
            preprocessed,
            seed: 11,
            lesions: vec![LesionSpec {
                center_mm: brain.center,
                radii_mm: [4.0, 4.5, 3.5],
                scales: vec![1.0],
            }],
            native_permutation: SignedPermutation {
                axis: [1, 0, 2],
                sign: [1, -1, 1],
            },
            native_offset_mm: [5.0, -2.0, 3.0],
        }
    }

    #[test]
    fn ground_truth_is_deterministic() {
        let spec = glioma_spec(true);
        let a = build_ground_truth(&spec).unwrap();
        let b = build_ground_truth(&spec).unwrap();
        assert_eq!(a.brain_mask, b.brain_mask);
        assert_eq!(a.lesion_instances, b.lesion_instances);
        assert_eq!(a.lesion_instances[0].data().iter().filter(|&&v| v != 0).count() > 0, true);
    }

    #[test]
    fn lesion_outside_brain_is_a_spec_error() {
        let mut spec = glioma_spec(true);
        spec.lesions[0].center_mm = [1.0, 1.0, 1.0];
        assert!(matches!(
            build_ground_truth(&spec),
            Err(BenchError::Spec(_))
        ));
    }

    #[test]
    fn native_and_canonical_volumes_agree_over_the_brain() {
        let spec = glioma_spec(false);
        let gt = build_ground_truth(&spec).unwrap();
        let canonical = modality_volume_canonical(&spec, &gt, 0, Modality::T1);
        let native = modality_volume_acquired(&spec, &gt, 0, Modality::T1);
        let scan = &gt.scans[0];
        let atlas_grid = gt.atlas_grid();
        let mut checked = 0;
        for (i, &b) in gt.brain_mask.data().iter().enumerate() {
            if b == 0 {
                continue;
            }
            let [x, y, z] = canonical.coords(i);
            let w = atlas_grid.index_to_world([x as f64, y as f64, z as f64]);
            let nw = scan
                .native_to_atlas
                .inverse()
                .unwrap()
                .apply(w);
            let nx = (nw[0] - native.origin()[0]).round() as usize;
            let ny = (nw[1] - native.origin()[1]).round() as usize;
            let nz = (nw[2] - native.origin()[2]).round() as usize;
            assert_eq!(native.get(nx, ny, nz), canonical.get(x, y, z));
            checked += 1;
        }
        assert!(checked > 1000);
    }

    #[test]
    fn unprocessed_headers_differ_from_atlas() {
        let spec = glioma_spec(false);
        let gt = build_ground_truth(&spec).unwrap();
        let diff = crate::volume::headers::compare_headers(
            &gt.grid_of(Space::Native(0)),
            &gt.atlas_grid(),
            &Default::default(),
        );
        assert!(!diff.equal);
    }

    #[test]
    fn anatomy_partition_covers_the_brain_with_32_cells() {
        let spec = glioma_spec(true);
        let gt = build_ground_truth(&spec).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for (i, &b) in gt.brain_mask.data().iter().enumerate() {
            let lab = gt.anatomy.grid.label_at(i);
            if b != 0 {
                assert!(lab >= 1 && lab <= 32);
                seen.insert(lab);
            } else {
                assert_eq!(lab, 0);
            }
        }
        assert_eq!(seen.len(), 32);
    }
}
