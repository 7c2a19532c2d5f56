//! Agent-facing tool suite: deterministic simulations over phantom ground
//! truth, exchanged with agents via text payloads and opaque object handles.

pub mod atlas;
pub mod env;
pub mod features;
pub mod ground_truth;
pub mod handles;
pub mod noise;
pub mod register;
pub mod result;
pub mod vocab;

pub use env::{match_components, CaseFile, Modality, SimEnv};
pub use ground_truth::{GroundTruth, ScanInfo, Space};
pub use handles::{HandleStore, StoredObject};
pub use result::{error_kind, HandleKind, ObjectHandle, ToolResult, ToolStatus};
pub use vocab::{AtlasSpace, Pathology, SegModel};

#[cfg(test)]
pub(crate) mod testutil {
    //! Hand-built miniature ground truths for tool unit tests.

    use std::collections::BTreeMap;
    use std::sync::Arc;

    use crate::volume::affine::SignedPermutation;
    use crate::volume::grid::{LabelMask, Volume};

    use super::atlas;
    use super::ground_truth::{GroundTruth, ScanInfo};
    use super::vocab::{anatomy_vocabulary, Pathology, SegModel};

    /// A glioma case on the SRI24 grid: box brain of exactly 1000 voxels
    /// (10x10x10), one 3x3x3 lesion, one timepoint, preprocessed.
    pub fn tiny_ground_truth() -> GroundTruth {
        tiny_ground_truth_with(Pathology::Glioma, true)
    }

    pub fn tiny_ground_truth_with(pathology: Pathology, preprocessed: bool) -> GroundTruth {
        let grid = atlas::grid_of(pathology.atlas());
        let mut brain = Volume::<u8>::zeros(grid.dims, grid.spacing, grid.origin);
        let lo = [8usize, 10, 8];
        for z in lo[2]..lo[2] + 10 {
            for y in lo[1]..lo[1] + 10 {
                for x in lo[0]..lo[0] + 10 {
                    brain.set(x, y, z, 1);
                }
            }
        }
        let mut lesions = Volume::<u8>::zeros(grid.dims, grid.spacing, grid.origin);
        let mut path_mask = Volume::<u8>::zeros(grid.dims, grid.spacing, grid.origin);
        for z in 12..15 {
            for y in 13..16 {
                for x in 10..13 {
                    lesions.set(x, y, z, 1);
                    path_mask.set(x, y, z, 3);
                }
            }
        }
        // Anatomy: region 1 = lesioned half, region 2 = rest of the brain.
        let mut anatomy = Volume::<i16>::zeros(grid.dims, grid.spacing, grid.origin);
        let n = anatomy.data().len();
        for i in 0..n {
            if brain.data()[i] != 0 {
                let [x, ..] = anatomy.coords(i);
                anatomy.data_mut()[i] = if x < lo[0] + 5 { 1 } else { 2 };
            }
        }
        let scan = if preprocessed {
            ScanInfo {
                preprocessed: true,
                native_grid: grid.clone(),
                native_to_atlas: crate::volume::affine::Affine::identity(),
            }
        } else {
            // Native frame: integer translation into the atlas frame, padded grid.
            let perm = SignedPermutation::identity();
            let native_to_atlas = perm.to_affine([-3.0, 2.0, -1.0]);
            let mut native_grid = grid.clone();
            native_grid.dims = [grid.dims[0] + 6, grid.dims[1] + 6, grid.dims[2] + 6];
            ScanInfo {
                preprocessed: false,
                native_grid,
                native_to_atlas,
            }
        };
        let gt = GroundTruth {
            case_id: "case-test".into(),
            pathology,
            atlas: pathology.atlas(),
            brain_mask: brain,
            brain_bbox: (lo, [lo[0] + 9, lo[1] + 9, lo[2] + 9]),
            anatomy: LabelMask {
                grid: anatomy.into(),
                vocabulary: anatomy_vocabulary(),
            },
            lesion_instances: vec![lesions],
            pathology_masks: vec![LabelMask {
                grid: path_mask.into(),
                vocabulary: SegModel::Glioma.vocabulary(),
            }],
            scans: vec![scan],
        };
        gt.validate().unwrap();
        gt
    }

    pub fn tiny_env(dir: &std::path::Path) -> super::SimEnv {
        let gt = Arc::new(tiny_ground_truth());
        env_for(gt, dir)
    }

    pub fn env_for(gt: Arc<GroundTruth>, dir: &std::path::Path) -> super::SimEnv {
        use super::env::{CaseFile, Modality};
        use crate::volume::nifti::write_volume;

        let grid = gt.grid_of(super::Space::Native(0));
        let mut files = BTreeMap::new();
        for modality in Modality::ALL {
            let mut img = Volume::<f32>::zeros(grid.dims, grid.spacing, grid.origin);
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                *v = (i % 97) as f32 * 0.25 + 10.0;
            }
            let rel = format!("t0/{}.nii", modality.name());
            let abs = dir.join(&rel);
            std::fs::create_dir_all(abs.parent().unwrap()).unwrap();
            write_volume(&img.into(), &abs).unwrap();
            files.insert(
                rel,
                CaseFile {
                    abs_path: abs,
                    timepoint: 0,
                    modality,
                },
            );
        }
        super::SimEnv::new(gt, files, dir.join("work"), 0.0, 7)
    }
}
