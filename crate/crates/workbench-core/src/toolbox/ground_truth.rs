//! Phantom ground truth backing the simulated tools.

use crate::volume::affine::Affine;
use crate::volume::grid::{GridDescriptor, LabelMask, Volume};
use crate::volume::resample::{apply_affine, Interpolation};
use crate::volume::{Result, VolumeError};

use super::atlas;
use super::vocab::{lobe_of_fraction, AtlasSpace, Pathology};

/// Coordinate space an image can live in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Atlas(AtlasSpace),
    /// Scanner-native frame of one timepoint's acquisition.
    Native(usize),
}

impl Space {
    pub fn tag(self) -> String {
        match self {
            Space::Atlas(a) => a.name().to_string(),
            Space::Native(tp) => format!("native:t{tp}"),
        }
    }

    pub fn parse(s: &str) -> Option<Space> {
        if let Some(a) = AtlasSpace::parse(s) {
            return Some(Space::Atlas(a));
        }
        s.strip_prefix("native:t")
            .and_then(|tp| tp.parse().ok())
            .map(Space::Native)
    }
}

/// Per-timepoint acquisition facts.
#[derive(Debug, Clone)]
pub struct ScanInfo {
    pub preprocessed: bool,
    /// Grid the raw files of this timepoint are on.
    pub native_grid: GridDescriptor,
    /// Rigid world transform from the native frame into the canonical atlas
    /// frame. Identity for preprocessed scans.
    pub native_to_atlas: Affine,
}

/// Everything the simulated tools know about a case, all defined on the
/// case's canonical atlas grid. Immutable and shareable across episodes.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub case_id: String,
    pub pathology: Pathology,
    /// Canonical atlas for this case's pipeline.
    pub atlas: AtlasSpace,
    /// Binary brain mask on the canonical grid.
    pub brain_mask: Volume<u8>,
    /// Index-space bounding box of the brain (inclusive), used by the lobe
    /// and anatomy partitions.
    pub brain_bbox: ([usize; 3], [usize; 3]),
    /// 32-region anatomy labeling of the brain.
    pub anatomy: LabelMask,
    /// Per-timepoint lesion instance labelings (voxel value = instance id).
    pub lesion_instances: Vec<Volume<u8>>,
    /// Per-timepoint tumor sub-region masks (model output vocabulary).
    pub pathology_masks: Vec<LabelMask>,
    pub scans: Vec<ScanInfo>,
}

impl GroundTruth {
    pub fn timepoints(&self) -> usize {
        self.scans.len()
    }

    pub fn atlas_grid(&self) -> GridDescriptor {
        atlas::grid_of(self.atlas)
    }

    /// Grid descriptor of a space.
    pub fn grid_of(&self, space: Space) -> GridDescriptor {
        match space {
            Space::Atlas(a) => atlas::grid_of(a),
            Space::Native(tp) => self.scans[tp].native_grid.clone(),
        }
    }

    /// World transform from `space` into the canonical atlas frame.
    pub fn to_canonical(&self, space: Space) -> Affine {
        match space {
            Space::Atlas(a) => atlas::atlas_bridge(a, self.atlas),
            Space::Native(tp) => self.scans[tp].native_to_atlas,
        }
    }

    /// World transform between two spaces of this case.
    pub fn transform(&self, from: Space, to: Space) -> Affine {
        let from_canon = self.to_canonical(from);
        let to_canon_inv = self
            .to_canonical(to)
            .inverse()
            .expect("rigid space transforms are invertible");
        to_canon_inv.compose(&from_canon)
    }

    /// Pull the canonical brain mask into another space (exact for the
    /// axis-aligned integer-translation grids phantoms use).
    pub fn brain_mask_in(&self, space: Space) -> Volume<u8> {
        let grid = self.grid_of(space);
        if space == Space::Atlas(self.atlas) {
            return self.brain_mask.clone();
        }
        let t = self.to_canonical(space);
        // Pulling onto the target grid needs the transform target->canonical
        // inverted inside apply_affine, which maps source world to target
        // world; here source = canonical volume, target = requested space.
        let canon_to_space = t.inverse().expect("rigid transforms are invertible");
        let pulled = apply_affine(
            &self.brain_mask.clone().into(),
            &canon_to_space,
            &grid,
            Interpolation::Nearest,
        )
        .expect("phantom grids are compatible");
        match pulled {
            crate::volume::grid::VoxelVolume::U8(v) => v,
            _ => unreachable!("dtype preserved"),
        }
    }

    /// Lobe id (1..=6) of a canonical-grid voxel, by fixed fractional planes
    /// over the brain bounding box.
    pub fn lobe_id(&self, x: usize, y: usize, z: usize) -> i64 {
        let (lo, hi) = self.brain_bbox;
        let ext = |a: usize| (hi[a] - lo[a] + 1) as f64;
        let fx = (x as f64 - lo[0] as f64 + 0.5) / ext(0);
        let fy = (y as f64 - lo[1] as f64 + 0.5) / ext(1);
        let _ = z;
        lobe_of_fraction(fx.clamp(0.0, 1.0), fy.clamp(0.0, 1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let n_tp = self.scans.len();
        if self.lesion_instances.len() != n_tp || self.pathology_masks.len() != n_tp {
            return Err(VolumeError::Invalid(
                "per-timepoint ground truth lengths disagree with scan count".into(),
            ));
        }
        for (tp, inst) in self.lesion_instances.iter().enumerate() {
            let mut max_id = 0u8;
            for (i, &v) in inst.data().iter().enumerate() {
                if v != 0 {
                    if self.brain_mask.data()[i] == 0 {
                        return Err(VolumeError::Invalid(format!(
                            "t{tp}: lesion voxel outside brain mask"
                        )));
                    }
                    max_id = max_id.max(v);
                }
            }
            for id in 1..=max_id {
                if !inst.data().iter().any(|&v| v == id) {
                    return Err(VolumeError::Invalid(format!(
                        "t{tp}: instance ids are not dense (missing {id})"
                    )));
                }
            }
        }
        Ok(())
    }
}
