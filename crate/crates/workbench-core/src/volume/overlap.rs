//! Voxel-set overlap measures.

use super::grid::VoxelVolume;
use super::{Result, VolumeError};

/// Intersection-over-union of two binary masks on the same grid (nonzero
/// voxels are foreground). Two empty masks score 0, so an absent–absent pair
/// is never a match candidate.
pub fn overlap_iou(a: &VoxelVolume, b: &VoxelVolume) -> Result<f64> {
    if a.descriptor() != b.descriptor() {
        return Err(VolumeError::Grid(format!(
            "masks are on different grids: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let fa = a.nonzero_mask();
    let fb = b.nonzero_mask();
    Ok(iou_of_fields(&fa, &fb))
}

/// IoU over raw boolean fields of equal length.
pub fn iou_of_fields(a: &[bool], b: &[bool]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.iter().zip(b.iter()) {
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::grid::Volume;

    fn cube(dims: [usize; 3], from: [usize; 3], size: usize) -> VoxelVolume {
        let mut v = Volume::<u8>::zeros(dims, [1.0; 3], [0.0; 3]);
        for z in from[2]..from[2] + size {
            for y in from[1]..from[1] + size {
                for x in from[0]..from[0] + size {
                    v.set(x, y, z, 1);
                }
            }
        }
        v.into()
    }

    #[test]
    fn identical_masks_score_one() {
        let a = cube([6, 6, 6], [1, 1, 1], 3);
        assert_eq!(overlap_iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let a = cube([10, 6, 6], [0, 0, 0], 3);
        let b = cube([10, 6, 6], [6, 0, 0], 3);
        assert_eq!(overlap_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn offset_cubes_score_half() {
        // Two 3x3x3 cubes offset by one voxel along z: intersection 18, union 36.
        let a = cube([6, 6, 8], [1, 1, 1], 3);
        let b = cube([6, 6, 8], [1, 1, 2], 3);
        assert_eq!(overlap_iou(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn both_empty_scores_zero() {
        let a = cube([4, 4, 4], [0, 0, 0], 0);
        assert_eq!(overlap_iou(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = cube([4, 4, 4], [0, 0, 0], 2);
        let b = cube([5, 4, 4], [0, 0, 0], 2);
        assert!(matches!(overlap_iou(&a, &b), Err(VolumeError::Grid(_))));
    }
}
