//! Property suites over the voxel-grid layer.

use proptest::prelude::*;
use workbench_core::volume::components::{components_of_field, Connectivity};
use workbench_core::volume::grid::{GridDescriptor, Volume, VoxelVolume};
use workbench_core::volume::nifti::{read_volume_bytes, write_volume_bytes};
use workbench_core::volume::overlap::overlap_iou;
use workbench_core::volume::resample::{resample, Interpolation};

fn small_dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..=10, 1usize..=10, 1usize..=10).prop_map(|(a, b, c)| [a, b, c])
}

fn mask_volume() -> impl Strategy<Value = Volume<u8>> {
    small_dims().prop_flat_map(|dims| {
        let n = dims[0] * dims[1] * dims[2];
        proptest::collection::vec(0u8..=1, n).prop_map(move |data| {
            let desc = GridDescriptor::axis_aligned(dims, [1.0, 0.5, 2.0], [1.0, -2.0, 0.5]);
            Volume::from_parts(desc, data).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in mask_volume(), b in mask_volume()) {
        // Put b on a's grid so the comparison is defined.
        let desc = a.descriptor().clone();
        let n = desc.voxel_count();
        let mut data = b.data().to_vec();
        data.resize(n, 0);
        let b = Volume::from_parts(desc, data).unwrap();
        let va: VoxelVolume = a.clone().into();
        let vb: VoxelVolume = b.into();
        let ab = overlap_iou(&va, &vb).unwrap();
        let ba = overlap_iou(&vb, &va).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        if va.nonzero_count() > 0 {
            prop_assert_eq!(overlap_iou(&va, &va).unwrap(), 1.0);
        }
    }

    #[test]
    fn component_count_and_coverage(mask in mask_volume(), conn_idx in 0usize..3) {
        let conn = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix][conn_idx];
        let fg = mask.nonzero_mask();
        let set = components_of_field(&fg, mask.descriptor(), conn);
        // Dense ids, total coverage, and descending size ordering.
        prop_assert_eq!(set.total_foreground(), mask.nonzero_count());
        for w in set.components.windows(2) {
            prop_assert!(w[0].voxel_count >= w[1].voxel_count);
        }
        for (i, c) in set.components.iter().enumerate() {
            prop_assert_eq!(c.id as usize, i + 1);
            // Centroid inside the world-space bounding box.
            let lo = mask.descriptor().index_to_world([
                c.bbox_min[0] as f64, c.bbox_min[1] as f64, c.bbox_min[2] as f64,
            ]);
            let hi = mask.descriptor().index_to_world([
                c.bbox_max[0] as f64, c.bbox_max[1] as f64, c.bbox_max[2] as f64,
            ]);
            for a in 0..3 {
                prop_assert!(c.centroid_mm[a] >= lo[a].min(hi[a]) - 1e-9);
                prop_assert!(c.centroid_mm[a] <= lo[a].max(hi[a]) + 1e-9);
            }
        }
    }

    #[test]
    fn nearest_resample_round_trips_through_half_spacing(mask in mask_volume()) {
        let original: VoxelVolume = mask.into();
        let spacing = original.spacing();
        let half = [spacing[0] / 2.0, spacing[1] / 2.0, spacing[2] / 2.0];
        let fine = resample(&original, half, Interpolation::Nearest).unwrap();
        let back = resample(&fine, spacing, Interpolation::Nearest).unwrap();
        prop_assert_eq!(back, original);
    }

    #[test]
    fn nifti_round_trip_is_identity(mask in mask_volume()) {
        // Geometry uses f32-exact values by construction of mask_volume().
        let original: VoxelVolume = mask.into();
        let bytes = write_volume_bytes(&original);
        let back = read_volume_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &original);
        prop_assert_eq!(write_volume_bytes(&back), bytes);
    }

    #[test]
    fn token_estimator_monotone(a in ".{0,120}", b in ".{0,120}") {
        use workbench_core::backends::tokens::estimate_tokens;
        let joined = format!("{a}{b}");
        prop_assert!(estimate_tokens(&joined) >= estimate_tokens(&a));
        prop_assert!(
            estimate_tokens(&joined) <= estimate_tokens(&a) + estimate_tokens(&b) + 1
        );
    }
}
