//! Morphological features of voxel lesion instances.

use crate::volume::grid::GridDescriptor;

/// Exposed-face surface area in mm^2 of the voxel set where `member(i)` holds.
/// Each instance voxel contributes one face per 6-neighbor that is outside
/// the set (or outside the grid).
pub fn surface_area_mm2(member: &[bool], desc: &GridDescriptor) -> f64 {
    let [nx, ny, nz] = desc.dims;
    let [sx, sy, sz] = desc.spacing;
    let face = [sy * sz, sx * sz, sx * sy];
    let mut area = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !member[i] {
                    continue;
                }
                let neighbors: [(isize, isize, isize, usize); 6] = [
                    (-1, 0, 0, 0),
                    (1, 0, 0, 0),
                    (0, -1, 0, 1),
                    (0, 1, 0, 1),
                    (0, 0, -1, 2),
                    (0, 0, 1, 2),
                ];
                for (dx, dy, dz, axis) in neighbors {
                    let jx = x as isize + dx;
                    let jy = y as isize + dy;
                    let jz = z as isize + dz;
                    let outside = jx < 0
                        || jy < 0
                        || jz < 0
                        || jx as usize >= nx
                        || jy as usize >= ny
                        || jz as usize >= nz
                        || !member[jx as usize + nx * (jy as usize + ny * jz as usize)];
                    if outside {
                        area += face[axis];
                    }
                }
            }
        }
    }
    area
}

/// Sphericity: pi^(1/3) * (6V)^(2/3) / A. A perfect sphere scores 1; voxel
/// discretization can push slightly above it.
pub fn sphericity(volume_mm3: f64, surface_mm2: f64) -> f64 {
    if surface_mm2 <= 0.0 {
        return 0.0;
    }
    std::f64::consts::PI.powf(1.0 / 3.0) * (6.0 * volume_mm3).powf(2.0 / 3.0) / surface_mm2
}

/// Elongation as the ratio of the second-longest to the longest world-space
/// bounding-box extent, in [0, 1] with 1 for equal extents.
pub fn elongation(bbox_min: [usize; 3], bbox_max: [usize; 3], spacing: [f64; 3]) -> f64 {
    let mut extents: Vec<f64> = (0..3)
        .map(|a| (bbox_max[a] - bbox_min[a] + 1) as f64 * spacing[a])
        .collect();
    extents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if extents[0] <= 0.0 {
        return 0.0;
    }
    extents[1] / extents[0]
}
