//! 3D connected-component labeling over voxel grids.

use std::collections::VecDeque;

use super::grid::{LabelMask, Volume};

/// Neighborhood used to join voxels into components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Connectivity {
    Six,
    Eighteen,
    TwentySix,
}

impl Connectivity {
    pub fn as_u8(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }

    pub fn from_u8(n: u8) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            18 => Some(Connectivity::Eighteen),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    /// Neighbor offsets for this connectivity.
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let dist = dx.abs() + dy.abs() + dz.abs();
                    if dist == 0 {
                        continue;
                    }
                    let keep = match self {
                        Connectivity::Six => dist == 1,
                        Connectivity::Eighteen => dist <= 2,
                        Connectivity::TwentySix => true,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl Default for Connectivity {
    /// 26-connectivity is the standard choice for lesion enumeration in 3D MRI.
    fn default() -> Self {
        Connectivity::TwentySix
    }
}

/// Which voxels count as foreground for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Foreground {
    AnyNonzero,
    Label(i64),
}

/// Per-component statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentInfo {
    /// Dense id in 1..=count, assigned by descending voxel count with ties
    /// broken by lexicographic centroid.
    pub id: u32,
    pub voxel_count: usize,
    /// Index-space bounding box, inclusive.
    pub bbox_min: [usize; 3],
    pub bbox_max: [usize; 3],
    /// World-space centroid in mm.
    pub centroid_mm: [f64; 3],
}

/// Result of component labeling: a dense relabeled volume plus per-component
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet {
    pub labeling: Volume<u32>,
    pub count: usize,
    pub connectivity: Connectivity,
    pub components: Vec<ComponentInfo>,
}

impl ComponentSet {
    pub fn info(&self, id: u32) -> Option<&ComponentInfo> {
        self.components.get(id as usize - 1)
    }

    pub fn total_foreground(&self) -> usize {
        self.components.iter().map(|c| c.voxel_count).sum()
    }
}

// u32 is only used internally for component labelings; it never flows through
// file I/O, so a minimal impl keeps Volume<u32> available here.
impl crate::scalar::VoxelScalar for u32 {
    const DTYPE: crate::scalar::Dtype = crate::scalar::Dtype::F32;

    fn to_f64(self) -> f64 {
        self as f64
    }
}

/// Label the connected components of `mask`'s foreground.
///
/// Two voxels share a component iff they are joined by a chain of neighbors
/// under `connectivity`. Empty foreground yields `count == 0`.
pub fn connected_components(
    mask: &LabelMask,
    foreground: Foreground,
    connectivity: Connectivity,
) -> ComponentSet {
    let desc = mask.grid.descriptor().clone();
    let n = desc.voxel_count();
    let fg: Vec<bool> = match foreground {
        Foreground::AnyNonzero => mask.grid.nonzero_mask(),
        Foreground::Label(l) => (0..n).map(|i| mask.grid.label_at(i) == l).collect(),
    };
    components_of_field(&fg, &desc, connectivity)
}

/// Component labeling over a raw boolean field on a grid.
pub fn components_of_field(
    fg: &[bool],
    desc: &super::grid::GridDescriptor,
    connectivity: Connectivity,
) -> ComponentSet {
    let dims = desc.dims;
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let offsets = connectivity.offsets();
    let mut provisional = vec![0u32; fg.len()];
    let mut raw: Vec<(usize, [usize; 3], [usize; 3], [f64; 3])> = Vec::new();

    let mut queue = VecDeque::new();
    for start in 0..fg.len() {
        if !fg[start] || provisional[start] != 0 {
            continue;
        }
        let label = raw.len() as u32 + 1;
        provisional[start] = label;
        queue.push_back(start);
        let mut count = 0usize;
        let mut bb_min = [usize::MAX; 3];
        let mut bb_max = [0usize; 3];
        let mut idx_sum = [0f64; 3];
        while let Some(i) = queue.pop_front() {
            let x = i % nx;
            let y = (i / nx) % ny;
            let z = i / (nx * ny);
            count += 1;
            let coords = [x, y, z];
            for a in 0..3 {
                bb_min[a] = bb_min[a].min(coords[a]);
                bb_max[a] = bb_max[a].max(coords[a]);
                idx_sum[a] += coords[a] as f64;
            }
            for off in &offsets {
                let jx = x as isize + off[0];
                let jy = y as isize + off[1];
                let jz = z as isize + off[2];
                if jx < 0 || jy < 0 || jz < 0 {
                    continue;
                }
                let (jx, jy, jz) = (jx as usize, jy as usize, jz as usize);
                if jx >= nx || jy >= ny || jz >= nz {
                    continue;
                }
                let j = jx + nx * (jy + ny * jz);
                if fg[j] && provisional[j] == 0 {
                    provisional[j] = label;
                    queue.push_back(j);
                }
            }
        }
        let mean_idx = [
            idx_sum[0] / count as f64,
            idx_sum[1] / count as f64,
            idx_sum[2] / count as f64,
        ];
        // The affine is linear, so the mean of world positions equals the
        // world position of the mean index.
        let centroid = desc.index_to_world(mean_idx);
        raw.push((count, bb_min, bb_max, centroid));
    }

    // Deterministic ids: descending voxel count, ties by lexicographic centroid.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        raw[b].0.cmp(&raw[a].0).then_with(|| {
            raw[a]
                .3
                .partial_cmp(&raw[b].3)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut remap = vec![0u32; raw.len() + 1];
    let mut components = Vec::with_capacity(raw.len());
    for (new_id0, &old) in order.iter().enumerate() {
        remap[old + 1] = new_id0 as u32 + 1;
        let (count, bb_min, bb_max, centroid) = raw[old];
        components.push(ComponentInfo {
            id: new_id0 as u32 + 1,
            voxel_count: count,
            bbox_min: bb_min,
            bbox_max: bb_max,
            centroid_mm: centroid,
        });
    }
    let data: Vec<u32> = provisional.iter().map(|&p| remap[p as usize]).collect();
    let labeling = Volume::from_parts(desc.clone(), data).expect("same grid");
    ComponentSet {
        labeling,
        count: components.len(),
        connectivity,
        components,
    }
}
