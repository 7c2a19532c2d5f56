//! Brute-force measurement oracle over ground truth.
//!
//! Expected answers are computed here, directly on the ground-truth masks and
//! synthesized intensities, bypassing the toolbox entirely: connected
//! components by an independent depth-first fill, IoU by direct voxel-set
//! arithmetic, and matching by exhaustive optimal pairing.

use std::collections::BTreeMap;

use crate::toolbox::env::Modality;
use crate::toolbox::ground_truth::GroundTruth;
use crate::toolbox::vocab::LOBES;
use crate::volume::grid::{GridDescriptor, Volume};

use super::phantom::{modality_volume_canonical, PhantomSpec};

/// One lesion instance as the oracle sees it.
#[derive(Debug, Clone)]
pub struct OracleLesion {
    pub id: u32,
    pub voxels: Vec<usize>,
    pub voxel_count: usize,
    pub volume_mm3: f64,
    pub centroid_mm: [f64; 3],
    pub bbox_min: [usize; 3],
    pub bbox_max: [usize; 3],
}

/// Depth-first 26-connected fill, independent of the toolbox labeling path.
fn flood_fill_26(fg: &[bool], dims: [usize; 3]) -> Vec<Vec<usize>> {
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let mut seen = vec![false; fg.len()];
    let mut groups = Vec::new();
    for start in 0..fg.len() {
        if !fg[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        seen[start] = true;
        let mut group = Vec::new();
        while let Some(i) = stack.pop() {
            group.push(i);
            let x = (i % nx) as isize;
            let y = ((i / nx) % ny) as isize;
            let z = (i / (nx * ny)) as isize;
            for dz in -1..=1isize {
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        if dx == 0 && dy == 0 && dz == 0 {
                            continue;
                        }
                        let (jx, jy, jz) = (x + dx, y + dy, z + dz);
                        if jx < 0
                            || jy < 0
                            || jz < 0
                            || jx >= nx as isize
                            || jy >= ny as isize
                            || jz >= nz as isize
                        {
                            continue;
                        }
                        let j = jx as usize + nx * (jy as usize + ny * jz as usize);
                        if fg[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        groups.push(group);
    }
    groups
}

fn lesion_stats(group: &[usize], grid: &GridDescriptor) -> OracleLesion {
    let nx = grid.dims[0];
    let ny = grid.dims[1];
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    let mut bb_min = [usize::MAX; 3];
    let mut bb_max = [0usize; 3];
    let mut idx_sum = [0.0f64; 3];
    for &i in &sorted {
        let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
        for a in 0..3 {
            bb_min[a] = bb_min[a].min(c[a]);
            bb_max[a] = bb_max[a].max(c[a]);
            idx_sum[a] += c[a] as f64;
        }
    }
    let count = sorted.len();
    let centroid = grid.index_to_world([
        idx_sum[0] / count as f64,
        idx_sum[1] / count as f64,
        idx_sum[2] / count as f64,
    ]);
    OracleLesion {
        id: 0,
        voxels: sorted,
        voxel_count: count,
        volume_mm3: count as f64 * grid.voxel_volume_mm3(),
        centroid_mm: centroid,
        bbox_min: bb_min,
        bbox_max: bb_max,
    }
}

/// Lesion instances of a timepoint, numbered by descending size with
/// lexicographic-centroid ties — the same numbering contract the tools use,
/// recomputed independently.
pub fn lesions_at(gt: &GroundTruth, tp: usize) -> Vec<OracleLesion> {
    let vol = &gt.lesion_instances[tp];
    let fg: Vec<bool> = vol.data().iter().map(|&v| v != 0).collect();
    let groups = flood_fill_26(&fg, vol.dims());
    let mut lesions: Vec<OracleLesion> = groups
        .iter()
        .map(|g| lesion_stats(g, vol.descriptor()))
        .collect();
    lesions.sort_by(|a, b| {
        b.voxel_count.cmp(&a.voxel_count).then_with(|| {
            a.centroid_mm
                .partial_cmp(&b.centroid_mm)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    for (i, lesion) in lesions.iter_mut().enumerate() {
        lesion.id = i as u32 + 1;
    }
    lesions
}

pub fn total_volume_mm3(lesions: &[OracleLesion]) -> f64 {
    lesions.iter().map(|l| l.volume_mm3).sum()
}

/// IoU between two voxel index sets (sorted), by direct set arithmetic.
pub fn iou_of_sets(a: &[usize], b: &[usize]) -> f64 {
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Optimal longitudinal pairing by exhaustive search: the injection between
/// timepoint instances maximizing total IoU, keeping only pairs at or above
/// the threshold.
pub fn optimal_matching(
    t0: &[OracleLesion],
    t1: &[OracleLesion],
    threshold: f64,
) -> Vec<(u32, u32, f64)> {
    let mut iou = vec![vec![0.0f64; t1.len()]; t0.len()];
    for (i, a) in t0.iter().enumerate() {
        for (j, b) in t1.iter().enumerate() {
            iou[i][j] = iou_of_sets(&a.voxels, &b.voxels);
        }
    }
    let mut best: Vec<(usize, usize)> = Vec::new();
    let mut best_score = -1.0f64;
    let mut assignment: Vec<(usize, usize)> = Vec::new();
    fn recurse(
        i: usize,
        t0_len: usize,
        t1_used: &mut Vec<bool>,
        iou: &[Vec<f64>],
        threshold: f64,
        assignment: &mut Vec<(usize, usize)>,
        best: &mut Vec<(usize, usize)>,
        best_score: &mut f64,
    ) {
        if i == t0_len {
            let score: f64 = assignment.iter().map(|&(a, b)| iou[a][b]).sum();
            if score > *best_score + 1e-15 {
                *best_score = score;
                *best = assignment.clone();
            }
            return;
        }
        // Leave instance i unmatched.
        recurse(i + 1, t0_len, t1_used, iou, threshold, assignment, best, best_score);
        for j in 0..t1_used.len() {
            if !t1_used[j] && iou[i][j] >= threshold && iou[i][j] > 0.0 {
                t1_used[j] = true;
                assignment.push((i, j));
                recurse(i + 1, t0_len, t1_used, iou, threshold, assignment, best, best_score);
                assignment.pop();
                t1_used[j] = false;
            }
        }
    }
    let mut used = vec![false; t1.len()];
    recurse(
        0,
        t0.len(),
        &mut used,
        &iou,
        threshold,
        &mut assignment,
        &mut best,
        &mut best_score,
    );
    let mut pairs: Vec<(u32, u32, f64)> = best
        .into_iter()
        .map(|(i, j)| (t0[i].id, t1[j].id, iou[i][j]))
        .collect();
    pairs.sort_by_key(|p| p.0);
    pairs
}

/// Majority lobe of a lesion, by the fixed fractional partition.
pub fn lobe_of(gt: &GroundTruth, lesion: &OracleLesion) -> (String, f64) {
    let dims = gt.brain_mask.dims();
    let mut overlap = [0usize; 6];
    for &i in &lesion.voxels {
        let x = i % dims[0];
        let y = (i / dims[0]) % dims[1];
        let z = i / (dims[0] * dims[1]);
        overlap[gt.lobe_id(x, y, z) as usize - 1] += 1;
    }
    let (best_idx, &best) = overlap
        .iter()
        .enumerate()
        .max_by_key(|(idx, &n)| (n, usize::MAX - idx))
        .expect("six lobes");
    (
        LOBES[best_idx].to_string(),
        best as f64 / lesion.voxel_count as f64,
    )
}

/// Exposed-face surface area, recomputed directly from the voxel set.
pub fn surface_area_mm2(lesion: &OracleLesion, grid: &GridDescriptor) -> f64 {
    let [nx, ny, nz] = grid.dims;
    let member: std::collections::BTreeSet<usize> = lesion.voxels.iter().copied().collect();
    let [sx, sy, sz] = grid.spacing;
    let face = [sy * sz, sx * sz, sx * sy];
    let mut area = 0.0;
    for &i in &lesion.voxels {
        let x = (i % nx) as isize;
        let y = ((i / nx) % ny) as isize;
        let z = (i / (nx * ny)) as isize;
        let neighbors: [(isize, isize, isize, usize); 6] = [
            (-1, 0, 0, 0),
            (1, 0, 0, 0),
            (0, -1, 0, 1),
            (0, 1, 0, 1),
            (0, 0, -1, 2),
            (0, 0, 1, 2),
        ];
        for (dx, dy, dz, axis) in neighbors {
            let (jx, jy, jz) = (x + dx, y + dy, z + dz);
            let outside = jx < 0
                || jy < 0
                || jz < 0
                || jx >= nx as isize
                || jy >= ny as isize
                || jz >= nz as isize
                || !member.contains(&(jx as usize + nx * (jy as usize + ny * jz as usize)));
            if outside {
                area += face[axis];
            }
        }
    }
    area
}

pub fn sphericity(volume_mm3: f64, surface_mm2: f64) -> f64 {
    if surface_mm2 <= 0.0 {
        return 0.0;
    }
    std::f64::consts::PI.powf(1.0 / 3.0) * (6.0 * volume_mm3).powf(2.0 / 3.0) / surface_mm2
}

pub fn elongation(lesion: &OracleLesion, spacing: [f64; 3]) -> f64 {
    let mut extents: Vec<f64> = (0..3)
        .map(|a| (lesion.bbox_max[a] - lesion.bbox_min[a] + 1) as f64 * spacing[a])
        .collect();
    extents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    extents[1] / extents[0]
}

/// Mean and max intensity of one lesion in one synthesized modality.
pub fn intensity_stats(
    spec: &PhantomSpec,
    gt: &GroundTruth,
    tp: usize,
    modality: Modality,
    lesion: &OracleLesion,
) -> (f64, f64) {
    let vol: Volume<f32> = modality_volume_canonical(spec, gt, tp, modality);
    let mut sum = 0.0f64;
    let mut max = f64::NEG_INFINITY;
    for &i in &lesion.voxels {
        let v = f64::from(vol.data()[i]);
        sum += v;
        if v > max {
            max = v;
        }
    }
    (sum / lesion.voxel_count as f64, max)
}

/// Per-region anatomy volumes in mm^3 (all 32 regions, zero-filled).
pub fn anatomy_volumes(gt: &GroundTruth) -> BTreeMap<i64, f64> {
    let voxvol = gt.atlas_grid().voxel_volume_mm3();
    let mut counts: BTreeMap<i64, usize> = (1..=32).map(|k| (k, 0)).collect();
    let n = gt.anatomy.grid.descriptor().voxel_count();
    for i in 0..n {
        let lab = gt.anatomy.grid.label_at(i);
        if lab != 0 {
            *counts.entry(lab).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 * voxvol))
        .collect()
}
