//! Boundary noise for simulated segmentations: erode or dilate each lesion
//! instance by at most one voxel, with a seeded choice. Erosion is skipped
//! when it would empty or split an instance, so lesion topology is preserved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::volume::components::{components_of_field, Connectivity};
use crate::volume::grid::Volume;

const FACE_NEIGHBORS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Apply boundary noise to an instance labeling. `level` in [0, 1] is the
/// probability that an instance is perturbed at all; 0 disables noise.
/// Dilation stays inside `brain`, never merges instances, and erosion keeps
/// each instance nonempty and connected.
pub fn apply_boundary_noise(
    instances: &Volume<u8>,
    brain: &Volume<u8>,
    level: f64,
    seed: u64,
) -> Volume<u8> {
    if level <= 0.0 {
        return instances.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = instances.clone();
    let max_id = instances.data().iter().copied().max().unwrap_or(0);
    for id in 1..=max_id {
        let perturb = rng.gen_bool(level.clamp(0.0, 1.0));
        let dilate = rng.gen_bool(0.5);
        if !perturb {
            continue;
        }
        if dilate {
            dilate_instance(&mut out, brain, id);
        } else if !erode_instance(&mut out, id) {
            dilate_instance(&mut out, brain, id);
        }
    }
    out
}

fn dilate_instance(vol: &mut Volume<u8>, brain: &Volume<u8>, id: u8) {
    let dims = vol.dims();
    let mut additions = Vec::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                if vol.get(x, y, z) != 0 {
                    continue;
                }
                if brain.get(x, y, z) == 0 {
                    continue;
                }
                let touches = FACE_NEIGHBORS.iter().any(|d| {
                    neighbor(dims, x, y, z, *d).is_some_and(|(nx, ny, nz)| {
                        vol.get(nx, ny, nz) == id
                    })
                });
                let touches_other = FACE_NEIGHBORS.iter().any(|d| {
                    neighbor(dims, x, y, z, *d).is_some_and(|(nx, ny, nz)| {
                        let v = vol.get(nx, ny, nz);
                        v != 0 && v != id
                    })
                });
                if touches && !touches_other {
                    additions.push((x, y, z));
                }
            }
        }
    }
    for (x, y, z) in additions {
        vol.set(x, y, z, id);
    }
}

fn erode_instance(vol: &mut Volume<u8>, id: u8) -> bool {
    let dims = vol.dims();
    let mut keep: Vec<bool> = Vec::with_capacity(vol.data().len());
    let mut removed_any = false;
    for (i, &v) in vol.data().iter().enumerate() {
        if v != id {
            keep.push(false);
            continue;
        }
        let [x, y, z] = vol.coords(i);
        let boundary = FACE_NEIGHBORS.iter().any(|d| {
            match neighbor(dims, x, y, z, *d) {
                Some((nx, ny, nz)) => vol.get(nx, ny, nz) != id,
                None => true,
            }
        });
        if boundary {
            removed_any = true;
        }
        keep.push(!boundary);
    }
    if !removed_any {
        return false;
    }
    if keep.iter().filter(|&&k| k).count() == 0 {
        return false;
    }
    let set = components_of_field(&keep, vol.descriptor(), Connectivity::TwentySix);
    if set.count != 1 {
        return false;
    }
    for (i, k) in keep.iter().enumerate() {
        if vol.data()[i] == id && !k {
            vol.data_mut()[i] = 0;
        }
    }
    true
}

fn neighbor(
    dims: [usize; 3],
    x: usize,
    y: usize,
    z: usize,
    d: [isize; 3],
) -> Option<(usize, usize, usize)> {
    let nx = x as isize + d[0];
    let ny = y as isize + d[1];
    let nz = z as isize + d[2];
    if nx < 0 || ny < 0 || nz < 0 {
        return None;
    }
    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
    if nx >= dims[0] || ny >= dims[1] || nz >= dims[2] {
        return None;
    }
    Some((nx, ny, nz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Volume<u8>, Volume<u8>) {
        let mut inst = Volume::<u8>::zeros([12, 12, 12], [1.0; 3], [0.0; 3]);
        for z in 4..7 {
            for y in 4..7 {
                for x in 4..7 {
                    inst.set(x, y, z, 1);
                }
            }
        }
        let mut brain = Volume::<u8>::zeros([12, 12, 12], [1.0; 3], [0.0; 3]);
        for z in 1..11 {
            for y in 1..11 {
                for x in 1..11 {
                    brain.set(x, y, z, 1);
                }
            }
        }
        (inst, brain)
    }

    #[test]
    fn zero_level_is_identity() {
        let (inst, brain) = setup();
        assert_eq!(apply_boundary_noise(&inst, &brain, 0.0, 7), inst);
    }

    #[test]
    fn noise_is_deterministic_and_topology_preserving() {
        let (inst, brain) = setup();
        let a = apply_boundary_noise(&inst, &brain, 1.0, 42);
        let b = apply_boundary_noise(&inst, &brain, 1.0, 42);
        assert_eq!(a, b);
        assert_ne!(a, inst);
        let fg: Vec<bool> = a.data().iter().map(|&v| v == 1).collect();
        let set = components_of_field(&fg, a.descriptor(), Connectivity::TwentySix);
        assert_eq!(set.count, 1);
    }

    #[test]
    fn dilation_respects_brain_mask() {
        let (mut inst, brain) = setup();
        // Put the instance flush against the brain boundary.
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    inst.set(x, y, z, 2);
                }
            }
        }
        let out = apply_boundary_noise(&inst, &brain, 1.0, 1);
        for (i, &v) in out.data().iter().enumerate() {
            if v != 0 {
                assert_eq!(brain.data()[i], 1, "noise escaped the brain mask");
            }
        }
    }
}
