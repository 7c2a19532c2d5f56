//! Suite generation: a seeded phantom case pool plus benchmark items drawn
//! across the three task tiers. Fully deterministic from (config, seed).

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use crate::backends::scripted::plan_len;
use crate::kernel::agents::Topology;
use crate::toolbox::atlas;
use crate::toolbox::env::Modality;
use crate::toolbox::ground_truth::GroundTruth;
use crate::toolbox::vocab::Pathology;
use crate::volume::affine::SignedPermutation;

use super::dataset::{
    BenchmarkItem, CaseRecord, Dataset, FileEntry, Manifest, SCHEMA_VERSION,
};
use super::oracle;
use super::phantom::{brain_shape, build_ground_truth, write_case_volumes, LesionSpec, PhantomSpec};
use super::templates::{build_item, TemplateKind, TemplateSlots};
use super::BenchError;

/// Item counts per tier. The default mirrors the released benchmark's query
/// profile: 43 / 565 / 267.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SuiteConfig {
    pub tier1: usize,
    pub tier2: usize,
    pub tier3: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            tier1: 43,
            tier2: 565,
            tier3: 267,
            seed: 20240901,
        }
    }
}

impl SuiteConfig {
    pub fn tiny(seed: u64) -> Self {
        SuiteConfig {
            tier1: 1,
            tier2: 1,
            tier3: 1,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.tier1 + self.tier2 + self.tier3
    }
}

struct CasePool {
    specs: Vec<PhantomSpec>,
    /// Ground truths built on demand; a pure function of each spec.
    truths: std::cell::RefCell<BTreeMap<usize, std::rc::Rc<GroundTruth>>>,
}

impl CasePool {
    fn truth(&self, idx: usize) -> Result<std::rc::Rc<GroundTruth>, BenchError> {
        if let Some(gt) = self.truths.borrow().get(&idx) {
            return Ok(gt.clone());
        }
        let gt = std::rc::Rc::new(build_ground_truth(&self.specs[idx])?);
        self.truths.borrow_mut().insert(idx, gt.clone());
        Ok(gt)
    }
}

fn sample_lesions(
    rng: &mut ChaCha8Rng,
    pathology: Pathology,
    timepoints: usize,
) -> Vec<LesionSpec> {
    let grid = atlas::grid_of(pathology.atlas());
    let brain = brain_shape(&grid);
    let (count, r_lo, r_hi) = match pathology {
        Pathology::Glioma => (1, 3.5, 5.5),
        Pathology::PostopGlioma => (1, 3.0, 5.0),
        Pathology::Meningioma => (1, 2.5, 4.5),
        Pathology::Metastasis => (rng.gen_range(2..=5usize), 1.6, 2.6),
    };
    const MAX_SCALE: f64 = 1.3;
    let mut lesions: Vec<LesionSpec> = Vec::new();
    let mut guard = 0;
    while lesions.len() < count {
        guard += 1;
        assert!(guard < 10_000, "lesion sampling should terminate quickly");
        let radii = [
            rng.gen_range(r_lo..r_hi),
            rng.gen_range(r_lo..r_hi),
            rng.gen_range(r_lo..r_hi),
        ];
        let center = std::array::from_fn(|a| {
            brain.center[a] + rng.gen_range(-0.55..0.55) * brain.radii[a]
        });
        // Containment bound: the farthest lesion-surface point stays inside
        // the brain ellipsoid even at the maximum timepoint scale.
        let center_rho: f64 = (0..3)
            .map(|a| {
                let d = (center[a] - brain.center[a]) / brain.radii[a];
                d * d
            })
            .sum::<f64>()
            .sqrt();
        let reach = (0..3)
            .map(|a| radii[a] * MAX_SCALE / brain.radii[a])
            .fold(0.0f64, f64::max);
        if center_rho + reach > 0.92 {
            continue;
        }
        // Disjointness: multi-lesion cases keep instances far apart so
        // longitudinal IoU is unambiguous (identical lesions overlap heavily,
        // distinct ones not at all).
        let too_close = lesions.iter().any(|other| {
            let dist: f64 = (0..3)
                .map(|a| (center[a] - other.center_mm[a]).powi(2))
                .sum::<f64>()
                .sqrt();
            let r_a = radii.iter().cloned().fold(0.0f64, f64::max);
            let r_b = other.radii_mm.iter().cloned().fold(0.0f64, f64::max);
            dist < (r_a + r_b) * MAX_SCALE + 3.0
        });
        if too_close {
            continue;
        }
        let scales = sample_scales(rng, timepoints, lesions.is_empty());
        lesions.push(LesionSpec {
            center_mm: center,
            radii_mm: radii,
            scales,
        });
    }
    lesions
}

/// Per-timepoint scale factors. The first lesion of a case always persists
/// across timepoints; later lesions may appear or resolve.
fn sample_scales(rng: &mut ChaCha8Rng, timepoints: usize, is_primary: bool) -> Vec<f64> {
    if timepoints == 1 {
        return vec![1.0];
    }
    let change = [0.75, 0.85, 1.0, 1.1, 1.3][rng.gen_range(0..5)];
    if timepoints == 3 {
        let change2 = [0.8, 1.0, 1.25][rng.gen_range(0..3)];
        return vec![1.0, change, (change * change2).clamp(0.6, 1.3)];
    }
    if is_primary {
        return vec![1.0, change];
    }
    match rng.gen_range(0..4u8) {
        0 => vec![0.0, 1.0],    // new at t1
        1 => vec![1.0, 0.0],    // resolved at t1
        _ => vec![1.0, change], // persisting
    }
}

fn native_placement(rng: &mut ChaCha8Rng) -> (SignedPermutation, [f64; 3]) {
    let perms = [
        SignedPermutation::identity(),
        SignedPermutation {
            axis: [1, 0, 2],
            sign: [1, -1, 1],
        },
        SignedPermutation {
            axis: [0, 2, 1],
            sign: [-1, 1, 1],
        },
    ];
    let perm = perms[rng.gen_range(0..perms.len())];
    let offset = std::array::from_fn(|_| rng.gen_range(-6i32..=6) as f64);
    (perm, offset)
}

fn build_pool(config: &SuiteConfig) -> Result<CasePool, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut specs = Vec::new();

    // Single-timepoint pool.
    let singles: [(Pathology, usize); 4] = [
        (Pathology::Glioma, 18),
        (Pathology::Metastasis, 14),
        (Pathology::Meningioma, 8),
        (Pathology::PostopGlioma, 8),
    ];
    for (pathology, count) in singles {
        for k in 0..count {
            let preprocessed = k % 5 != 4;
            specs.push((pathology, 1, preprocessed));
        }
    }
    // Longitudinal pool: two timepoints, then a few three-timepoint cases.
    let pairs: [(Pathology, usize); 3] = [
        (Pathology::Glioma, 8),
        (Pathology::Metastasis, 8),
        (Pathology::PostopGlioma, 4),
    ];
    for (pathology, count) in pairs {
        for k in 0..count {
            let preprocessed = k % 4 != 3;
            specs.push((pathology, 2, preprocessed));
        }
    }
    for pathology in [Pathology::Glioma, Pathology::Glioma, Pathology::Metastasis, Pathology::Metastasis]
    {
        specs.push((pathology, 3, true));
    }

    let mut pool = CasePool {
        specs: Vec::new(),
        truths: Default::default(),
    };
    for (idx, (pathology, timepoints, preprocessed)) in specs.into_iter().enumerate() {
        let lesions = sample_lesions(&mut rng, pathology, timepoints);
        let (perm, offset) = native_placement(&mut rng);
        let spec = PhantomSpec {
            case_id: format!("case-{idx:03}"),
            pathology,
            timepoints,
            preprocessed,
            seed: config.seed ^ (idx as u64 + 1).wrapping_mul(0x9e37_79b9),
            lesions,
            native_permutation: perm,
            native_offset_mm: offset,
        };
        pool.specs.push(spec);
    }
    Ok(pool)
}

/// Per-(tier, topology) mean expected plan lengths, reported with datasets.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SuiteStats {
    pub items_per_tier: [usize; 3],
    pub mean_plan_len: BTreeMap<String, [f64; 3]>,
}

pub fn suite_stats(dataset: &Dataset) -> SuiteStats {
    let mut counts = [0usize; 3];
    let mut sums: BTreeMap<String, [f64; 3]> = Topology::ALL
        .iter()
        .map(|t| (t.as_str().to_string(), [0.0; 3]))
        .collect();
    for item in &dataset.items {
        let tier = item.tier as usize - 1;
        counts[tier] += 1;
        for topology in Topology::ALL {
            let plan = item.plan(topology).expect("plans exist for all topologies");
            sums.get_mut(topology.as_str()).unwrap()[tier] += plan_len(&plan.steps) as f64;
        }
    }
    let mean = sums
        .into_iter()
        .map(|(k, v)| {
            (
                k,
                std::array::from_fn(|i| if counts[i] == 0 { 0.0 } else { v[i] / counts[i] as f64 }),
            )
        })
        .collect();
    SuiteStats {
        items_per_tier: counts,
        mean_plan_len: mean,
    }
}

/// Generate the dataset: phantom files on disk plus the benchmark records.
pub fn generate_suite(config: &SuiteConfig, dataset_dir: &Path) -> Result<Dataset, BenchError> {
    let pool = build_pool(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_17e5);

    let singles: Vec<usize> = (0..pool.specs.len())
        .filter(|&i| pool.specs[i].timepoints == 1)
        .collect();
    let singles_preprocessed: Vec<usize> = singles
        .iter()
        .copied()
        .filter(|&i| pool.specs[i].preprocessed)
        .collect();
    let doubles: Vec<usize> = (0..pool.specs.len())
        .filter(|&i| pool.specs[i].timepoints == 2)
        .collect();
    let triples: Vec<usize> = (0..pool.specs.len())
        .filter(|&i| pool.specs[i].timepoints == 3)
        .collect();

    let modality_cycle = [Modality::T1ce, Modality::Flair, Modality::T2, Modality::T1];
    let mut items = Vec::new();
    let mut used_cases: std::collections::BTreeSet<usize> = Default::default();

    let make = |template: TemplateKind,
                case_idx: usize,
                item_no: usize,
                slots: TemplateSlots,
                used: &mut std::collections::BTreeSet<usize>|
     -> Result<BenchmarkItem, BenchError> {
        used.insert(case_idx);
        let gt = pool.truth(case_idx)?;
        build_item(
            template,
            &pool.specs[case_idx],
            &gt,
            &format!("t{}-{item_no:04}", template.tier()),
            &slots,
        )
    };

    for i in 0..config.tier1 {
        let template = TemplateKind::TIER1[i % 2];
        let (case_idx, modality) = match template {
            TemplateKind::SegPathology => (
                singles_preprocessed[i / 2 % singles_preprocessed.len()],
                Modality::T1,
            ),
            _ => (
                singles[(i / 2 + 7) % singles.len()],
                modality_cycle[i % 4],
            ),
        };
        let slots = TemplateSlots {
            timepoints: vec![0],
            lesion: 1,
            modality,
        };
        items.push(make(template, case_idx, i + 1, slots, &mut used_cases)?);
    }

    for i in 0..config.tier2 {
        let template = TemplateKind::TIER2[i % TemplateKind::TIER2.len()];
        let case_idx = singles[i % singles.len()];
        // Lesion instances are disjoint by construction, so the count at a
        // timepoint is just the number of present lesion specs.
        let lesion_count = pool.specs[case_idx]
            .lesions
            .iter()
            .filter(|l| l.scales[0] > 0.0)
            .count()
            .max(1) as u32;
        let slots = TemplateSlots {
            timepoints: vec![0],
            lesion: 1 + (rng.gen_range(0..lesion_count)),
            modality: modality_cycle[i % 4],
        };
        items.push(make(template, case_idx, i + 1, slots, &mut used_cases)?);
    }

    for i in 0..config.tier3 {
        let template = TemplateKind::TIER3[i % TemplateKind::TIER3.len()];
        let (template, case_idx, tps) = if template == TemplateKind::Trajectory {
            (template, triples[i / 5 % triples.len()], vec![0, 1, 2])
        } else {
            (template, doubles[i % doubles.len()], vec![0, 1])
        };
        let slots = TemplateSlots {
            timepoints: tps,
            lesion: 1,
            modality: modality_cycle[i % 4],
        };
        items.push(make(template, case_idx, i + 1, slots, &mut used_cases)?);
    }

    let mut cases = Vec::new();
    for idx in used_cases {
        let spec = &pool.specs[idx];
        let gt = pool.truth(idx)?;
        let files = write_case_volumes(spec, &gt, dataset_dir)?;
        let file_entries = files
            .into_iter()
            .map(|((tp, modality), rel_path)| FileEntry {
                rel_path,
                timepoint: tp,
                modality,
            })
            .collect();
        cases.push(CaseRecord {
            record: "case".into(),
            case_id: spec.case_id.clone(),
            pathology: spec.pathology,
            preprocessed: spec.preprocessed,
            timepoints: spec.timepoints,
            spec: spec.clone(),
            files: file_entries,
            extra: Map::new(),
        });
    }

    let dataset = Dataset {
        manifest: Manifest {
            record: "manifest".into(),
            schema_version: SCHEMA_VERSION,
            seed: config.seed,
            case_count: cases.len(),
            item_count: items.len(),
            extra: Map::new(),
        },
        cases,
        items,
    };
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::dataset::{load_dataset, save_dataset};

    #[test]
    fn tiny_profile_generates_three_items() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_suite(&SuiteConfig::tiny(7), dir.path()).unwrap();
        assert_eq!(ds.items.len(), 3);
        let stats = suite_stats(&ds);
        assert_eq!(stats.items_per_tier, [1, 1, 1]);
        for item in &ds.items {
            item.validate().unwrap();
            assert_eq!(item.expected_plans.len(), 4);
        }
        // Referenced volumes exist on disk.
        for case in &ds.cases {
            for f in &case.files {
                assert!(dir.path().join(&f.rel_path).exists());
            }
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = generate_suite(&SuiteConfig::tiny(123), dir_a.path()).unwrap();
        let b = generate_suite(&SuiteConfig::tiny(123), dir_b.path()).unwrap();
        let pa = dir_a.path().join("dataset.jsonl");
        let pb = dir_b.path().join("dataset.jsonl");
        save_dataset(&a, &pa).unwrap();
        save_dataset(&b, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        let reload = load_dataset(&pa).unwrap();
        assert_eq!(reload, a);
    }

    #[test]
    fn different_seeds_differ() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let a = generate_suite(&SuiteConfig::tiny(1), dir_a.path()).unwrap();
        let b = generate_suite(&SuiteConfig::tiny(2), dir_b.path()).unwrap();
        assert_ne!(a.items[1].expected_answer, b.items[1].expected_answer);
    }
}
