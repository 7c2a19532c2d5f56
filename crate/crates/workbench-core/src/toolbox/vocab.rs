//! Fixed vocabularies: pathologies, segmentation models, atlas spaces,
//! anatomical region names, the synthetic lobe partition, and tumor
//! sub-region labels.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Case pathology of a phantom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pathology {
    Glioma,
    PostopGlioma,
    Metastasis,
    Meningioma,
}

impl Pathology {
    pub const ALL: [Pathology; 4] = [
        Pathology::Glioma,
        Pathology::PostopGlioma,
        Pathology::Metastasis,
        Pathology::Meningioma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pathology::Glioma => "glioma",
            Pathology::PostopGlioma => "postop-glioma",
            Pathology::Metastasis => "metastasis",
            Pathology::Meningioma => "meningioma",
        }
    }

    /// The segmentation model that matches this pathology.
    pub fn model(self) -> SegModel {
        match self {
            Pathology::Glioma => SegModel::Glioma,
            Pathology::PostopGlioma => SegModel::PostopGlioma,
            Pathology::Metastasis => SegModel::Metastasis,
            Pathology::Meningioma => SegModel::Meningioma,
        }
    }

    /// The atlas space this pathology's pipeline works in.
    pub fn atlas(self) -> AtlasSpace {
        match self {
            Pathology::PostopGlioma => AtlasSpace::Mni152,
            _ => AtlasSpace::Sri24,
        }
    }

    /// Human phrase used in question templates.
    pub fn phrase(self) -> &'static str {
        match self {
            Pathology::Glioma => "glioma",
            Pathology::PostopGlioma => "post-operative glioma",
            Pathology::Metastasis => "brain metastases",
            Pathology::Meningioma => "meningioma",
        }
    }
}

impl std::fmt::Display for Pathology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Pathology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "glioma" => Ok(Pathology::Glioma),
            "postop-glioma" => Ok(Pathology::PostopGlioma),
            "metastasis" => Ok(Pathology::Metastasis),
            "meningioma" => Ok(Pathology::Meningioma),
            other => Err(format!("unknown pathology '{other}'")),
        }
    }
}

/// Pathology segmentation models the simulated tool accepts. Pediatric is
/// registered but no phantom templates produce matching cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegModel {
    Glioma,
    PostopGlioma,
    Metastasis,
    Meningioma,
    Pediatric,
}

impl SegModel {
    pub const ALL: [SegModel; 5] = [
        SegModel::Glioma,
        SegModel::PostopGlioma,
        SegModel::Metastasis,
        SegModel::Meningioma,
        SegModel::Pediatric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SegModel::Glioma => "glioma",
            SegModel::PostopGlioma => "postop-glioma",
            SegModel::Metastasis => "metastasis",
            SegModel::Meningioma => "meningioma",
            SegModel::Pediatric => "pediatric",
        }
    }

    pub fn parse(s: &str) -> Option<SegModel> {
        SegModel::ALL.iter().copied().find(|m| m.name() == s)
    }

    /// Atlas space the model requires its inputs to be registered to.
    pub fn required_atlas(self) -> AtlasSpace {
        match self {
            SegModel::PostopGlioma => AtlasSpace::Mni152,
            _ => AtlasSpace::Sri24,
        }
    }

    /// Whether this model segments the given case pathology.
    pub fn matches(self, pathology: Pathology) -> bool {
        pathology.model() == self
    }

    /// Tumor sub-region vocabulary the model outputs.
    pub fn vocabulary(self) -> BTreeMap<i64, String> {
        let mut v = BTreeMap::new();
        v.insert(1, "necrotic core".to_string());
        v.insert(2, "edema".to_string());
        v.insert(3, "enhancing tumor".to_string());
        if self == SegModel::PostopGlioma {
            v.insert(4, "resection cavity".to_string());
        }
        v
    }
}

impl std::fmt::Display for SegModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference atlas grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtlasSpace {
    #[serde(rename = "SRI24")]
    Sri24,
    #[serde(rename = "MNI152")]
    Mni152,
}

impl AtlasSpace {
    pub fn name(self) -> &'static str {
        match self {
            AtlasSpace::Sri24 => "SRI24",
            AtlasSpace::Mni152 => "MNI152",
        }
    }

    pub fn parse(s: &str) -> Option<AtlasSpace> {
        match s {
            "SRI24" => Some(AtlasSpace::Sri24),
            "MNI152" => Some(AtlasSpace::Mni152),
            _ => None,
        }
    }
}

impl std::fmt::Display for AtlasSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The 32 anatomical region names the anatomy segmentation produces.
pub const ANATOMY_REGIONS: [&str; 32] = [
    "left cerebral white matter",
    "right cerebral white matter",
    "left cerebral cortex",
    "right cerebral cortex",
    "left lateral ventricle",
    "right lateral ventricle",
    "left inferior lateral ventricle",
    "right inferior lateral ventricle",
    "left cerebellum white matter",
    "right cerebellum white matter",
    "left cerebellum cortex",
    "right cerebellum cortex",
    "left thalamus",
    "right thalamus",
    "left caudate",
    "right caudate",
    "left putamen",
    "right putamen",
    "left pallidum",
    "right pallidum",
    "left hippocampus",
    "right hippocampus",
    "left amygdala",
    "right amygdala",
    "left accumbens area",
    "right accumbens area",
    "left ventral diencephalon",
    "right ventral diencephalon",
    "left insula",
    "right insula",
    "brain stem",
    "csf",
];

pub fn anatomy_vocabulary() -> BTreeMap<i64, String> {
    ANATOMY_REGIONS
        .iter()
        .enumerate()
        .map(|(i, name)| (i as i64 + 1, (*name).to_string()))
        .collect()
}

/// The six synthetic lobes: Left/Right x Frontal/Parietal/Temporal.
pub const LOBES: [&str; 6] = [
    "Left Frontal",
    "Right Frontal",
    "Left Parietal",
    "Right Parietal",
    "Left Temporal",
    "Right Temporal",
];

pub fn lobe_vocabulary() -> BTreeMap<i64, String> {
    LOBES
        .iter()
        .enumerate()
        .map(|(i, name)| (i as i64 + 1, (*name).to_string()))
        .collect()
}

/// Fractional y-planes splitting the brain box into frontal/parietal/temporal.
pub const LOBE_Y_SPLITS: [f64; 2] = [0.4, 0.7];

/// Lobe id (1..=6) of a fractional position inside the brain bounding box.
/// `fx`, `fy` are fractions in [0, 1] along x and y of the box.
pub fn lobe_of_fraction(fx: f64, fy: f64) -> i64 {
    let side = if fx < 0.5 { 0 } else { 1 }; // 0 = left, 1 = right
    let band = if fy < LOBE_Y_SPLITS[0] {
        0 // frontal
    } else if fy < LOBE_Y_SPLITS[1] {
        1 // parietal
    } else {
        2 // temporal
    };
    (band * 2 + side + 1) as i64
}
