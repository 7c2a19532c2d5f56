//! Wires the simulated tool suite into a kernel registry: one atomic tool per
//! operation, fourteen in total.

use crate::kernel::registry::{ParamKind, ParamSpec, ToolDescriptor, ToolRegistry};

use super::env::SimEnv;

fn p(name: &str, kind: ParamKind, required: bool, description: &str) -> ParamSpec {
    ParamSpec::new(name, kind, required, description)
}

/// Build the standard registry over a [`SimEnv`].
pub fn standard_registry() -> ToolRegistry<SimEnv> {
    let mut reg = ToolRegistry::new();
    let mut add = |descriptor: ToolDescriptor,
                   imp: fn(&mut SimEnv, &serde_json::Map<String, serde_json::Value>)
                       -> super::ToolResult| {
        reg.register(descriptor, imp)
            .expect("standard tool names are unique");
    };

    add(
        ToolDescriptor {
            name: "load_image".into(),
            description: "Load a scan from the case bundle into memory.".into(),
            params: vec![p("path", ParamKind::Text, true, "case-relative file path")],
            returns: "image handle, modality, timepoint, space".into(),
        },
        |env, args| env.tool_load_image(args),
    );
    add(
        ToolDescriptor {
            name: "skull_strip".into(),
            description: "Remove non-brain voxels from a scan.".into(),
            params: vec![p("image", ParamKind::Handle, true, "scan to strip")],
            returns: "stripped image handle and brain_volume_mm3".into(),
        },
        |env, args| env.tool_skull_strip(args),
    );
    add(
        ToolDescriptor {
            name: "register".into(),
            description: "Resample a scan onto an atlas template or another image's grid."
                .into(),
            params: vec![
                p("image", ParamKind::Handle, true, "scan to register"),
                p(
                    "target",
                    ParamKind::Text,
                    true,
                    "atlas:SRI24, atlas:MNI152, or an image handle id",
                ),
            ],
            returns: "registered image handle and its space".into(),
        },
        |env, args| env.tool_register(args),
    );
    add(
        ToolDescriptor {
            name: "resample".into(),
            description: "Resample a volume to a new voxel spacing.".into(),
            params: vec![
                p("image", ParamKind::Handle, true, "volume to resample"),
                p("spacing", ParamKind::Triple, true, "target spacing in mm"),
                p(
                    "interpolation",
                    ParamKind::Text,
                    false,
                    "nearest (default) or trilinear; labels always use nearest",
                ),
            ],
            returns: "resampled handle and output dims".into(),
        },
        |env, args| env.tool_resample(args),
    );
    add(
        ToolDescriptor {
            name: "verify_registration".into(),
            description:
                "Compare a scan's geometric header against an atlas template or another image."
                    .into(),
            params: vec![
                p("image", ParamKind::Handle, true, "scan to check"),
                p(
                    "reference",
                    ParamKind::Text,
                    true,
                    "atlas name or image handle id",
                ),
            ],
            returns: "equal flag and the list of mismatching fields".into(),
        },
        |env, args| env.tool_verify_registration(args),
    );
    add(
        ToolDescriptor {
            name: "segment_pathology".into(),
            description: "Run a pathology segmentation model over the four modalities. \
Inputs must be skull-stripped and registered to the model's atlas."
                .into(),
            params: vec![
                p("t1", ParamKind::Handle, true, "T1 image"),
                p("t1ce", ParamKind::Handle, true, "contrast-enhanced T1 image"),
                p("t2", ParamKind::Handle, true, "T2 image"),
                p("flair", ParamKind::Handle, true, "FLAIR image"),
                p(
                    "model",
                    ParamKind::Text,
                    true,
                    "glioma, postop-glioma, metastasis, meningioma, or pediatric",
                ),
            ],
            returns: "tumor mask handle, label vocabulary, output path".into(),
        },
        |env, args| env.tool_segment_pathology(args),
    );
    add(
        ToolDescriptor {
            name: "segment_anatomy".into(),
            description: "Segment 32 anatomical regions; works in native or atlas space."
                .into(),
            params: vec![p("image", ParamKind::Handle, true, "scan to segment")],
            returns: "anatomy mask handle plus a per-region volume table handle".into(),
        },
        |env, args| env.tool_segment_anatomy(args),
    );
    add(
        ToolDescriptor {
            name: "list_labels".into(),
            description: "Retrieve the label vocabulary for a scope on demand.".into(),
            params: vec![p(
                "scope",
                ParamKind::Text,
                true,
                "anatomy, lobes, or a segmentation model name",
            )],
            returns: "ordered id to name map".into(),
        },
        |env, args| env.tool_list_labels(args),
    );
    add(
        ToolDescriptor {
            name: "enumerate_lesions".into(),
            description: "Enumerate lesion instances (connected components) in a mask.".into(),
            params: vec![p("mask", ParamKind::Handle, true, "segmentation mask")],
            returns: "lesion count and per-lesion id, volume_mm3, centroid_mm".into(),
        },
        |env, args| env.tool_enumerate_lesions(args),
    );
    add(
        ToolDescriptor {
            name: "match_lesions".into(),
            description: "Match lesion instances across two timepoints by IoU.".into(),
            params: vec![
                p("mask_t0", ParamKind::Handle, true, "earlier mask"),
                p("mask_t1", ParamKind::Handle, true, "later mask"),
                p("threshold", ParamKind::Number, false, "minimum IoU (default 0.25)"),
            ],
            returns: "matched pairs with IoU, new ids, resolved ids (with centroids)".into(),
        },
        |env, args| env.tool_match_lesions(args),
    );
    add(
        ToolDescriptor {
            name: "lesion_geometry".into(),
            description: "Sub-volume and geometry of one lesion: volume, bounding box, centroid."
                .into(),
            params: vec![
                p("mask", ParamKind::Handle, true, "segmentation mask"),
                p("lesion_id", ParamKind::Id, true, "lesion instance id"),
            ],
            returns: "volume_mm3, centroid_mm, bbox".into(),
        },
        |env, args| env.tool_lesion_geometry(args),
    );
    add(
        ToolDescriptor {
            name: "lesion_features".into(),
            description: "Morphological and intensity features of one lesion.".into(),
            params: vec![
                p("mask", ParamKind::Handle, true, "segmentation mask"),
                p("image", ParamKind::Handle, true, "intensity image on the same grid"),
                p("lesion_id", ParamKind::Id, true, "lesion instance id"),
            ],
            returns: "geometry plus surface area, sphericity, elongation, intensity stats"
                .into(),
        },
        |env, args| env.tool_lesion_features(args),
    );
    add(
        ToolDescriptor {
            name: "localize_lesion".into(),
            description: "Locate a lesion in the lobe atlas (requires atlas space).".into(),
            params: vec![
                p("mask", ParamKind::Handle, true, "segmentation mask in atlas space"),
                p("lesion_id", ParamKind::Id, true, "lesion instance id"),
            ],
            returns: "lobe name and overlap fraction".into(),
        },
        |env, args| env.tool_localize_lesion(args),
    );
    add(
        ToolDescriptor {
            name: "visualize".into(),
            description: "Write a mid-axial snapshot (PGM), optionally overlaying a mask.".into(),
            params: vec![
                p("image", ParamKind::Handle, true, "scan to render"),
                p("mask", ParamKind::Handle, false, "overlay mask"),
            ],
            returns: "snapshot file path".into(),
        },
        |env, args| env.tool_visualize(args),
    );

    reg
}
