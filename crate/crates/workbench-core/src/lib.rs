//! Agentic workbench for simulated 3D neuro-radiological image analysis.
//!
//! The crate is organized around the pipeline it models:
//!
//! - [`volume`] — voxel-grid primitives: typed 3D volumes, a minimal NIfTI-1
//!   subset reader/writer, resampling, rigid-affine application, connected
//!   components, overlap measures, and header comparison.
//! - [`toolbox`] — the agent-facing tool suite, implemented as deterministic
//!   simulations over phantom ground truth and exchanged with agents via text
//!   payloads and opaque object handles.
//! - [`kernel`] — tool registry, agent specifications, the episode loop, and
//!   the four wiring topologies (single, agents-as-tools, handoffs,
//!   orchestrator) with a structured inter-agent protocol.
//! - [`backends`] — the decision-maker contract plus scripted, rule-based, and
//!   remote chat-completions implementations, with token/cost accounting.
//! - [`benchmark`] — synthetic phantom generation and benchmark construction:
//!   image–prompt–answer items with per-topology expected plans across three
//!   task tiers, plus dataset file I/O.
//! - [`eval`] — tool-call fidelity, cost, and output-quality scoring with
//!   report aggregation.
//!
//! Core grid math is generic over the voxel scalar type via [`scalar::VoxelScalar`];
//! concrete aliases for the supported dtypes live at the crate root.

pub mod backends;
pub mod benchmark;
pub mod eval;
pub mod kernel;
pub mod scalar;
pub mod toolbox;
pub mod volume;

pub use scalar::{Dtype, VoxelScalar};
pub use volume::grid::{LabelMask, Volume, VoxelVolume};

/// 8-bit unsigned volume (masks, labels).
pub type VolumeU8 = Volume<u8>;
/// 16-bit signed volume (labels with larger vocabularies).
pub type VolumeI16 = Volume<i16>;
/// 32-bit float volume (image intensities).
pub type VolumeF32 = Volume<f32>;
