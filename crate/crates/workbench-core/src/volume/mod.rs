//! Voxel-grid primitives: volume and mask types, NIfTI-subset I/O, resampling,
//! rigid-affine application, connected components, overlap measures, and
//! header comparison.
//!
//! All types are immutable after construction and all operations are pure
//! functions, so they are safe to call from any number of concurrent workers.

pub mod affine;
pub mod components;
pub mod grid;
pub mod headers;
pub mod nifti;
pub mod overlap;
pub mod resample;

pub use affine::Affine;
pub use components::{connected_components, ComponentInfo, ComponentSet, Connectivity, Foreground};
pub use grid::{GridDescriptor, LabelMask, Volume, VoxelVolume};
pub use headers::{compare_headers, HeaderDiff, HeaderTolerances};
pub use overlap::overlap_iou;
pub use resample::{apply_affine, resample, Interpolation};

use thiserror::Error;

/// Errors produced by the voxel-grid layer.
#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid volume: {0}")]
    Invalid(String),
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error("transform error: {0}")]
    Transform(String),
    #[error("grid mismatch: {0}")]
    Grid(String),
}

pub type Result<T> = std::result::Result<T, VolumeError>;
