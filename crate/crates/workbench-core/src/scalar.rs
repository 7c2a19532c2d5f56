//! Voxel scalar abstraction.
//!
//! Grid operations are written once, generic over the element type; the three
//! dtypes the file format supports implement [`VoxelScalar`].

use num_traits::{NumCast, Zero};

/// Supported voxel element types, matching the NIfTI-1 datatype codes we read
/// and write (2 = uint8, 4 = int16, 16 = float32).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    #[serde(rename = "uint8")]
    U8,
    #[serde(rename = "int16")]
    I16,
    #[serde(rename = "float32")]
    F32,
}

impl Dtype {
    /// NIfTI-1 datatype code.
    pub const fn code(self) -> i16 {
        match self {
            Dtype::U8 => 2,
            Dtype::I16 => 4,
            Dtype::F32 => 16,
        }
    }

    /// Element size in bytes.
    pub const fn byte_size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::I16 => 2,
            Dtype::F32 => 4,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(Dtype::U8),
            4 => Some(Dtype::I16),
            16 => Some(Dtype::F32),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Dtype::U8 => "uint8",
            Dtype::I16 => "int16",
            Dtype::F32 => "float32",
        }
    }

    /// True for integer-valued dtypes (label data).
    pub const fn is_integer(self) -> bool {
        matches!(self, Dtype::U8 | Dtype::I16)
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Element type a [`crate::volume::grid::Volume`] can hold.
pub trait VoxelScalar:
    Copy + PartialEq + PartialOrd + NumCast + Zero + Send + Sync + 'static
{
    const DTYPE: Dtype;

    fn to_f64(self) -> f64;

    /// True when the voxel counts as foreground.
    fn is_nonzero(self) -> bool {
        self != Self::zero()
    }
}

impl VoxelScalar for u8 {
    const DTYPE: Dtype = Dtype::U8;

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl VoxelScalar for i16 {
    const DTYPE: Dtype = Dtype::I16;

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl VoxelScalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn to_f64(self) -> f64 {
        self as f64
    }
}
