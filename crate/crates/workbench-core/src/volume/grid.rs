//! Typed 3D voxel grids and label masks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::affine::Affine;
use super::{Result, VolumeError};
use crate::scalar::{Dtype, VoxelScalar};

/// Grid geometry without the data buffer: shape, spacing, origin, orientation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub affine: Affine,
}

impl GridDescriptor {
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        GridDescriptor {
            dims,
            spacing,
            origin,
            affine: Affine::scaling(spacing, origin),
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Volume of one voxel in mm^3.
    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// World coordinate (mm) of a voxel center.
    pub fn index_to_world(&self, idx: [f64; 3]) -> [f64; 3] {
        self.affine.apply(idx)
    }
}

/// A 3D scalar grid with spacing, origin, and an axis-aligned index-to-world
/// affine. Data is stored flat in x-fastest order.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    desc: GridDescriptor,
    data: Vec<T>,
    pub meta: BTreeMap<String, String>,
}

impl<T: VoxelScalar> Volume<T> {
    /// Zero-filled volume on an axis-aligned grid.
    pub fn zeros(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        let desc = GridDescriptor::axis_aligned(dims, spacing, origin);
        let n = desc.voxel_count();
        Volume {
            desc,
            data: vec![T::zero(); n],
            meta: BTreeMap::new(),
        }
    }

    pub fn from_parts(desc: GridDescriptor, data: Vec<T>) -> Result<Self> {
        let v = Volume {
            desc,
            data,
            meta: BTreeMap::new(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.desc.dims.iter().any(|&d| d == 0) {
            return Err(VolumeError::Invalid(format!(
                "dims must be positive, got {:?}",
                self.desc.dims
            )));
        }
        if self.data.len() != self.desc.voxel_count() {
            return Err(VolumeError::Invalid(format!(
                "data length {} does not equal nx*ny*nz = {}",
                self.data.len(),
                self.desc.voxel_count()
            )));
        }
        if self.desc.spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VolumeError::Invalid(format!(
                "spacing must be strictly positive, got {:?}",
                self.desc.spacing
            )));
        }
        if !self.desc.affine.is_axis_aligned(self.desc.spacing, 1e-6) {
            return Err(VolumeError::Unsupported(
                "affine is not an axis-aligned (signed-permutation) orientation".into(),
            ));
        }
        if self.desc.affine.t != self.desc.origin {
            return Err(VolumeError::Invalid(
                "affine translation does not equal origin".into(),
            ));
        }
        Ok(())
    }

    pub fn descriptor(&self) -> &GridDescriptor {
        &self.desc
    }

    pub fn dims(&self) -> [usize; 3] {
        self.desc.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.desc.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.desc.origin
    }

    pub fn affine(&self) -> &Affine {
        &self.desc.affine
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.desc.dims[0] * (y + self.desc.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.linear(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: T) {
        let i = self.linear(x, y, z);
        self.data[i] = v;
    }

    /// Decompose a flat index back into (x, y, z).
    #[inline]
    pub fn coords(&self, linear: usize) -> [usize; 3] {
        let nx = self.desc.dims[0];
        let ny = self.desc.dims[1];
        [linear % nx, (linear / nx) % ny, linear / (nx * ny)]
    }

    pub fn index_to_world(&self, idx: [f64; 3]) -> [f64; 3] {
        self.desc.index_to_world(idx)
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|v| v.is_nonzero()).count()
    }

    /// Foreground membership as a flat boolean field.
    pub fn nonzero_mask(&self) -> Vec<bool> {
        self.data.iter().map(|v| v.is_nonzero()).collect()
    }

    pub fn map_data<U: VoxelScalar>(&self, f: impl Fn(T) -> U) -> Volume<U> {
        Volume {
            desc: self.desc.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }
}

/// A volume of any supported dtype. The variant is the dtype tag.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelVolume {
    U8(Volume<u8>),
    I16(Volume<i16>),
    F32(Volume<f32>),
}

macro_rules! dispatch {
    ($self:expr, $v:ident => $body:expr) => {
        match $self {
            VoxelVolume::U8($v) => $body,
            VoxelVolume::I16($v) => $body,
            VoxelVolume::F32($v) => $body,
        }
    };
}

impl VoxelVolume {
    pub fn dtype(&self) -> Dtype {
        match self {
            VoxelVolume::U8(_) => Dtype::U8,
            VoxelVolume::I16(_) => Dtype::I16,
            VoxelVolume::F32(_) => Dtype::F32,
        }
    }

    pub fn descriptor(&self) -> &GridDescriptor {
        dispatch!(self, v => v.descriptor())
    }

    pub fn dims(&self) -> [usize; 3] {
        dispatch!(self, v => v.dims())
    }

    pub fn spacing(&self) -> [f64; 3] {
        dispatch!(self, v => v.spacing())
    }

    pub fn origin(&self) -> [f64; 3] {
        dispatch!(self, v => v.origin())
    }

    pub fn affine(&self) -> &Affine {
        dispatch!(self, v => v.affine())
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        dispatch!(self, v => &v.meta)
    }

    pub fn meta_mut(&mut self) -> &mut BTreeMap<String, String> {
        dispatch!(self, v => &mut v.meta)
    }

    pub fn validate(&self) -> Result<()> {
        dispatch!(self, v => v.validate())
    }

    pub fn nonzero_count(&self) -> usize {
        dispatch!(self, v => v.nonzero_count())
    }

    pub fn nonzero_mask(&self) -> Vec<bool> {
        dispatch!(self, v => v.nonzero_mask())
    }

    /// Voxel value at a flat index, widened to f64.
    pub fn value_f64(&self, linear: usize) -> f64 {
        dispatch!(self, v => v.data()[linear].to_f64())
    }

    /// Voxel value at a flat index, as an integer label (floats are truncated).
    pub fn label_at(&self, linear: usize) -> i64 {
        dispatch!(self, v => v.data()[linear].to_f64() as i64)
    }
}

impl From<Volume<u8>> for VoxelVolume {
    fn from(v: Volume<u8>) -> Self {
        VoxelVolume::U8(v)
    }
}

impl From<Volume<i16>> for VoxelVolume {
    fn from(v: Volume<i16>) -> Self {
        VoxelVolume::I16(v)
    }
}

impl From<Volume<f32>> for VoxelVolume {
    fn from(v: Volume<f32>) -> Self {
        VoxelVolume::F32(v)
    }
}

/// An integer-label volume together with its label vocabulary. Label 0 is
/// background and never appears in the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub grid: VoxelVolume,
    pub vocabulary: BTreeMap<i64, String>,
}

impl LabelMask {
    pub fn new(grid: VoxelVolume, vocabulary: BTreeMap<i64, String>) -> Result<Self> {
        let mask = LabelMask { grid, vocabulary };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.grid.dtype().is_integer() {
            return Err(VolumeError::Invalid(format!(
                "label masks require an integer dtype, got {}",
                self.grid.dtype()
            )));
        }
        self.grid.validate()?;
        if self.vocabulary.contains_key(&0) {
            return Err(VolumeError::Invalid(
                "label 0 is reserved for background".into(),
            ));
        }
        let n = self.grid.descriptor().voxel_count();
        for i in 0..n {
            let label = self.grid.label_at(i);
            if label != 0 && !self.vocabulary.contains_key(&label) {
                return Err(VolumeError::Invalid(format!(
                    "voxel label {label} missing from vocabulary"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_has_consistent_shape() {
        let v = Volume::<u8>::zeros([4, 4, 4], [1.0, 1.0, 1.0], [0.0; 3]);
        assert_eq!(v.data().len(), 64);
        assert_eq!(v.nonzero_count(), 0);
        v.validate().unwrap();
    }

    #[test]
    fn linear_index_is_x_fastest() {
        let v = Volume::<u8>::zeros([3, 4, 5], [1.0; 3], [0.0; 3]);
        assert_eq!(v.linear(1, 0, 0), 1);
        assert_eq!(v.linear(0, 1, 0), 3);
        assert_eq!(v.linear(0, 0, 1), 12);
        assert_eq!(v.coords(v.linear(2, 3, 4)), [2, 3, 4]);
    }

    #[test]
    fn bad_data_length_rejected() {
        let desc = GridDescriptor::axis_aligned([2, 2, 2], [1.0; 3], [0.0; 3]);
        assert!(Volume::<u8>::from_parts(desc, vec![0u8; 7]).is_err());
    }

    #[test]
    fn label_mask_requires_vocabulary_cover() {
        let mut v = Volume::<u8>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]);
        v.set(0, 0, 0, 3);
        let err = LabelMask::new(v.clone().into(), BTreeMap::new());
        assert!(err.is_err());
        let mut vocab = BTreeMap::new();
        vocab.insert(3, "lesion".to_string());
        LabelMask::new(v.into(), vocab).unwrap();
    }

    #[test]
    fn background_label_rejected_in_vocabulary() {
        let v = Volume::<u8>::zeros([2, 2, 2], [1.0; 3], [0.0; 3]);
        let mut vocab = BTreeMap::new();
        vocab.insert(0, "background".to_string());
        assert!(LabelMask::new(v.into(), vocab).is_err());
    }
}
