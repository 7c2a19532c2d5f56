//! Synthetic atlas template grids and the rigid bridge between them.
//!
//! Both templates are 1 mm isotropic with integer-aligned origins, and the
//! bridge is an integer translation, so moving between the two spaces is an
//! exact voxel bijection.

use crate::volume::affine::Affine;
use crate::volume::grid::GridDescriptor;

use super::vocab::AtlasSpace;

/// SRI24 template grid descriptor.
pub fn sri24_grid() -> GridDescriptor {
    GridDescriptor::axis_aligned([44, 52, 40], [1.0; 3], [0.0, 0.0, 0.0])
}

/// MNI152 template grid descriptor.
pub fn mni152_grid() -> GridDescriptor {
    GridDescriptor::axis_aligned([48, 54, 44], [1.0; 3], [2.0, -5.0, 0.0])
}

pub fn grid_of(space: AtlasSpace) -> GridDescriptor {
    match space {
        AtlasSpace::Sri24 => sri24_grid(),
        AtlasSpace::Mni152 => mni152_grid(),
    }
}

/// World transform from SRI24 space into MNI152 space.
pub fn sri24_to_mni152() -> Affine {
    Affine::translation([4.0, -3.0, 2.0])
}

/// World transform between any two atlas spaces.
pub fn atlas_bridge(from: AtlasSpace, to: AtlasSpace) -> Affine {
    match (from, to) {
        (a, b) if a == b => Affine::identity(),
        (AtlasSpace::Sri24, AtlasSpace::Mni152) => sri24_to_mni152(),
        (AtlasSpace::Mni152, AtlasSpace::Sri24) => sri24_to_mni152()
            .inverse()
            .expect("translations are invertible"),
        _ => unreachable!(),
    }
}
