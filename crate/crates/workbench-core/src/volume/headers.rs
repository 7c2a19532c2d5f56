//! Header/metadata comparison across scans and atlas templates.

use serde::{Deserialize, Serialize};

use super::grid::GridDescriptor;

/// Per-field absolute tolerances for geometric header comparison. Dims are
/// integers and always compared exactly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HeaderTolerances {
    pub spacing: f64,
    pub origin: f64,
    pub affine: f64,
}

impl Default for HeaderTolerances {
    fn default() -> Self {
        HeaderTolerances {
            spacing: 1e-3,
            origin: 1e-3,
            affine: 1e-3,
        }
    }
}

/// One differing field: name plus both rendered values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderMismatch {
    pub field: String,
    pub value_a: String,
    pub value_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderDiff {
    pub mismatches: Vec<HeaderMismatch>,
    pub equal: bool,
}

const AXES: [&str; 3] = ["x", "y", "z"];

/// Compare the geometric headers (dims, spacing, origin, affine) of two grids,
/// listing exactly the fields that differ beyond tolerance.
pub fn compare_headers(
    a: &GridDescriptor,
    b: &GridDescriptor,
    tol: &HeaderTolerances,
) -> HeaderDiff {
    let mut mismatches = Vec::new();
    for axis in 0..3 {
        if a.dims[axis] != b.dims[axis] {
            mismatches.push(HeaderMismatch {
                field: format!("dims.{}", AXES[axis]),
                value_a: a.dims[axis].to_string(),
                value_b: b.dims[axis].to_string(),
            });
        }
    }
    for axis in 0..3 {
        if (a.spacing[axis] - b.spacing[axis]).abs() > tol.spacing {
            mismatches.push(HeaderMismatch {
                field: format!("spacing.{}", AXES[axis]),
                value_a: a.spacing[axis].to_string(),
                value_b: b.spacing[axis].to_string(),
            });
        }
    }
    for axis in 0..3 {
        if (a.origin[axis] - b.origin[axis]).abs() > tol.origin {
            mismatches.push(HeaderMismatch {
                field: format!("origin.{}", AXES[axis]),
                value_a: a.origin[axis].to_string(),
                value_b: b.origin[axis].to_string(),
            });
        }
    }
    for r in 0..3 {
        for c in 0..3 {
            if (a.affine.m[r][c] - b.affine.m[r][c]).abs() > tol.affine {
                mismatches.push(HeaderMismatch {
                    field: format!("affine[{r}][{c}]"),
                    value_a: a.affine.m[r][c].to_string(),
                    value_b: b.affine.m[r][c].to_string(),
                });
            }
        }
    }
    HeaderDiff {
        equal: mismatches.is_empty(),
        mismatches,
    }
}
