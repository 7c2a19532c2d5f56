//! 3x4 affine transforms (3x3 linear part plus translation), used both as the
//! index-to-world mapping of a grid and as rigid world-to-world transforms.

use serde::{Deserialize, Serialize};

use super::{Result, VolumeError};

/// Row-major 3x3 linear part with a translation column: `y = m * x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub m: [[f64; 3]; 3],
    pub t: [f64; 3],
}

impl Affine {
    pub fn identity() -> Self {
        Affine {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            t: [0.0; 3],
        }
    }

    /// Diagonal scaling (grid spacing) plus translation (grid origin).
    pub fn scaling(spacing: [f64; 3], origin: [f64; 3]) -> Self {
        Affine {
            m: [
                [spacing[0], 0.0, 0.0],
                [0.0, spacing[1], 0.0],
                [0.0, 0.0, spacing[2]],
            ],
            t: origin,
        }
    }

    pub fn translation(t: [f64; 3]) -> Self {
        Affine {
            m: Affine::identity().m,
            t,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (r, row) in self.m.iter().enumerate() {
            out[r] = row[0] * p[0] + row[1] * p[1] + row[2] * p[2] + self.t[r];
        }
        out
    }

    /// Composition: `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &Affine) -> Affine {
        let mut m = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] = (0..3).map(|k| self.m[r][k] * other.m[k][c]).sum();
            }
        }
        Affine {
            m,
            t: self.apply(other.t),
        }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Inverse via the adjugate; fails on singular transforms.
    pub fn inverse(&self) -> Result<Affine> {
        let det = self.determinant();
        if det.abs() < 1e-12 {
            return Err(VolumeError::Transform(format!(
                "singular transform (det = {det})"
            )));
        }
        let m = &self.m;
        let inv = [
            [
                (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
            ],
            [
                (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
            ],
            [
                (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
            ],
        ];
        let mut t = [0.0; 3];
        for (r, row) in inv.iter().enumerate() {
            t[r] = -(row[0] * self.t[0] + row[1] * self.t[1] + row[2] * self.t[2]);
        }
        Ok(Affine { m: inv, t })
    }

    /// Checks that the 3x3 part is a signed permutation scaled columnwise by
    /// `spacing` (axis-aligned grid orientation).
    pub fn is_axis_aligned(&self, spacing: [f64; 3], tol: f64) -> bool {
        let mut seen_row = [false; 3];
        for c in 0..3 {
            let mut nonzero = None;
            for r in 0..3 {
                let v = self.m[r][c];
                if v.abs() > tol {
                    if nonzero.is_some() {
                        return false;
                    }
                    nonzero = Some((r, v));
                }
            }
            match nonzero {
                Some((r, v)) if !seen_row[r] && (v.abs() - spacing[c]).abs() <= tol => {
                    seen_row[r] = true;
                }
                _ => return false,
            }
        }
        true
    }

    /// Column directions normalized to unit vectors (columnwise spacing removed).
    pub fn unit_columns(&self, spacing: [f64; 3]) -> [[f64; 3]; 3] {
        let mut cols = [[0.0; 3]; 3];
        for c in 0..3 {
            for r in 0..3 {
                cols[c][r] = self.m[r][c] / spacing[c];
            }
        }
        cols
    }
}

/// Signed axis permutations, used to build axis-aligned rigid transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    /// `axis[c]` is the output row the cth input axis maps to.
    pub axis: [usize; 3],
    /// `sign[c]` is the sign applied along that axis.
    pub sign: [i8; 3],
}

impl SignedPermutation {
    pub fn identity() -> Self {
        SignedPermutation {
            axis: [0, 1, 2],
            sign: [1, 1, 1],
        }
    }

    pub fn to_affine(self, translation: [f64; 3]) -> Affine {
        let mut m = [[0.0; 3]; 3];
        for c in 0..3 {
            m[self.axis[c]][c] = f64::from(self.sign[c]);
        }
        Affine { m, t: translation }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        let a = Affine {
            m: [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            t: [3.0, -2.0, 5.0],
        };
        let inv = a.inverse().unwrap();
        let p = [1.5, -4.0, 2.25];
        let back = inv.apply(a.apply(p));
        for i in 0..3 {
            assert!((back[i] - p[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_rejected() {
        let a = Affine {
            m: [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
            t: [0.0; 3],
        };
        assert!(a.inverse().is_err());
    }

    #[test]
    fn axis_aligned_check() {
        let a = Affine::scaling([1.0, 2.0, 0.5], [10.0, 0.0, -4.0]);
        assert!(a.is_axis_aligned([1.0, 2.0, 0.5], 1e-9));
        let p = SignedPermutation {
            axis: [1, 0, 2],
            sign: [1, -1, 1],
        };
        let b = p.to_affine([0.0; 3]);
        assert!(b.is_axis_aligned([1.0, 1.0, 1.0], 1e-9));
        let mut c = a;
        c.m[0][1] = 0.3;
        assert!(!c.is_axis_aligned([1.0, 2.0, 0.5], 1e-9));
    }

    #[test]
    fn compose_applies_right_to_left() {
        let scale = Affine::scaling([2.0, 2.0, 2.0], [0.0; 3]);
        let shift = Affine::translation([1.0, 0.0, 0.0]);
        let combined = shift.compose(&scale);
        assert_eq!(combined.apply([1.0, 1.0, 1.0]), [3.0, 2.0, 2.0]);
    }
}
