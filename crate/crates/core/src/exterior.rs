//! Dense exterior algebra Λ(ℝⁿ) with the Euclidean metric.
//!
//! A [`Multivector`] stores all `2ⁿ` blade coefficients. Blade `b` is the
//! bitmask whose bit `k` is set iff `e_{k+1}` is a factor; factors are kept in
//! increasing index order, so `0b011` is `e1∧e2` and `0` is the unit scalar.
//!
//! The Hodge star follows `e_I ∧ ⋆e_I = e_{1…n}`.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 16;

/// Relative off-grade mass tolerated by [`Multivector::vector_extract`].
pub const GRADE_PURITY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExteriorError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("dimension {0} outside 1..={MAX_DIM}")]
    UnsupportedDimension(usize),
    #[error("grade {grade} exceeds dimension {dim}")]
    GradeOutOfRange { grade: usize, dim: usize },
    #[error("expected a grade-{expected} element, off-grade mass ratio {ratio:e}")]
    NotHomogeneous { expected: usize, ratio: f64 },
}

/// Parity sign of the permutation that merges sorted blades `a` and `b`.
///
/// Caller guarantees `a & b == 0`.
#[inline]
pub fn reorder_sign(a: u32, b: u32) -> f64 {
    let mut swaps = 0u32;
    let mut rest = b;
    while rest != 0 {
        let k = rest.trailing_zeros();
        // factors of `a` with a higher index must hop over e_{k+1}
        swaps += (a >> (k + 1)).count_ones();
        rest &= rest - 1;
    }
    if swaps & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn grade_of(blade: u32) -> usize {
    blade.count_ones() as usize
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Multivector {
    dim: usize,
    coeffs: Vec<f64>,
}

impl Multivector {
    pub fn zero(dim: usize) -> Result<Self, ExteriorError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(ExteriorError::UnsupportedDimension(dim));
        }
        Ok(Self {
            dim,
            coeffs: vec![0.0; 1 << dim],
        })
    }

    pub fn scalar(dim: usize, value: f64) -> Result<Self, ExteriorError> {
        let mut m = Self::zero(dim)?;
        m.coeffs[0] = value;
        Ok(m)
    }

    /// Unit blade `e_I` for bitmask `blade`.
    pub fn blade(dim: usize, blade: u32, value: f64) -> Result<Self, ExteriorError> {
        let mut m = Self::zero(dim)?;
        let idx = blade as usize;
        if idx >= m.coeffs.len() {
            return Err(ExteriorError::GradeOutOfRange {
                grade: grade_of(blade),
                dim,
            });
        }
        m.coeffs[idx] = value;
        Ok(m)
    }

    /// Basis vector `e_{k+1}` (zero-based `k`).
    pub fn basis(dim: usize, k: usize) -> Result<Self, ExteriorError> {
        if k >= dim {
            return Err(ExteriorError::GradeOutOfRange { grade: 1, dim });
        }
        Self::blade(dim, 1 << k, 1.0)
    }

    pub fn from_coeffs(dim: usize, coeffs: Vec<f64>) -> Result<Self, ExteriorError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(ExteriorError::UnsupportedDimension(dim));
        }
        if coeffs.len() != 1 << dim {
            return Err(ExteriorError::DimensionMismatch {
                left: 1 << dim,
                right: coeffs.len(),
            });
        }
        Ok(Self { dim, coeffs })
    }

    pub fn vector_embed(v: &[f64]) -> Result<Self, ExteriorError> {
        let mut m = Self::zero(v.len())?;
        for (k, &x) in v.iter().enumerate() {
            m.coeffs[1 << k] = x;
        }
        Ok(m)
    }

    /// Grade-1 part as a plain vector; fails if the element is not a vector.
    pub fn vector_extract(&self) -> Result<Vec<f64>, ExteriorError> {
        let mut on = 0.0;
        let mut off = 0.0;
        for (b, c) in self.coeffs.iter().enumerate() {
            if grade_of(b as u32) == 1 {
                on += c.abs();
            } else {
                off += c.abs();
            }
        }
        let total = on + off;
        if off > GRADE_PURITY_TOL * total {
            return Err(ExteriorError::NotHomogeneous {
                expected: 1,
                ratio: off / total,
            });
        }
        Ok((0..self.dim).map(|k| self.coeffs[1 << k]).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, blade: u32) -> f64 {
        self.coeffs[blade as usize]
    }

    #[inline]
    pub fn pseudoscalar_blade(&self) -> u32 {
        ((1u64 << self.dim) - 1) as u32
    }

    fn check_dim(&self, other: &Self) -> Result<(), ExteriorError> {
        if self.dim != other.dim {
            return Err(ExteriorError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    /// Exterior product, bilinear extension of `e_I ∧ e_J = ±e_{I∪J}`.
    pub fn wedge(&self, other: &Self) -> Result<Self, ExteriorError> {
        self.check_dim(other)?;
        let mut out = vec![0.0; self.coeffs.len()];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if cb == 0.0 || a & b != 0 {
                    continue;
                }
                out[a | b] += reorder_sign(a as u32, b as u32) * ca * cb;
            }
        }
        Ok(Self {
            dim: self.dim,
            coeffs: out,
        })
    }

    /// Wedge of a sequence; the empty product is the unit scalar.
    pub fn wedge_all<'a, I>(dim: usize, items: I) -> Result<Self, ExteriorError>
    where
        I: IntoIterator<Item = &'a Multivector>,
    {
        let mut acc = Self::scalar(dim, 1.0)?;
        for m in items {
            acc = acc.wedge(m)?;
        }
        Ok(acc)
    }

    /// Euclidean Hodge star.
    pub fn hodge(&self) -> Self {
        let full = self.pseudoscalar_blade();
        let mut out = vec![0.0; self.coeffs.len()];
        for (b, &c) in self.coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let b = b as u32;
            let comp = full ^ b;
            out[comp as usize] += reorder_sign(b, comp) * c;
        }
        Self {
            dim: self.dim,
            coeffs: out,
        }
    }

    /// Squared norm in the orthonormal blade basis. For `v₁∧…∧v_p` this is
    /// the Gram determinant `det(vᵢ·vⱼ)`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn grade_part(&self, grade: usize) -> Result<GradeVector, ExteriorError> {
        GradeVector::from_multivector(self, grade)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, ExteriorError> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self, ExteriorError> {
        self.try_add(&other.scale(-1.0))
    }
}

impl Add for &Multivector {
    type Output = Multivector;

    /// Panics on dimension mismatch; use [`Multivector::try_add`] otherwise.
    fn add(self, rhs: Self) -> Multivector {
        self.try_add(rhs).expect("multivector dimensions differ")
    }
}

impl Sub for &Multivector {
    type Output = Multivector;

    fn sub(self, rhs: Self) -> Multivector {
        self.try_sub(rhs).expect("multivector dimensions differ")
    }
}

impl Neg for &Multivector {
    type Output = Multivector;

    fn neg(self) -> Multivector {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &Multivector {
    type Output = Multivector;

    fn mul(self, rhs: f64) -> Multivector {
        self.scale(rhs)
    }
}

/// Homogeneous grade-`g` slice of a multivector, blades in increasing bitmask order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeVector {
    dim: usize,
    grade: usize,
    blades: Vec<u32>,
    coeffs: Vec<f64>,
}

impl GradeVector {
    pub fn from_multivector(m: &Multivector, grade: usize) -> Result<Self, ExteriorError> {
        if grade > m.dim {
            return Err(ExteriorError::GradeOutOfRange { grade, dim: m.dim });
        }
        let blades: Vec<u32> = (0..m.coeffs.len() as u32).filter(|&b| grade_of(b) == grade).collect();
        let coeffs = blades.iter().map(|&b| m.coeffs[b as usize]).collect();
        Ok(Self {
            dim: m.dim,
            grade,
            blades,
            coeffs,
        })
    }

    pub fn to_multivector(&self) -> Multivector {
        let mut coeffs = vec![0.0; 1 << self.dim];
        for (&b, &c) in self.blades.iter().zip(&self.coeffs) {
            coeffs[b as usize] = c;
        }
        Multivector { dim: self.dim, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grade(&self) -> usize {
        self.grade
    }

    pub fn blades(&self) -> &[u32] {
        &self.blades
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mv(dim: usize, terms: &[(u32, f64)]) -> Multivector {
        let mut m = Multivector::zero(dim).unwrap();
        for &(b, c) in terms {
            m.coeffs[b as usize] += c;
        }
        m
    }

    #[test]
    fn basis_wedges() {
        let e1 = Multivector::basis(2, 0).unwrap();
        let e2 = Multivector::basis(2, 1).unwrap();
        assert_eq!(e1.wedge(&e2).unwrap(), mv(2, &[(0b11, 1.0)]));
        assert_eq!(e2.wedge(&e1).unwrap(), mv(2, &[(0b11, -1.0)]));
        assert_eq!(e1.wedge(&e1).unwrap().norm_sq(), 0.0);
    }

    #[test]
    fn gradient_wedge_matches_hand_expansion() {
        // ∇x ∧ ∇(x²+y²) at (3,4) = (1,0) ∧ (6,8) = 8 e12
        let a = Multivector::vector_embed(&[1.0, 0.0]).unwrap();
        let b = Multivector::vector_embed(&[6.0, 8.0]).unwrap();
        let w = a.wedge(&b).unwrap();
        assert_eq!(w, mv(2, &[(0b11, 8.0)]));
        // Gram det of [[1, 6], [6, 100]] = 64 = 4y²
        assert_eq!(w.norm_sq(), 64.0);
    }

    #[test]
    fn hodge_in_the_plane() {
        let e1 = Multivector::basis(2, 0).unwrap();
        let e2 = Multivector::basis(2, 1).unwrap();
        assert_eq!(e1.hodge(), e2);
        assert_eq!(e2.hodge(), -&e1);
        assert_eq!(mv(2, &[(0b11, 1.0)]).hodge(), mv(2, &[(0, 1.0)]));
        assert_eq!(Multivector::scalar(2, 1.0).unwrap().hodge(), mv(2, &[(0b11, 1.0)]));
        let v = Multivector::vector_embed(&[0.3, -1.7]).unwrap();
        assert_eq!(v.hodge().hodge(), -&v);
    }

    #[test]
    fn hodge_right_hand_rule() {
        assert_eq!(mv(3, &[(0b011, 1.0)]).hodge(), mv(3, &[(0b100, 1.0)]));
        assert_eq!(mv(3, &[(0b110, 1.0)]).hodge(), mv(3, &[(0b001, 1.0)]));
        assert_eq!(mv(3, &[(0b101, 1.0)]).hodge(), mv(3, &[(0b010, -1.0)]));
    }

    #[test]
    fn hodge_convention_wedge_with_self() {
        for dim in 1..=6 {
            let full = ((1u32 << dim) - 1) as u32;
            for b in 0..=full {
                let e = Multivector::blade(dim, b, 1.0).unwrap();
                let w = e.wedge(&e.hodge()).unwrap();
                assert_eq!(w, Multivector::blade(dim, full, 1.0).unwrap(), "blade {b:b}");
            }
        }
    }

    #[test]
    fn norms() {
        assert_eq!(mv(2, &[(0b01, 3.0)]).norm_sq(), 9.0);
        assert_eq!(mv(2, &[(0b01, 1.0), (0b11, 1.0)]).norm_sq(), 2.0);
    }

    #[test]
    fn embed_extract() {
        let v = Multivector::vector_embed(&[1.0, 2.0]).unwrap();
        assert_eq!(v.vector_extract().unwrap(), vec![1.0, 2.0]);
        assert!(matches!(
            mv(2, &[(0b11, 1.0)]).vector_extract(),
            Err(ExteriorError::NotHomogeneous { .. })
        ));
        let z = Multivector::vector_embed(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(z, Multivector::zero(3).unwrap());
        assert_eq!(z.vector_extract().unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn extract_absorbs_dust() {
        let v = mv(3, &[(0b001, 1.0), (0b010, 2.0), (0b011, 1e-16)]);
        assert_eq!(v.vector_extract().unwrap(), vec![1.0, 2.0, 0.0]);
    }

    #[test]
    fn mixing_dims_is_an_error() {
        let a = Multivector::basis(2, 0).unwrap();
        let b = Multivector::basis(3, 0).unwrap();
        assert_eq!(a.wedge(&b), Err(ExteriorError::DimensionMismatch { left: 2, right: 3 }));
        assert!(a.try_add(&b).is_err());
    }

    #[test]
    fn dimension_cap() {
        assert!(Multivector::zero(0).is_err());
        assert!(Multivector::zero(17).is_err());
        assert!(Multivector::zero(16).is_ok());
    }

    #[test]
    fn empty_wedge_is_unit() {
        let u = Multivector::wedge_all(3, core::iter::empty()).unwrap();
        assert_eq!(u, Multivector::scalar(3, 1.0).unwrap());
    }

    #[test]
    fn grade_vector_round_trip() {
        let m = mv(3, &[(0b011, 2.0), (0b101, -1.0), (0b110, 0.5)]);
        let g = m.grade_part(2).unwrap();
        assert_eq!(g.blades(), &[0b011, 0b101, 0b110]);
        assert_eq!(g.to_multivector(), m);
        assert!(m.grade_part(4).is_err());
    }
}
