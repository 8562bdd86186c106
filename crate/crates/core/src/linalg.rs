//! Small dense complex matrices and state vectors.
//!
//! Dimensions here never exceed a handful (2, 4, occasionally 8), so a
//! row-major `Vec` is all the structure needed.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Mul;

use num_complex::Complex64;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("expected {expected} entries, got {actual}")]
    BadLength { expected: usize, actual: usize },
    #[error("vector has zero norm")]
    ZeroVector,
}

/// Square complex matrix, row-major.
#[derive(Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major complex entries.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if data.len() != dim * dim {
            return Err(LinalgError::BadLength {
                expected: dim * dim,
                actual: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// Builds a real matrix from row-major entries.
    pub fn from_real(dim: usize, data: &[f64]) -> Result<Self, LinalgError> {
        Self::from_row_major(dim, data.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for c in 0..n {
                out[(c, r)] = self[(r, c)].conj();
            }
        }
        out
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * k).collect(),
        }
    }

    pub fn try_mul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.check_dim(rhs.dim)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..n {
                    out.data[r * n + c] += a * rhs.data[k * n + c];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector, LinalgError> {
        self.check_dim(v.dim())?;
        let n = self.dim;
        let amps = (0..n)
            .map(|r| (0..n).map(|c| self[(r, c)] * v.0[c]).sum())
            .collect();
        Ok(StateVector(amps))
    }

    /// Kronecker product `self ⊗ rhs`; `self` indexes the most significant factor.
    pub fn kron(&self, rhs: &Self) -> Self {
        let (a, b) = (self.dim, rhs.dim);
        let n = a * b;
        let mut out = Self::zeros(n);
        for r1 in 0..a {
            for c1 in 0..a {
                let x = self[(r1, c1)];
                for r2 in 0..b {
                    for c2 in 0..b {
                        out[(r1 * b + r2, c1 * b + c2)] = x * rhs[(r2, c2)];
                    }
                }
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.dim);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Largest elementwise modulus of `self - rhs`.
    pub fn max_abs_diff(&self, rhs: &Self) -> Result<f64, LinalgError> {
        self.check_dim(rhs.dim)?;
        Ok(self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn approx_eq(&self, rhs: &Self, tol: f64) -> bool {
        self.max_abs_diff(rhs).is_ok_and(|d| d <= tol)
    }

    /// `U†U = I` within `tol`, elementwise.
    pub fn is_unitary(&self, tol: f64) -> bool {
        (&self.adjoint() * self).approx_eq(&Self::identity(self.dim), tol)
    }

    /// True when every row and column has exactly one entry equal to one and
    /// all others are zero.
    pub fn is_permutation(&self) -> bool {
        let n = self.dim;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        if self.data.iter().any(|&z| z != one && z != zero) {
            return false;
        }
        (0..n).all(|r| (0..n).filter(|&c| self[(r, c)] == one).count() == 1)
            && (0..n).all(|c| (0..n).filter(|&r| self[(r, c)] == one).count() == 1)
    }

    fn check_dim(&self, other: usize) -> Result<(), LinalgError> {
        if self.dim == other {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: other,
            })
        }
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.dim + c]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.dim + c]
    }
}

/// Panics on dimension mismatch; use [`CMatrix::try_mul`] for fallible products.
impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.try_mul(rhs).expect("matrix dimensions must agree")
    }
}

/// Pure state amplitudes in the computational basis.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateVector(pub Vec<Complex64>);

impl StateVector {
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Self(amps)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Result<Self, LinalgError> {
        let n = Float::sqrt(self.norm_sqr());
        if n == 0.0 || !n.is_finite() {
            return Err(LinalgError::ZeroVector);
        }
        Ok(Self(self.0.iter().map(|z| z / n).collect()))
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64, LinalgError> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum())
    }

    /// `self ⊗ other`, with `self` the most significant factor.
    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.0 {
            for b in &other.0 {
                out.push(a * b);
            }
        }
        Self(out)
    }

    /// Born-rule probabilities of each computational basis outcome.
    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.norm_sqr();
        self.0.iter().map(|z| z.norm_sqr() / total).collect()
    }

    /// Equality of rays: after normalizing both and removing the relative
    /// global phase, amplitudes agree elementwise within `tol`.
    pub fn ray_eq(&self, other: &Self, tol: f64) -> bool {
        match (self.normalized(), other.normalized()) {
            (Ok(a), Ok(b)) => a.aligned_diff(&b).is_some_and(|d| d <= tol),
            _ => false,
        }
    }

    // Max elementwise distance after removing the relative global phase.
    fn aligned_diff(&self, other: &Self) -> Option<f64> {
        let ip = self.inner(other).ok()?;
        let phase = if ip.norm() > 0.0 {
            ip / ip.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        Some(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| (a * phase - b).norm())
                .fold(0.0, f64::max),
        )
    }
}

/// Haar-random unitary from Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<Complex64> = (0..dim).map(|_| gaussian_complex(rng)).collect();
        for q in &cols {
            let proj: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= proj * qi;
            }
        }
        let n = Float::sqrt(v.iter().map(|z| z.norm_sqr()).sum::<f64>());
        if n > 1e-8 {
            cols.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    let mut m = CMatrix::zeros(dim);
    for (c, col) in cols.iter().enumerate() {
        for (r, &z) in col.iter().enumerate() {
            m[(r, c)] = z;
        }
    }
    m
}

/// Uniformly random pure state of the given dimension.
pub fn random_state<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    loop {
        let v = StateVector((0..dim).map(|_| gaussian_complex(rng)).collect());
        if let Ok(n) = v.normalized() {
            return n;
        }
    }
}

fn gaussian_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn kron_of_basis_states_orders_system_first() {
        let one = StateVector::basis(2, 1);
        let zero = StateVector::basis(2, 0);
        assert_eq!(one.kron(&zero), StateVector::basis(4, 2));
    }

    #[test]
    fn random_unitaries_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in [2, 4, 8] {
            for _ in 0..20 {
                assert!(random_unitary(dim, &mut rng).is_unitary(1e-12));
            }
        }
    }

    #[test]
    fn ray_equality_ignores_global_phase() {
        let a = StateVector(vec![c(0.6, 0.0), c(0.0, 0.8)]);
        let b = StateVector(a.0.iter().map(|z| z * c(0.0, 1.0)).collect());
        assert!(a.ray_eq(&b, 1e-12));
        let d = StateVector(vec![c(0.6, 0.0), c(0.0, -0.8)]);
        assert!(!a.ray_eq(&d, 1e-12));
    }

    #[test]
    fn mismatched_dimensions_are_errors() {
        let a = CMatrix::identity(2);
        let b = CMatrix::identity(4);
        assert_eq!(
            a.try_mul(&b),
            Err(LinalgError::DimensionMismatch { left: 2, right: 4 })
        );
        assert!(CMatrix::from_real(2, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn permutation_detection() {
        let p = CMatrix::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(p.is_permutation());
        assert!(!CMatrix::from_real(2, &[1.0, 1.0, 0.0, 0.0]).unwrap().is_permutation());
    }
}
