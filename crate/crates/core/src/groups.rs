//! Commuting transformation families for the protocol.
//!
//! Each family is a set of unitaries from which Alice and Bob draw their
//! secret transformations. The protocol only needs Alice's and Bob's elements
//! to commute as rays (`AB = λ·BA` with `|λ| = 1`), so families whose members
//! anticommute (Pauli, quaternion units) are valid alongside the exactly
//! commuting ones.
//!
//! Two-qubit basis ordering is `|00⟩, |01⟩, |10⟩, |11⟩` → indices `0..4`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;
use core::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{CMatrix, LinalgError, StateVector};
use crate::polarization::rotation_operator;
use crate::ALGEBRA_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum GroupError {
    #[error("cannot compare {left}x{left} with {right}x{right} transforms")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not unitary")]
    NotUnitary,
    #[error("quaternion index {0} is outside 1..=4")]
    QuaternionIndex(u8),
}

impl From<LinalgError> for GroupError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::DimensionMismatch { left, right } => Self::DimensionMismatch { left, right },
            _ => Self::NotUnitary,
        }
    }
}

/// A labelled unitary matrix of dimension 2 or 4.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitaryTransform {
    matrix: CMatrix,
    label: String,
}

impl UnitaryTransform {
    /// Wraps `matrix`, rejecting non-unitary input and dimensions that are
    /// not a power of two.
    pub fn new(matrix: CMatrix, label: impl Into<String>) -> Result<Self, GroupError> {
        if !matrix.dim().is_power_of_two() || !matrix.is_unitary(ALGEBRA_TOL) {
            return Err(GroupError::NotUnitary);
        }
        Ok(Self {
            matrix,
            label: label.into(),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            label: format!("{}†", self.label),
        }
    }

    pub fn then(&self, next: &Self) -> Result<Self, GroupError> {
        Ok(Self {
            matrix: next.matrix.try_mul(&self.matrix)?,
            label: format!("{}·{}", next.label, self.label),
        })
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector, GroupError> {
        Ok(self.matrix.apply(v)?)
    }
}

// Built-in constructors only produce unitary matrices.
fn known(matrix: CMatrix, label: impl Into<String>) -> UnitaryTransform {
    UnitaryTransform::new(matrix, label).expect("built-in transform is unitary")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum HadamardChoice {
    /// Do nothing.
    K,
    /// Hadamard.
    L,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PermutationSide {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DftChoice {
    Identity,
    Dft,
}

/// How the members of a family commute with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Commutation {
    Exact,
    UpToPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FamilyKind {
    Rotation,
    Pauli,
    HadamardPair,
    TwoQubitPermutation,
    TwoQubitDft,
    Quaternion,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::Rotation,
        FamilyKind::Pauli,
        FamilyKind::HadamardPair,
        FamilyKind::TwoQubitPermutation,
        FamilyKind::TwoQubitDft,
        FamilyKind::Quaternion,
    ];

    pub fn dim(self) -> usize {
        match self {
            Self::Rotation | Self::Pauli | Self::HadamardPair => 2,
            Self::TwoQubitPermutation | Self::TwoQubitDft | Self::Quaternion => 4,
        }
    }

    pub fn commutation(self) -> Commutation {
        match self {
            Self::Pauli | Self::Quaternion => Commutation::UpToPhase,
            _ => Commutation::Exact,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rotation => "rotation",
            Self::Pauli => "pauli",
            Self::HadamardPair => "hadamard",
            Self::TwoQubitPermutation => "permutation",
            Self::TwoQubitDft => "dft",
            Self::Quaternion => "quaternion",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Every element of a finite family; `None` for the continuous rotation family.
    pub fn elements(self) -> Option<Vec<FamilyElement>> {
        use FamilyElement as E;
        Some(match self {
            Self::Rotation => return None,
            Self::Pauli => Pauli::ALL.into_iter().map(E::Pauli).collect(),
            Self::HadamardPair => vec![E::Hadamard(HadamardChoice::K), E::Hadamard(HadamardChoice::L)],
            Self::TwoQubitPermutation => {
                vec![E::Permutation(PermutationSide::A), E::Permutation(PermutationSide::B)]
            }
            Self::TwoQubitDft => vec![E::Dft(DftChoice::Identity), E::Dft(DftChoice::Dft)],
            Self::Quaternion => (1..=4).map(E::Quaternion).collect(),
        })
    }

    /// Uniform draw; rotation angles are uniform on `[0, 360)`.
    pub fn random_element<R: Rng + ?Sized>(self, rng: &mut R) -> FamilyElement {
        match self.elements() {
            None => FamilyElement::Rotation(rng.random::<f64>() * 360.0),
            Some(all) => all[rng.random_range(0..all.len())],
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One member of a transformation family.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FamilyElement {
    Rotation(f64),
    Pauli(Pauli),
    Hadamard(HadamardChoice),
    Permutation(PermutationSide),
    Dft(DftChoice),
    /// Quaternion unit in display order, 1..=4 (4 is the identity).
    Quaternion(u8),
}

impl FamilyElement {
    pub fn kind(&self) -> FamilyKind {
        match self {
            Self::Rotation(_) => FamilyKind::Rotation,
            Self::Pauli(_) => FamilyKind::Pauli,
            Self::Hadamard(_) => FamilyKind::HadamardPair,
            Self::Permutation(_) => FamilyKind::TwoQubitPermutation,
            Self::Dft(_) => FamilyKind::TwoQubitDft,
            Self::Quaternion(_) => FamilyKind::Quaternion,
        }
    }

    pub fn transform(&self) -> Result<UnitaryTransform, GroupError> {
        Ok(match *self {
            Self::Rotation(theta) => known(rotation_operator(theta).to_matrix(), format!("R({theta})")),
            Self::Pauli(p) => pauli(p),
            Self::Hadamard(h) => hadamard_pair(h),
            Self::Permutation(side) => {
                let (a, b) = two_qubit_permutations();
                match side {
                    PermutationSide::A => a,
                    PermutationSide::B => b,
                }
            }
            Self::Dft(DftChoice::Dft) => two_qubit_dft(),
            Self::Dft(DftChoice::Identity) => known(CMatrix::identity(4), "I4"),
            Self::Quaternion(i) => quaternion(i)?,
        })
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli(which: Pauli) -> UnitaryTransform {
    let (z, o, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    let (data, label) = match which {
        Pauli::I => (vec![o, z, z, o], "I"),
        Pauli::X => (vec![z, o, o, z], "X"),
        Pauli::Y => (vec![z, -i, i, z], "Y"),
        Pauli::Z => (vec![o, z, z, -o], "Z"),
    };
    known(CMatrix::from_row_major(2, data).expect("2x2"), label)
}

/// `K` is the identity, `L = (1/√2)[[1, 1], [1, −1]]`.
pub fn hadamard_pair(which: HadamardChoice) -> UnitaryTransform {
    match which {
        HadamardChoice::K => known(CMatrix::identity(2), "K"),
        HadamardChoice::L => {
            let r = FRAC_1_SQRT_2;
            known(CMatrix::from_real(2, &[r, r, r, -r]).expect("2x2"), "L")
        }
    }
}

/// The commuting 0/1 pair: `U_A` swaps `|10⟩ ↔ |11⟩`, `U_B` swaps `|00⟩ ↔ |01⟩`.
pub fn two_qubit_permutations() -> (UnitaryTransform, UnitaryTransform) {
    #[rustfmt::skip]
    let a = [
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
    ];
    #[rustfmt::skip]
    let b = [
        0.0, 1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ];
    (
        known(CMatrix::from_real(4, &a).expect("4x4"), "U_A"),
        known(CMatrix::from_real(4, &b).expect("4x4"), "U_B"),
    )
}

/// Two-qubit discrete Fourier transform, `½[ωʲᵏ]` with `ω = i`.
pub fn two_qubit_dft() -> UnitaryTransform {
    let w = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
    let data = (0..4)
        .flat_map(|j| (0..4).map(move |k| w[(j * k) % 4] * 0.5))
        .collect();
    known(CMatrix::from_row_major(4, data).expect("4x4"), "DFT4")
}

/// The four real 4x4 matrices representing quaternion units, in display order.
pub fn quaternion_set() -> Vec<UnitaryTransform> {
    (1..=4).map(|i| quaternion(i).expect("index in range")).collect()
}

fn quaternion(index: u8) -> Result<UnitaryTransform, GroupError> {
    #[rustfmt::skip]
    let data: [f64; 16] = match index {
        1 => [
             0.0, 1.0, 0.0, 0.0,
            -1.0, 0.0, 0.0, 0.0,
             0.0, 0.0, 0.0, 1.0,
             0.0, 0.0,-1.0, 0.0,
        ],
        2 => [
             0.0, 0.0, 0.0,-1.0,
             0.0, 0.0,-1.0, 0.0,
             0.0, 1.0, 0.0, 0.0,
             1.0, 0.0, 0.0, 0.0,
        ],
        3 => [
             0.0, 0.0,-1.0, 0.0,
             0.0, 0.0, 0.0, 1.0,
             1.0, 0.0, 0.0, 0.0,
             0.0,-1.0, 0.0, 0.0,
        ],
        4 => [
             1.0, 0.0, 0.0, 0.0,
             0.0, 1.0, 0.0, 0.0,
             0.0, 0.0, 1.0, 0.0,
             0.0, 0.0, 0.0, 1.0,
        ],
        other => return Err(GroupError::QuaternionIndex(other)),
    };
    Ok(known(CMatrix::from_real(4, &data).expect("4x4"), format!("Q{index}")))
}

/// `max |AB − BA| ≤ tol`.
pub fn commutes(a: &UnitaryTransform, b: &UnitaryTransform, tol: f64) -> Result<bool, GroupError> {
    let ab = a.matrix.try_mul(&b.matrix)?;
    let ba = b.matrix.try_mul(&a.matrix)?;
    Ok(ab.max_abs_diff(&ba)? <= tol)
}

/// The unit-modulus `λ` with `AB = λ·BA`, if one exists within `tol`.
pub fn commutes_up_to_phase(
    a: &UnitaryTransform,
    b: &UnitaryTransform,
    tol: f64,
) -> Result<Option<Complex64>, GroupError> {
    let ab = a.matrix.try_mul(&b.matrix)?;
    let ba = b.matrix.try_mul(&a.matrix)?;
    // Both products are unitary, so the largest entry of BA is well away from zero.
    let (k, pivot) = ba
        .as_slice()
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.norm_sqr().total_cmp(&y.1.norm_sqr()))
        .expect("non-empty matrix");
    let lambda = ab.as_slice()[k] / pivot;
    if (lambda.norm() - 1.0).abs() > tol {
        return Ok(None);
    }
    let lambda = snap_phase(lambda, tol);
    Ok((ab.max_abs_diff(&ba.scale(lambda))? <= tol).then_some(lambda))
}

// Report ±1 and ±i exactly when the measured phase is within tolerance of one.
fn snap_phase(z: Complex64, tol: f64) -> Complex64 {
    [c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0)]
        .into_iter()
        .find(|r| (z - r).norm() <= tol)
        .unwrap_or(z)
}

/// True when `B†A†BA` maps `state` to the same ray.
///
/// This is the protocol's recovery condition: Alice applies `A`, Bob `B`,
/// Alice `A†`, Bob `B†`.
pub fn recovers_ray(
    a: &UnitaryTransform,
    b: &UnitaryTransform,
    state: &StateVector,
    tol: f64,
) -> Result<bool, GroupError> {
    let out = a
        .then(b)?
        .then(&a.adjoint())?
        .then(&b.adjoint())?
        .apply(state)?;
    Ok(out.ray_eq(state, tol))
}

/// Probability that a computational basis state is flipped to a different
/// basis outcome after a uniformly chosen family element acts on it.
///
/// For finite families the average is over all elements. The rotation family
/// averages over an equally spaced 360-point angle grid; the Born-rule flip
/// probability is a degree-2 trigonometric polynomial in θ, so this grid
/// integrates it over the uniform circle exactly.
pub fn masking_probability(family: FamilyKind, basis_index: usize) -> Result<f64, GroupError> {
    let dim = family.dim();
    if basis_index >= dim {
        return Err(GroupError::DimensionMismatch {
            left: dim,
            right: basis_index + 1,
        });
    }
    let input = StateVector::basis(dim, basis_index);
    let flip = |e: &FamilyElement| -> Result<f64, GroupError> {
        let out = e.transform()?.apply(&input)?;
        Ok(out
            .probabilities()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != basis_index)
            .map(|(_, p)| p)
            .sum())
    };
    let elements = family
        .elements()
        .unwrap_or_else(|| (0..360).map(|d| FamilyElement::Rotation(d as f64)).collect());
    let mut total = 0.0;
    for e in &elements {
        total += flip(e)?;
    }
    Ok(total / elements.len() as f64)
}
