//! Polarization states and optical elements in both calculi.
//!
//! Jones: a normalized complex 2-vector `(c0, c1)` over the horizontal and
//! vertical basis, acted on by 2x2 unitaries. Stokes/Mueller: a real 4-vector
//! `(s0, s1, s2, s3)` acted on by 4x4 real matrices.
//!
//! Matrices always act on column vectors (`M·s`), so a beam passing elements
//! `E1` then `E2` is described by `M2·M1`. Stokes components follow
//! `s1 = |c0|² − |c1|²`, `s2 = 2·Re(c0*·c1)`, `s3 = 2·Im(c0*·c1)`, which puts
//! linear polarization at angle α at `(1, cos 2α, sin 2α, 0)`.

use core::fmt;
use core::ops::Mul;

use num_complex::Complex64;
use num_traits::Float;

use crate::linalg::{CMatrix, StateVector};
use crate::{sin_cos_deg, ALGEBRA_TOL};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum PolarizationError {
    #[error("Jones vector is not normalized (|c0|²+|c1|² = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },
    #[error("Jones operator is not unitary (max |U†U − I| = {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("Stokes vector is not physical")]
    Unphysical,
    #[error("state has dimension {0}, expected 2")]
    NotAQubit(usize),
}

/// Normalization tolerance accepted by [`jones_to_stokes`].
pub const NORMALIZATION_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JonesVector {
    pub c0: Complex64,
    pub c1: Complex64,
}

impl JonesVector {
    pub const fn new(c0: Complex64, c1: Complex64) -> Self {
        Self { c0, c1 }
    }

    pub const fn horizontal() -> Self {
        Self::new(ONE, ZERO)
    }

    pub const fn vertical() -> Self {
        Self::new(ZERO, ONE)
    }

    /// Linear polarization at `angle` degrees from horizontal: `(cos α, sin α)`.
    pub fn linear(angle: f64) -> Self {
        let (s, c) = sin_cos_deg(angle);
        Self::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn normalized(&self) -> Option<Self> {
        let n = Float::sqrt(self.norm_sqr());
        (n > 0.0 && n.is_finite()).then(|| Self::new(self.c0 / n, self.c1 / n))
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.c0.conj() * other.c0 + self.c1.conj() * other.c1
    }

    /// Equality up to global phase: after aligning phases the amplitudes
    /// differ by at most `tol`.
    pub fn eq_up_to_phase(&self, other: &Self, tol: f64) -> bool {
        StateVector::from(*self).ray_eq(&StateVector::from(*other), tol)
    }

    /// Probability of the horizontal (bit 0) outcome in the H/V basis.
    pub fn horizontal_probability(&self) -> f64 {
        self.c0.norm_sqr() / self.norm_sqr()
    }
}

impl From<JonesVector> for StateVector {
    fn from(v: JonesVector) -> Self {
        StateVector(alloc::vec![v.c0, v.c1])
    }
}

impl TryFrom<&StateVector> for JonesVector {
    type Error = PolarizationError;

    fn try_from(v: &StateVector) -> Result<Self, Self::Error> {
        match v.amplitudes() {
            [c0, c1] => Ok(Self::new(*c0, *c1)),
            other => Err(PolarizationError::NotAQubit(other.len())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub const fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        Self { s0, s1, s2, s3 }
    }

    /// Horizontally polarized light of unit intensity, `(1, 1, 0, 0)`.
    pub const fn horizontal() -> Self {
        Self::new(1.0, 1.0, 0.0, 0.0)
    }

    /// Fully polarized linear light at `angle` degrees.
    pub fn linear(angle: f64, intensity: f64) -> Self {
        let (s, c) = sin_cos_deg(2.0 * angle);
        Self::new(intensity, intensity * c, intensity * s, 0.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.s0, self.s1, self.s2, self.s3]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn polarized_intensity(&self) -> f64 {
        Float::sqrt(self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3)
    }

    pub fn degree_of_polarization(&self) -> f64 {
        if self.s0 == 0.0 {
            0.0
        } else {
            self.polarized_intensity() / self.s0
        }
    }

    /// `s0 ≥ 0`, all components finite and `s1²+s2²+s3² ≤ s0²` within a
    /// relative `tol`.
    pub fn is_physical(&self, tol: f64) -> bool {
        self.as_array().iter().all(|x| x.is_finite())
            && self.s0 >= 0.0
            && self.polarized_intensity() <= self.s0 * (1.0 + tol) + tol
    }

    /// Orientation of the linear part, in degrees within `[0, 180)`.
    pub fn linear_angle(&self) -> f64 {
        let a = Float::atan2(self.s2, self.s1).to_degrees() / 2.0;
        crate::normalize_deg(a) % 180.0
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.s0 * k, self.s1 * k, self.s2 * k, self.s3 * k)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl core::ops::Add for StokesVector {
    type Output = StokesVector;
    fn add(self, o: StokesVector) -> StokesVector {
        StokesVector::new(self.s0 + o.s0, self.s1 + o.s1, self.s2 + o.s2, self.s3 + o.s3)
    }
}

/// 2x2 complex operator acting on Jones vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JonesOperator {
    pub m: [[Complex64; 2]; 2],
}

impl JonesOperator {
    pub const fn new(m: [[Complex64; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn real(m: [[f64; 2]; 2]) -> Self {
        let c = |x: f64| Complex64::new(x, 0.0);
        Self::new([[c(m[0][0]), c(m[0][1])], [c(m[1][0]), c(m[1][1])]])
    }

    pub const fn identity() -> Self {
        Self::new([[ONE, ZERO], [ZERO, ONE]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        let m = &self.m;
        JonesVector::new(
            m[0][0] * v.c0 + m[0][1] * v.c1,
            m[1][0] * v.c0 + m[1][1] * v.c1,
        )
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0_f64;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.m[r][c] - other.m[r][c]).norm());
            }
        }
        d
    }

    /// Largest elementwise deviation of `U†U` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Self::identity())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn to_matrix(&self) -> CMatrix {
        let m = &self.m;
        CMatrix::from_row_major(2, alloc::vec![m[0][0], m[0][1], m[1][0], m[1][1]])
            .expect("2x2 has four entries")
    }

    pub fn from_matrix(m: &CMatrix) -> Option<Self> {
        (m.dim() == 2).then(|| Self::new([[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]))
    }
}

impl Mul for JonesOperator {
    type Output = JonesOperator;
    fn mul(self, rhs: JonesOperator) -> JonesOperator {
        let (a, b) = (&self.m, &rhs.m);
        let mut out = [[ZERO; 2]; 2];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        JonesOperator::new(out)
    }
}

/// 4x4 real matrix acting on Stokes vectors.
#[derive(Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MuellerMatrix {
    pub m: [[f64; 4]; 4],
}

impl fmt::Debug for MuellerMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.m.iter()).finish()
    }
}

impl MuellerMatrix {
    pub const fn new(m: [[f64; 4]; 4]) -> Self {
        Self { m }
    }

    pub const fn identity() -> Self {
        Self::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = 0.0_f64;
        for r in 0..4 {
            for c in 0..4 {
                d = d.max((self.m[r][c] - other.m[r][c]).abs());
            }
        }
        d
    }

    pub fn transpose(&self) -> Self {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in self.m.iter().enumerate() {
            for (c, &x) in row.iter().enumerate() {
                out[c][r] = x;
            }
        }
        Self::new(out)
    }
}

impl Mul for MuellerMatrix {
    type Output = MuellerMatrix;
    fn mul(self, rhs: MuellerMatrix) -> MuellerMatrix {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, cell) in row.iter_mut().enumerate() {
                *cell = (0..4).map(|k| self.m[r][k] * rhs.m[k][c]).sum();
            }
        }
        MuellerMatrix::new(out)
    }
}

/// Planar rotation `[[cos θ, −sin θ], [sin θ, cos θ]]`, θ in degrees.
pub fn rotation_operator(theta: f64) -> JonesOperator {
    let (s, c) = sin_cos_deg(theta);
    JonesOperator::real([[c, -s], [s, c]])
}

/// Mueller matrix of an ideal half-wave plate with its fast axis at `m` degrees.
///
/// Rows `(1,0,0,0)`, `(0,cos4m,sin4m,0)`, `(0,sin4m,−cos4m,0)`, `(0,0,0,−1)`.
/// The plate reflects the linear polarization angle about its fast axis.
pub fn half_wave_plate_mueller(m: f64) -> MuellerMatrix {
    let (s, c) = sin_cos_deg(4.0 * m);
    MuellerMatrix::new([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, c, s, 0.0],
        [0.0, s, -c, 0.0],
        [0.0, 0.0, 0.0, -1.0],
    ])
}

/// Jones matrix of the same plate, `[[cos2m, sin2m], [sin2m, −cos2m]]`.
pub fn half_wave_plate_jones(m: f64) -> JonesOperator {
    let (s, c) = sin_cos_deg(2.0 * m);
    JonesOperator::real([[c, s], [s, -c]])
}

/// Ideal linear polarizer with its transmission axis at `angle` degrees.
pub fn linear_polarizer_mueller(angle: f64) -> MuellerMatrix {
    let (s, c) = sin_cos_deg(2.0 * angle);
    MuellerMatrix::new([
        [0.5, 0.5 * c, 0.5 * s, 0.0],
        [0.5 * c, 0.5 * c * c, 0.5 * c * s, 0.0],
        [0.5 * s, 0.5 * c * s, 0.5 * s * s, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
}

/// `M·s`.
pub fn apply_mueller(m: &MuellerMatrix, s: &StokesVector) -> StokesVector {
    let v = s.as_array();
    let mut out = [0.0; 4];
    for (r, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|k| m.m[r][k] * v[k]).sum();
    }
    StokesVector::from_array(out)
}

/// Stokes vector of a normalized Jones state carrying `intensity`.
pub fn jones_to_stokes(v: &JonesVector, intensity: f64) -> Result<StokesVector, PolarizationError> {
    let n = v.norm_sqr();
    if !v.is_normalized(NORMALIZATION_TOL) {
        return Err(PolarizationError::NotNormalized { norm_sqr: n });
    }
    let s = stokes_of(v).scaled(intensity / n);
    Ok(StokesVector { s0: intensity, ..s })
}

// Unnormalized map: s0 carries |c0|²+|c1|².
fn stokes_of(v: &JonesVector) -> StokesVector {
    let cross = v.c0.conj() * v.c1;
    StokesVector::new(
        v.c0.norm_sqr() + v.c1.norm_sqr(),
        v.c0.norm_sqr() - v.c1.norm_sqr(),
        2.0 * cross.re,
        2.0 * cross.im,
    )
}

/// Jones state (up to global phase) of a fully polarized Stokes vector.
///
/// The returned vector is normalized; intensity is discarded. Partially
/// polarized input is projected onto its polarized part.
pub fn stokes_to_jones(s: &StokesVector) -> Result<JonesVector, PolarizationError> {
    let p = s.polarized_intensity();
    if !s.is_physical(NORMALIZATION_TOL) || p == 0.0 {
        return Err(PolarizationError::Unphysical);
    }
    let (x, y, z) = (s.s1 / p, s.s2 / p, s.s3 / p);
    // Poincaré sphere: c0 = cos(ϑ/2), c1 = e^{iφ} sin(ϑ/2) with x = cos ϑ.
    let a = Float::sqrt(((1.0 + x) / 2.0).max(0.0));
    let b = Float::sqrt(((1.0 - x) / 2.0).max(0.0));
    let r = Float::sqrt(y * y + z * z);
    let c1 = if r > 0.0 {
        Complex64::new(y / r, z / r) * b
    } else {
        Complex64::new(b, 0.0)
    };
    Ok(JonesVector::new(Complex64::new(a, 0.0), c1))
}

/// Mueller matrix induced by a unitary Jones operator.
///
/// Entry `(i, j)` is `½·tr(σᵢ U σⱼ U†)` with `σ = (I, Z, X, Y)` matching the
/// Stokes component ordering.
pub fn jones_to_mueller(u: &JonesOperator) -> Result<MuellerMatrix, PolarizationError> {
    let deviation = u.unitarity_deviation();
    if deviation > ALGEBRA_TOL {
        return Err(PolarizationError::NotUnitary { deviation });
    }
    let sigma = stokes_basis();
    let ud = u.adjoint();
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let prod = sigma[i] * *u * sigma[j] * ud;
            *cell = 0.5 * (prod.m[0][0] + prod.m[1][1]).re;
        }
    }
    Ok(MuellerMatrix::new(out))
}

fn stokes_basis() -> [JonesOperator; 4] {
    let i = Complex64::new(0.0, 1.0);
    [
        JonesOperator::identity(),
        JonesOperator::real([[1.0, 0.0], [0.0, -1.0]]),
        JonesOperator::real([[0.0, 1.0], [1.0, 0.0]]),
        JonesOperator::new([[ZERO, -i], [i, ZERO]]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TRIG_TOL;
    use approx::assert_abs_diff_eq;

    fn grid(step: usize) -> impl Iterator<Item = f64> {
        (0..360).step_by(step).map(|d| d as f64)
    }

    fn assert_stokes(actual: StokesVector, expected: [f64; 4], tol: f64) {
        let d = actual.max_abs_diff(&StokesVector::from_array(expected));
        assert!(d <= tol, "{actual:?} vs {expected:?} (diff {d:e})");
    }

    #[test]
    fn rotation_zero_is_identity() {
        assert_eq!(rotation_operator(0.0), JonesOperator::identity());
    }

    #[test]
    fn quarter_turn_maps_h_to_v_exactly() {
        let out = rotation_operator(90.0).apply(&JonesVector::horizontal());
        assert_eq!(out, JonesVector::vertical());
    }

    #[test]
    fn rotations_compose_additively() {
        // direct product of the two matrices vs the closed form at θ+φ
        let (t, p) = (33.7, -120.2);
        let prod = rotation_operator(t) * rotation_operator(p);
        assert!(prod.max_abs_diff(&rotation_operator(t + p)) <= 1e-12);
    }

    #[test]
    fn half_wave_mueller_reference_angles() {
        let m0 = half_wave_plate_mueller(0.0);
        let diag = MuellerMatrix::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
        ]);
        assert_eq!(m0, diag);
        let m45 = half_wave_plate_mueller(45.0);
        let expect = MuellerMatrix::new([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, -1.0],
        ]);
        assert_eq!(m45, expect);
    }

    #[test]
    fn half_wave_mueller_is_an_involution_on_37_angles() {
        for k in 0..37 {
            let m = -180.0 + 10.0 * k as f64;
            let hw = half_wave_plate_mueller(m);
            assert!((hw * hw).max_abs_diff(&MuellerMatrix::identity()) <= ALGEBRA_TOL);
            let s = StokesVector::new(1.0, 0.3, -0.5, 0.2);
            let back = apply_mueller(&hw, &apply_mueller(&hw, &s));
            assert!(back.max_abs_diff(&s) <= ALGEBRA_TOL);
        }
    }

    #[test]
    fn half_wave_jones_reference_angles() {
        assert_eq!(half_wave_plate_jones(0.0), JonesOperator::real([[1.0, 0.0], [0.0, -1.0]]));
        assert_eq!(half_wave_plate_jones(45.0), JonesOperator::real([[0.0, 1.0], [1.0, 0.0]]));
    }

    #[test]
    fn half_wave_jones_induces_half_wave_mueller() {
        for m in grid(10) {
            let induced = jones_to_mueller(&half_wave_plate_jones(m)).unwrap();
            assert!(induced.max_abs_diff(&half_wave_plate_mueller(m)) <= ALGEBRA_TOL, "m = {m}");
        }
    }

    #[test]
    fn polarizer_obeys_malus() {
        let h = StokesVector::horizontal();
        assert_abs_diff_eq!(apply_mueller(&linear_polarizer_mueller(0.0), &h).s0, 1.0);
        assert_abs_diff_eq!(apply_mueller(&linear_polarizer_mueller(90.0), &h).s0, 0.0, epsilon = 1e-15);
        // cos²30° = 0.75 by direct evaluation
        let s30 = StokesVector::linear(30.0, 1.0);
        assert_abs_diff_eq!(apply_mueller(&linear_polarizer_mueller(0.0), &s30).s0, 0.75, epsilon = 1e-12);
        for a in grid(15) {
            for p in grid(45) {
                let out = apply_mueller(&linear_polarizer_mueller(p), &StokesVector::linear(a, 1.0));
                let expected = Float::cos((a - p).to_radians()).powi(2);
                assert_abs_diff_eq!(out.s0, expected, epsilon = TRIG_TOL);
            }
        }
    }

    #[test]
    fn apply_mueller_examples() {
        let s = StokesVector::new(2.0, 0.5, -1.0, 0.25);
        assert_eq!(apply_mueller(&MuellerMatrix::identity(), &s), s);
        let h = StokesVector::horizontal();
        assert_eq!(apply_mueller(&half_wave_plate_mueller(0.0), &h), h);
        // cos 90° = 0, sin 90° = 1 substituted into the plate matrix
        assert_stokes(apply_mueller(&half_wave_plate_mueller(22.5), &h), [1.0, 0.0, 1.0, 0.0], 0.0);
    }

    #[test]
    fn jones_to_stokes_examples() {
        let h = jones_to_stokes(&JonesVector::horizontal(), 1.0).unwrap();
        assert_stokes(h, [1.0, 1.0, 0.0, 0.0], 0.0);
        let v = jones_to_stokes(&JonesVector::vertical(), 1.0).unwrap();
        assert_stokes(v, [1.0, -1.0, 0.0, 0.0], 0.0);
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let d = JonesVector::new(Complex64::new(r, 0.0), Complex64::new(r, 0.0));
        assert_stokes(jones_to_stokes(&d, 1.0).unwrap(), [1.0, 0.0, 1.0, 0.0], 1e-15);
        let s = jones_to_stokes(&d, 3.0).unwrap();
        assert_abs_diff_eq!(s.s0, 3.0);
        assert_abs_diff_eq!(s.degree_of_polarization(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn jones_to_stokes_rejects_unnormalized() {
        let v = JonesVector::new(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        assert!(matches!(
            jones_to_stokes(&v, 1.0),
            Err(PolarizationError::NotNormalized { .. })
        ));
    }

    #[test]
    fn jones_to_mueller_examples() {
        let id = jones_to_mueller(&JonesOperator::identity()).unwrap();
        assert!(id.max_abs_diff(&MuellerMatrix::identity()) <= ALGEBRA_TOL);

        // R(15°) rotates the (s1, s2) plane by 30°; evaluate on H and D.
        let m = jones_to_mueller(&rotation_operator(15.0)).unwrap();
        let (s30, c30) = sin_cos_deg(30.0);
        assert_stokes(apply_mueller(&m, &StokesVector::horizontal()), [1.0, c30, s30, 0.0], 1e-12);
        assert_stokes(
            apply_mueller(&m, &StokesVector::new(1.0, 0.0, 1.0, 0.0)),
            [1.0, -s30, c30, 0.0],
            1e-12,
        );
        assert_stokes(
            apply_mueller(&m, &StokesVector::new(1.0, 0.0, 0.0, 1.0)),
            [1.0, 0.0, 0.0, 1.0],
            1e-12,
        );

        let hw = jones_to_mueller(&half_wave_plate_jones(30.0)).unwrap();
        assert!(hw.max_abs_diff(&half_wave_plate_mueller(30.0)) <= ALGEBRA_TOL);
    }

    #[test]
    fn jones_to_mueller_rejects_non_unitary() {
        let p = JonesOperator::real([[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(jones_to_mueller(&p), Err(PolarizationError::NotUnitary { .. })));
    }

    #[test]
    fn calculus_diagram_commutes_for_every_element() {
        let states = [
            JonesVector::horizontal(),
            JonesVector::linear(37.0),
            JonesVector::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)),
            JonesVector::new(Complex64::new(0.28, 0.6), Complex64::new(-0.5, 0.55)).normalized().unwrap(),
        ];
        for a in grid(10) {
            for op in [rotation_operator(a), half_wave_plate_jones(a)] {
                assert!(op.is_unitary(ALGEBRA_TOL));
                let mm = jones_to_mueller(&op).unwrap();
                for v in &states {
                    let via_jones = jones_to_stokes(&op.apply(v), 1.0).unwrap();
                    let via_mueller = apply_mueller(&mm, &jones_to_stokes(v, 1.0).unwrap());
                    assert!(via_jones.max_abs_diff(&via_mueller) <= ALGEBRA_TOL);
                }
            }
        }
    }

    #[test]
    fn stokes_to_jones_round_trips_up_to_phase() {
        let v = JonesVector::new(Complex64::new(0.28, 0.6), Complex64::new(-0.5, 0.55)).normalized().unwrap();
        let back = stokes_to_jones(&jones_to_stokes(&v, 2.5).unwrap()).unwrap();
        assert!(back.eq_up_to_phase(&v, 1e-12));
        assert!(stokes_to_jones(&StokesVector::new(1.0, 2.0, 0.0, 0.0)).is_err());
        assert!(JonesVector::vertical().eq_up_to_phase(
            &stokes_to_jones(&StokesVector::new(1.0, -1.0, 0.0, 0.0)).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn half_wave_plates_preserve_intensity() {
        for m in grid(5) {
            let s = StokesVector::new(1.7, 0.4, -0.9, 1.1);
            assert_eq!(apply_mueller(&half_wave_plate_mueller(m), &s).s0, s.s0);
        }
    }

    #[test]
    fn linear_angle_reads_back() {
        for a in [0.0, 10.0, 89.0, 120.0, 179.0] {
            assert_abs_diff_eq!(StokesVector::linear(a, 1.0).linear_angle(), a, epsilon = 1e-9);
        }
    }
}
