//! The free-space bench, element by element, in Stokes/Mueller form.
//!
//! ```text
//! laser ─ 50/50 ─┬─ shutter₁ ─ polarizer 90° ─ mirror ─┐
//!                └─ shutter₀ ─ polarizer 0°  ─ mirror ─┴─ combiner
//!   ─ HWP Alice₁(x) ─ HWP Bob₁(y) ─ mirror ─ HWP Alice₂(−x) ─ mirror ─ HWP Bob₂(−y)
//!   ─ 50/50 ─┬─ polarizer 90° ─ detector₁
//!            └─ polarizer 0°  ─ detector₀
//! ```
//!
//! Shutter₁ (upper arm) opens for a 1, shutter₀ for a 0. Splitters are
//! lossless and polarization-neutral, as are mirrors.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::detector::{detector_click, DetectorError, DetectorModel, DetectorOutcome};
use crate::polarization::{apply_mueller, half_wave_plate_mueller, linear_polarizer_mueller, StokesVector};
use crate::protocol::ProtocolBit;
use crate::{normalize_deg, ALGEBRA_TOL, TRIG_TOL};

/// Physical constants of the bench. Units: nm, mW, Hz, ms, deg, deg/s.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BenchConfig {
    /// nm
    pub wavelength: f64,
    /// mW
    pub source_power: f64,
    /// Intended-to-orthogonal intensity ratio of the laser.
    pub source_extinction: f64,
    /// Hz, per shutter
    pub shutter_max_rate: f64,
    /// ms
    pub shutter_min_on: f64,
    /// deg/s
    pub rotator_max_speed: f64,
    /// deg
    pub rotator_range: f64,
    /// Alice's plate pair `(x, −x)`, degrees.
    pub alice_plate_angles: [f64; 2],
    /// Bob's plate pair `(y, −y)`, degrees.
    pub bob_plate_angles: [f64; 2],
    /// Bit slot length in ms.
    pub slot_duration: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            wavelength: 632.8,
            source_power: 0.8,
            source_extinction: 500.0,
            shutter_max_rate: 25.0,
            shutter_min_on: 10.0,
            rotator_max_speed: 25.0,
            rotator_range: 360.0,
            alice_plate_angles: [30.0, -30.0],
            bob_plate_angles: [40.0, -40.0],
            slot_duration: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("configuration value `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("`{0}` must be a pair of mutually inverse angles, got {1:?}")]
    PlatesNotInverse(&'static str, [f64; 2]),
    #[error("both shutters are open: the combiner cannot merge two beams")]
    SimultaneousOpen,
    #[error("cannot send an empty message")]
    EmptyMessage,
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Timing(#[from] super::timing::ConstraintViolation),
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
}

impl BenchConfig {
    /// Plates set at `(x, −x)` for Alice and `(y, −y)` for Bob.
    pub fn with_angles(x: f64, y: f64) -> Self {
        Self {
            alice_plate_angles: [x, -x],
            bob_plate_angles: [y, -y],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = [
            ("wavelength", self.wavelength),
            ("source_power", self.source_power),
            ("source_extinction", self.source_extinction),
            ("shutter_max_rate", self.shutter_max_rate),
            ("shutter_min_on", self.shutter_min_on),
            ("rotator_max_speed", self.rotator_max_speed),
            ("rotator_range", self.rotator_range),
            ("slot_duration", self.slot_duration),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(BenchError::NonPositive(name));
            }
        }
        for (name, pair) in [
            ("alice_plate_angles", self.alice_plate_angles),
            ("bob_plate_angles", self.bob_plate_angles),
        ] {
            let residue = normalize_deg(pair[0] + pair[1]);
            if residue.min(360.0 - residue) > TRIG_TOL {
                return Err(BenchError::PlatesNotInverse(name, pair));
            }
        }
        Ok(())
    }

    /// Laser output: linear at 45° so both encoding polarizers pass equal
    /// power, depolarized by the extinction ratio.
    pub fn source_stokes(&self) -> StokesVector {
        let r = self.source_extinction;
        let dop = (r - 1.0) / (r + 1.0);
        StokesVector::new(self.source_power, 0.0, self.source_power * dop, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Arm {
    /// Carries 1s at 90° on the way in; ends at detector₁.
    Upper,
    /// Carries 0s at 0° on the way in; ends at detector₀.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Plate {
    Alice1,
    Bob1,
    Alice2,
    Bob2,
}

impl Plate {
    pub const ALL: [Plate; 4] = [Plate::Alice1, Plate::Bob1, Plate::Alice2, Plate::Bob2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Alice1 => "alice1",
            Self::Bob1 => "bob1",
            Self::Alice2 => "alice2",
            Self::Bob2 => "bob2",
        }
    }
}

impl fmt::Display for Plate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Element {
    Source,
    /// Splits one beam into both arms, or (after the plates) feeds the detectors.
    Splitter,
    Shutter { arm: Arm, opens_for: ProtocolBit },
    Polarizer { arm: Arm, angle: f64 },
    Mirror { arm: Option<Arm> },
    Combiner,
    HalfWavePlate { plate: Plate, angle: f64 },
    Detector { arm: Arm, bit: ProtocolBit },
}

/// The ordered element list of the bench.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPath {
    pub elements: Vec<Element>,
}

impl BeamPath {
    pub fn new(config: &BenchConfig) -> Self {
        use Element::*;
        let [x, minus_x] = config.alice_plate_angles;
        let [y, minus_y] = config.bob_plate_angles;
        let elements = alloc::vec![
            Source,
            Splitter,
            Shutter { arm: Arm::Upper, opens_for: ProtocolBit::One },
            Polarizer { arm: Arm::Upper, angle: 90.0 },
            Mirror { arm: Some(Arm::Upper) },
            Shutter { arm: Arm::Lower, opens_for: ProtocolBit::Zero },
            Polarizer { arm: Arm::Lower, angle: 0.0 },
            Mirror { arm: Some(Arm::Lower) },
            Combiner,
            HalfWavePlate { plate: Plate::Alice1, angle: x },
            HalfWavePlate { plate: Plate::Bob1, angle: y },
            Mirror { arm: None },
            HalfWavePlate { plate: Plate::Alice2, angle: minus_x },
            Mirror { arm: None },
            HalfWavePlate { plate: Plate::Bob2, angle: minus_y },
            Splitter,
            Polarizer { arm: Arm::Upper, angle: 90.0 },
            Detector { arm: Arm::Upper, bit: ProtocolBit::One },
            Polarizer { arm: Arm::Lower, angle: 0.0 },
            Detector { arm: Arm::Lower, bit: ProtocolBit::Zero },
        ];
        Self { elements }
    }

    /// Propagates one bit slot through the path with the given shutter states.
    pub fn propagate(&self, config: &BenchConfig, open: impl Fn(Arm) -> bool) -> Result<Propagation, BenchError> {
        let mut beam = Beam::Dark;
        let mut plates_output = StokesVector::new(0.0, 0.0, 0.0, 0.0);
        let mut detectors = [0.0, 0.0];
        for element in &self.elements {
            beam = match (*element, beam) {
                (Element::Source, _) => Beam::Single(config.source_stokes()),
                (Element::Splitter, Beam::Single(s)) => Beam::Split {
                    upper: s.scaled(0.5),
                    lower: s.scaled(0.5),
                },
                (Element::Splitter, other) => other,
                (Element::Shutter { arm, .. }, b) if !open(arm) => b.map_arm(arm, |_| StokesVector::new(0.0, 0.0, 0.0, 0.0)),
                (Element::Shutter { .. }, b) => b,
                (Element::Polarizer { arm, angle }, b) => {
                    b.map_arm(arm, |s| apply_mueller(&linear_polarizer_mueller(angle), &s))
                }
                (Element::Mirror { .. }, b) => b,
                (Element::Combiner, Beam::Split { upper, lower }) => {
                    if upper.s0 > 0.0 && lower.s0 > 0.0 {
                        return Err(BenchError::SimultaneousOpen);
                    }
                    Beam::Single(upper + lower)
                }
                (Element::Combiner, b) => b,
                (Element::HalfWavePlate { plate, angle }, Beam::Single(s)) => {
                    let out = apply_mueller(&half_wave_plate_mueller(angle), &s);
                    if plate == Plate::Bob2 {
                        plates_output = out;
                    }
                    Beam::Single(out)
                }
                (Element::HalfWavePlate { .. }, b) => b,
                (Element::Detector { arm, bit }, b) => {
                    // Rounding can leave a crossed polarizer at -1e-17.
                    detectors[bit.as_u8() as usize] = b.arm(arm).s0.max(0.0);
                    b
                }
            };
        }
        Ok(Propagation {
            plates_output,
            detector_intensities: (detectors[0], detectors[1]),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Beam {
    Dark,
    Single(StokesVector),
    Split { upper: StokesVector, lower: StokesVector },
}

impl Beam {
    fn map_arm(self, arm: Arm, f: impl FnOnce(StokesVector) -> StokesVector) -> Self {
        match (self, arm) {
            (Beam::Split { upper, lower }, Arm::Upper) => Beam::Split { upper: f(upper), lower },
            (Beam::Split { upper, lower }, Arm::Lower) => Beam::Split { upper, lower: f(lower) },
            (other, _) => other,
        }
    }

    fn arm(self, arm: Arm) -> StokesVector {
        match (self, arm) {
            (Beam::Split { upper, .. }, Arm::Upper) => upper,
            (Beam::Split { lower, .. }, Arm::Lower) => lower,
            (Beam::Single(s), _) => s,
            (Beam::Dark, _) => StokesVector::new(0.0, 0.0, 0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Propagation {
    /// Stokes vector leaving Bob's second plate.
    pub plates_output: StokesVector,
    /// Intensities reaching detector₀ and detector₁.
    pub detector_intensities: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchReading {
    pub outcome: DetectorOutcome,
    pub propagation: Propagation,
}

impl BenchReading {
    /// Plate output normalized to unit intensity.
    pub fn output_stokes(&self) -> StokesVector {
        let s = self.propagation.plates_output;
        if s.s0 > 0.0 {
            s.scaled(1.0 / s.s0)
        } else {
            s
        }
    }
}

/// Sends one bit across the bench with the plates fixed at the configured angles.
pub fn bench_transmit_bit<R: Rng + ?Sized>(
    bit: ProtocolBit,
    config: &BenchConfig,
    detector: &DetectorModel,
    rng: &mut R,
) -> Result<BenchReading, BenchError> {
    config.validate()?;
    let path = BeamPath::new(config);
    let propagation = path.propagate(config, |arm| match arm {
        Arm::Upper => bit == ProtocolBit::One,
        Arm::Lower => bit == ProtocolBit::Zero,
    })?;
    let (i0, i1) = propagation.detector_intensities;
    let outcome = detector_click(i0, i1, detector, rng)?;
    Ok(BenchReading { outcome, propagation })
}

/// Product of the four plate matrices in beam order, `M(−y)·M(−x)·M(y)·M(x)`.
pub fn plate_product(x: f64, y: f64) -> crate::polarization::MuellerMatrix {
    half_wave_plate_mueller(-y) * half_wave_plate_mueller(-x) * half_wave_plate_mueller(y) * half_wave_plate_mueller(x)
}

/// True when the four-plate product is the identity within [`ALGEBRA_TOL`].
pub fn plates_are_identity(x: f64, y: f64) -> bool {
    plate_product(x, y).max_abs_diff(&crate::polarization::MuellerMatrix::identity()) <= ALGEBRA_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polarization::MuellerMatrix;
    use crate::seed::SimRng;
    use rand::SeedableRng;

    fn send(bit: ProtocolBit, x: f64, y: f64) -> BenchReading {
        let mut rng = SimRng::seed_from_u64(0);
        bench_transmit_bit(bit, &BenchConfig::with_angles(x, y), &DetectorModel::ideal(), &mut rng).unwrap()
    }

    #[test]
    fn reference_instance_returns_horizontal_light() {
        let r = send(ProtocolBit::Zero, 30.0, 40.0);
        assert_eq!(r.outcome, DetectorOutcome::Click(ProtocolBit::Zero));
        assert!(r.output_stokes().max_abs_diff(&StokesVector::horizontal()) <= ALGEBRA_TOL);
    }

    #[test]
    fn aligned_plates_keep_vertical() {
        let r = send(ProtocolBit::One, 0.0, 0.0);
        assert_eq!(r.outcome, DetectorOutcome::Click(ProtocolBit::One));
    }

    #[test]
    fn grid_decodes_both_bits() {
        for x in (0..360).step_by(15) {
            for y in (0..360).step_by(15) {
                for bit in [ProtocolBit::Zero, ProtocolBit::One] {
                    assert_eq!(send(bit, x as f64, y as f64).outcome, DetectorOutcome::Click(bit));
                }
            }
        }
    }

    #[test]
    fn each_plate_flips_s3_and_four_restore_it() {
        let circ = StokesVector::new(1.0, 0.0, 0.0, 1.0);
        let mut s = circ;
        for (k, angle) in [30.0, 40.0, -30.0, -40.0].into_iter().enumerate() {
            s = apply_mueller(&half_wave_plate_mueller(angle), &s);
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            assert!((s.s3 - sign).abs() <= ALGEBRA_TOL);
        }
        assert!(s.max_abs_diff(&circ) <= ALGEBRA_TOL);
    }

    #[test]
    fn literal_left_to_right_product_is_not_identity() {
        // M1(x)·M2(−x)·M3(y)·M4(−y) read as a pure product
        let lit = half_wave_plate_mueller(30.0)
            * half_wave_plate_mueller(-30.0)
            * half_wave_plate_mueller(40.0)
            * half_wave_plate_mueller(-40.0);
        assert!(lit.max_abs_diff(&MuellerMatrix::identity()) > 0.1);
        assert!(plates_are_identity(30.0, 40.0));
    }

    #[test]
    fn splitter_and_combiner_conserve_intensity() {
        let cfg = BenchConfig::default();
        let src = cfg.source_stokes();
        let half = src.scaled(0.5);
        assert!((half.s0 + half.s0 - src.s0).abs() <= ALGEBRA_TOL);
        // Without polarizers the combined beam carries the open arm's full half.
        let path = BeamPath {
            elements: alloc::vec![
                Element::Source,
                Element::Splitter,
                Element::Shutter { arm: Arm::Lower, opens_for: ProtocolBit::Zero },
                Element::Combiner,
                Element::HalfWavePlate { plate: Plate::Bob2, angle: 0.0 },
            ],
        };
        let p = path.propagate(&cfg, |arm| arm == Arm::Upper).unwrap();
        assert!((p.plates_output.s0 - src.s0 / 2.0).abs() <= ALGEBRA_TOL);
        let both = path.propagate(&cfg, |_| true);
        assert_eq!(both, Err(BenchError::SimultaneousOpen));
    }

    #[test]
    fn config_validation() {
        assert!(BenchConfig::default().validate().is_ok());
        let bad = BenchConfig {
            alice_plate_angles: [30.0, 30.0],
            ..BenchConfig::default()
        };
        assert!(matches!(bad.validate(), Err(BenchError::PlatesNotInverse("alice_plate_angles", _))));
        let wrapped = BenchConfig {
            bob_plate_angles: [40.0, 320.0],
            ..BenchConfig::default()
        };
        assert!(wrapped.validate().is_ok());
        let bad = BenchConfig {
            shutter_max_rate: 0.0,
            ..BenchConfig::default()
        };
        assert_eq!(bad.validate(), Err(BenchError::NonPositive("shutter_max_rate")));
    }

    #[test]
    fn source_extinction_sets_degree_of_polarization() {
        let s = BenchConfig::default().source_stokes();
        assert!((s.degree_of_polarization() - 499.0 / 501.0).abs() < 1e-15);
        assert!((s.s0 - 0.8).abs() < 1e-15);
    }
}
