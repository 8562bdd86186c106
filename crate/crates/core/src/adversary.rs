//! Eavesdropping strategies and the Monte Carlo experiment driver.
//!
//! Eve sits on the line and sees every stage message. She can measure and
//! resend, passively tap photons off a multi-photon pulse, or entangle the
//! pulse with an ancilla. Bob's disturbance and Eve's guessing accuracy are
//! aggregated into an [`AttackReport`].

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use num_traits::Float;
use rand::Rng;

use crate::bench::DetectorModel;
use crate::linalg::{random_unitary, CMatrix, LinalgError, StateVector};
use crate::polarization::JonesVector;
use crate::protocol::{
    run_session_over, Channel, IdealChannel, ProtocolBit, ProtocolError, SessionConfig, SessionMode, StageMessage,
};
use crate::pulse::{PhotonPulse, PulseError};
use crate::seed::{derive_seed, rng_for, stream, SimRng};
use crate::{sin_cos_deg, ALGEBRA_TOL, TRIG_TOL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdversaryError {
    #[error("stage must be 1, 2 or 3, got {0}")]
    BadStage(u8),
    #[error("no stage selected")]
    NoStages,
    #[error("cannot take {taken} photons per tapped pass from a {available}-photon pulse")]
    TooManyPhotons { taken: u32, available: u32 },
    #[error("experiment needs at least one trial")]
    NoTrials,
    #[error("probe is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },
    #[error("probe of dimension {probe} does not act on system (2) x ancilla ({ancilla})")]
    ProbeDimension { probe: usize, ancilla: usize },
    #[error("state `{0}` is not normalized")]
    NotNormalized(&'static str),
    #[error("the multi-stage estimator needs a polarization mode, got {0}")]
    UnsupportedMode(SessionMode),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl From<PulseError> for AdversaryError {
    fn from(e: PulseError) -> Self {
        Self::Protocol(e.into())
    }
}

/// A subset of the three transmissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageSet(u8);

impl StageSet {
    pub const ALL: StageSet = StageSet(0b111);

    pub fn single(stage: u8) -> Result<Self, AdversaryError> {
        check_stage(stage)?;
        Ok(Self(1 << (stage - 1)))
    }

    pub fn from_stages(stages: &[u8]) -> Result<Self, AdversaryError> {
        let mut mask = 0;
        for &s in stages {
            check_stage(s)?;
            mask |= 1 << (s - 1);
        }
        if mask == 0 {
            return Err(AdversaryError::NoStages);
        }
        Ok(Self(mask))
    }

    pub fn contains(self, stage: u8) -> bool {
        (1..=3).contains(&stage) && self.0 & (1 << (stage - 1)) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = u8> {
        (1..=3).filter(move |&s| self.contains(s))
    }
}

impl fmt::Display for StageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

fn check_stage(stage: u8) -> Result<(), AdversaryError> {
    if (1..=3).contains(&stage) {
        Ok(())
    } else {
        Err(AdversaryError::BadStage(stage))
    }
}

/// The interaction Eve's probe applies to pulse ⊗ ancilla (ancilla starts in `|0⟩`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProbeKind {
    Identity,
    /// Pulse controls a flip of the ancilla: copies H/V information.
    Cnot,
    /// A fresh Haar-random two-qubit unitary per trial.
    Random,
}

impl ProbeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Cnot => "cnot",
            Self::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Identity, Self::Cnot, Self::Random]
            .into_iter()
            .find(|k| k.name() == name)
    }

    pub fn matrix<R: Rng + ?Sized>(self, rng: &mut R) -> CMatrix {
        match self {
            Self::Identity => CMatrix::identity(4),
            Self::Cnot => {
                let mut m = CMatrix::zeros(4);
                let one = Complex64::new(1.0, 0.0);
                m[(0, 0)] = one;
                m[(1, 1)] = one;
                m[(2, 3)] = one;
                m[(3, 2)] = one;
                m
            }
            Self::Random => random_unitary(4, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EveStrategy {
    None,
    /// Measure the whole pulse in the linear basis `{basis, basis + 90°}` and resend.
    InterceptResend { basis: f64, stage: u8 },
    /// Take `k` photons off every pulse at the tapped stages and measure them.
    BeamSplit { k: u32, stages: StageSet, basis: f64 },
    /// Entangle the pulse with a qubit ancilla, then measure the ancilla.
    UnitaryProbe { probe: ProbeKind, stage: u8 },
}

impl EveStrategy {
    pub fn validate(&self, photons_per_pulse: u32) -> Result<(), AdversaryError> {
        match *self {
            Self::None => Ok(()),
            Self::InterceptResend { stage, .. } | Self::UnitaryProbe { stage, .. } => check_stage(stage),
            Self::BeamSplit { k, stages, .. } => {
                if stages.is_empty() {
                    return Err(AdversaryError::NoStages);
                }
                // Every tapped pass removes k photons from the same pulse.
                if k == 0 || k.saturating_mul(stages.len() as u32) >= photons_per_pulse {
                    return Err(AdversaryError::TooManyPhotons {
                        taken: k,
                        available: photons_per_pulse,
                    });
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for EveStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::InterceptResend { basis, stage } => write!(f, "intercept:stage={stage},basis={basis}"),
            Self::BeamSplit { k, stages, basis } => write!(f, "beamsplit:k={k},stages={stages},basis={basis}"),
            Self::UnitaryProbe { probe, stage } => write!(f, "probe:kind={},stage={stage}", probe.name()),
        }
    }
}

/// Projective measurement of `state`. Qubits are measured in the linear basis
/// `{basis, basis + 90°}`; larger states in the computational basis.
/// Returns the outcome index and the post-measurement state.
pub fn measure_state<R: Rng + ?Sized>(state: &StateVector, basis: f64, rng: &mut R) -> (u8, StateVector) {
    if state.dim() == 2 {
        let (s, c) = sin_cos_deg(basis);
        let e0 = JonesVector::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0));
        let e1 = JonesVector::new(Complex64::new(-s, 0.0), Complex64::new(c, 0.0));
        let a = state.amplitudes();
        let p0 = (a[0] * c + a[1] * s).norm_sqr() / state.norm_sqr();
        if rng.random::<f64>() < p0 {
            (0, e0.into())
        } else {
            (1, e1.into())
        }
    } else {
        let probs = state.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                k = i;
                break;
            }
        }
        (k as u8, StateVector::basis(state.dim(), k))
    }
}

/// Measures the pulse and resends it collapsed onto the outcome.
pub fn intercept_resend<R: Rng + ?Sized>(pulse: &PhotonPulse, basis: f64, rng: &mut R) -> (u8, PhotonPulse) {
    let (bit, state) = measure_state(pulse.state(), basis, rng);
    (bit, pulse.with_state(state))
}

/// Passive tap: `k` photons for Eve, the rest continue. Neither part is disturbed.
pub fn beam_split_siphon(pulse: &PhotonPulse, k: u32) -> Result<(PhotonPulse, PhotonPulse), AdversaryError> {
    pulse.split(k).map_err(|_| AdversaryError::TooManyPhotons {
        taken: k,
        available: pulse.photon_count(),
    })
}

/// Per-photon measurement results at one stage.
///
/// `counts[j][o]` counts photons measured in basis `basis + 45°·j` with outcome `o`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TapCounts {
    pub basis: f64,
    pub counts: [[u32; 2]; 2],
}

impl TapCounts {
    pub fn photons(&self) -> u32 {
        self.counts.iter().flatten().sum()
    }
}

/// Measures each photon of `pulse` independently. With `cycle`, photons
/// alternate between the bases `basis` and `basis + 45°`.
pub fn measure_photons<R: Rng + ?Sized>(pulse: &PhotonPulse, basis: f64, cycle: bool, rng: &mut R) -> TapCounts {
    let mut out = TapCounts {
        basis,
        counts: [[0; 2]; 2],
    };
    for i in 0..pulse.photon_count() {
        let j = if cycle { (i % 2) as usize } else { 0 };
        let (o, _) = measure_state(pulse.state(), basis + 45.0 * j as f64, rng);
        out.counts[j][o as usize] += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Observation {
    Measured(u8),
    Tapped(TapCounts),
    AncillaOutcome(u8),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EveRecord {
    pub block_index: u32,
    pub bit_index: u8,
    pub stage: u8,
    pub observation: Observation,
}

/// Eve's state: strategy, private randomness and everything she has seen.
#[derive(Debug, Clone)]
pub struct Eve {
    strategy: EveStrategy,
    rng: SimRng,
    probe: Option<CMatrix>,
    records: Vec<EveRecord>,
}

impl Eve {
    pub fn new(strategy: EveStrategy, seed: u64) -> Self {
        let mut rng = rng_for(seed, stream::EVE);
        let probe = match strategy {
            EveStrategy::UnitaryProbe { probe, .. } => Some(probe.matrix(&mut rng)),
            _ => None,
        };
        Self {
            strategy,
            rng,
            probe,
            records: Vec::new(),
        }
    }

    pub fn strategy(&self) -> &EveStrategy {
        &self.strategy
    }

    pub fn records(&self) -> &[EveRecord] {
        &self.records
    }

    /// Acts on one message in flight and returns what continues down the line.
    pub fn intercept(&mut self, msg: StageMessage) -> Result<StageMessage, AdversaryError> {
        let stage = msg.stage;
        let record = |observation| EveRecord {
            block_index: msg.block_index,
            bit_index: msg.bit_index,
            stage,
            observation,
        };
        match self.strategy {
            EveStrategy::None => Ok(msg),
            EveStrategy::InterceptResend { basis, stage: s } if s == stage => {
                let (bit, pulse) = intercept_resend(&msg.pulse, basis, &mut self.rng);
                self.records.push(record(Observation::Measured(bit)));
                Ok(StageMessage { pulse, ..msg })
            }
            EveStrategy::BeamSplit { k, stages, basis } if stages.contains(stage) => {
                let (tapped, forward) = beam_split_siphon(&msg.pulse, k)?;
                let counts = measure_photons(&tapped, basis, stages.len() > 1, &mut self.rng);
                self.records.push(record(Observation::Tapped(counts)));
                Ok(StageMessage { pulse: forward, ..msg })
            }
            EveStrategy::UnitaryProbe { stage: s, .. } if s == stage => {
                let probe = self.probe.as_ref().expect("probe strategies carry a matrix");
                let system = msg.pulse.state();
                let d = system.dim();
                let joint = probe.apply(&system.kron(&StateVector::basis(2, 0)))?;
                let a = joint.amplitudes();
                let p0: f64 = (0..d).map(|s| a[2 * s].norm_sqr()).sum::<f64>() / joint.norm_sqr();
                let outcome = u8::from(self.rng.random::<f64>() >= p0);
                let conditional = StateVector((0..d).map(|s| a[2 * s + outcome as usize]).collect()).normalized()?;
                self.records.push(record(Observation::AncillaOutcome(outcome)));
                Ok(StageMessage {
                    pulse: msg.pulse.with_state(conditional),
                    ..msg
                })
            }
            _ => Ok(msg),
        }
    }

    /// Eve's best guess for each of `n_bits` plaintext bits.
    pub fn guesses(&mut self, mode: SessionMode, n_bits: usize, block_size: usize) -> Result<Vec<ProtocolBit>, AdversaryError> {
        let mut by_bit: BTreeMap<(u32, u8), [Option<Observation>; 3]> = BTreeMap::new();
        for r in &self.records {
            by_bit.entry((r.block_index, r.bit_index)).or_default()[(r.stage - 1) as usize] = Some(r.observation.clone());
        }
        let key_of = |i: usize| ((i / block_size) as u32, (i % block_size) as u8);
        let mut out = Vec::with_capacity(n_bits);
        match self.strategy {
            EveStrategy::BeamSplit { stages, .. } if stages.len() > 1 => {
                let n_blocks = n_bits.div_ceil(block_size);
                for b in 0..n_blocks {
                    let len = block_size.min(n_bits - b * block_size);
                    let samples: Vec<[TapCounts; 3]> = (0..len)
                        .map(|j| {
                            let obs = by_bit.get(&key_of(b * block_size + j));
                            core::array::from_fn(|s| match obs.and_then(|o| o[s].as_ref()) {
                                Some(Observation::Tapped(t)) => *t,
                                _ => TapCounts::default(),
                            })
                        })
                        .collect();
                    out.extend(multi_stage_estimate(mode, &samples, &mut self.rng)?.bits);
                }
            }
            _ => {
                for i in 0..n_bits {
                    let obs = by_bit.get(&key_of(i));
                    let seen = obs.and_then(|o| o.iter().flatten().next());
                    let guess = match seen {
                        Some(Observation::Measured(b)) | Some(Observation::AncillaOutcome(b)) => *b == 1,
                        Some(Observation::Tapped(t)) => {
                            let [n0, n1] = t.counts[0];
                            if n0 == n1 {
                                self.rng.random()
                            } else {
                                n1 > n0
                            }
                        }
                        None => self.rng.random(),
                    };
                    out.push(ProtocolBit::from_bool(guess));
                }
            }
        }
        Ok(out)
    }
}

/// A [`Channel`] with Eve spliced in front of `inner`.
#[derive(Debug)]
pub struct EveChannel<C> {
    pub eve: Eve,
    pub inner: C,
}

impl<C: Channel> Channel for EveChannel<C> {
    fn carry(&mut self, msg: StageMessage) -> Result<StageMessage, ProtocolError> {
        let msg = self.eve.intercept(msg).map_err(|e| match e {
            AdversaryError::Protocol(p) => p,
            AdversaryError::Linalg(l) => ProtocolError::Linalg(l),
            AdversaryError::TooManyPhotons { taken, available } => {
                ProtocolError::Pulse(PulseError::TooManyTaken { taken, available })
            }
            _ => unreachable!("strategy validated before the session"),
        })?;
        self.inner.carry(msg)
    }
}

const GRID: usize = 60;
const GRID_STEP: f64 = 180.0 / GRID as f64;
const QUARTER: usize = GRID / 2;

/// Maximum-likelihood fit of one block's tapped samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStageEstimate {
    /// Alice's angle modulo 180°, on a 3° grid.
    pub theta_a: f64,
    /// Bob's angle modulo 180°, on a 3° grid.
    pub theta_b: f64,
    pub bits: Vec<ProtocolBit>,
}

// Log-likelihood of the counts for every polarization angle on the grid.
fn angle_loglik(t: &TapCounts) -> [f64; GRID] {
    let mut out = [0.0; GRID];
    if t.photons() == 0 {
        return out;
    }
    for (i, slot) in out.iter_mut().enumerate() {
        for j in 0..2 {
            let [n0, n1] = t.counts[j];
            if n0 + n1 == 0 {
                continue;
            }
            let (_, c) = sin_cos_deg(i as f64 * GRID_STEP - t.basis - 45.0 * j as f64);
            let p = (c * c).clamp(1e-12, 1.0 - 1e-12);
            *slot += n0 as f64 * p.ln() + n1 as f64 * (1.0 - p).ln();
        }
    }
    out
}

/// Joint maximum-likelihood estimate of `(θa, θb, bits)` for one block.
///
/// `samples[j][s]` holds bit `j`'s photons tapped at stage `s + 1`. The model
/// is the polarization angle each stage carries: in rotation mode
/// `θa + 90b`, `θa + θb + 90b`, `θb + 90b`; with half-wave plates the middle
/// stage carries `−(θa' + θb') + 90b` in terms of the plate images
/// `θa' = 2x`, `θb' = −2y`. Grid ties and bit ties are broken at random.
pub fn multi_stage_estimate<R: Rng + ?Sized>(
    mode: SessionMode,
    samples: &[[TapCounts; 3]],
    rng: &mut R,
) -> Result<MultiStageEstimate, AdversaryError> {
    let flip_middle = match mode {
        SessionMode::Rotation => false,
        SessionMode::HalfWavePlates => true,
        SessionMode::Family(_) => return Err(AdversaryError::UnsupportedMode(mode)),
    };
    let tables: Vec<[[f64; GRID]; 3]> = samples
        .iter()
        .map(|s| [angle_loglik(&s[0]), angle_loglik(&s[1]), angle_loglik(&s[2])])
        .collect();
    let middle = |a: usize, b: usize| if flip_middle { (2 * GRID - a - b) % GRID } else { (a + b) % GRID };
    let bit_ll = |t: &[[f64; GRID]; 3], a: usize, b: usize, bit: usize| {
        let q = bit * QUARTER;
        t[0][(a + q) % GRID] + t[1][(middle(a, b) + q) % GRID] + t[2][(b + q) % GRID]
    };

    let mut best = f64::NEG_INFINITY;
    let mut best_at = (0, 0);
    let mut ties = 0u32;
    for a in 0..GRID {
        for b in 0..GRID {
            let ll: f64 = tables
                .iter()
                .map(|t| bit_ll(t, a, b, 0).max(bit_ll(t, a, b, 1)))
                .sum();
            let tol = if best.is_finite() { 1e-9 * best.abs().max(1.0) } else { 0.0 };
            if ll > best + tol {
                best = ll;
                best_at = (a, b);
                ties = 1;
            } else if (ll - best).abs() <= tol {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best_at = (a, b);
                }
            }
        }
    }
    let (a, b) = best_at;
    let bits = tables
        .iter()
        .map(|t| {
            let (l0, l1) = (bit_ll(t, a, b, 0), bit_ll(t, a, b, 1));
            let one = if (l0 - l1).abs() <= 1e-9 * l0.abs().max(1.0) {
                rng.random()
            } else {
                l1 > l0
            };
            ProtocolBit::from_bool(one)
        })
        .collect();
    Ok(MultiStageEstimate {
        theta_a: a as f64 * GRID_STEP,
        theta_b: b as f64 * GRID_STEP,
        bits,
    })
}

/// Fraction of bits Eve guesses correctly by tapping `photons` photons at each
/// of `stages`, over `trials` single-block sessions of `block_size` bits.
///
/// Trial `t` draws its secrets and plaintext from a seed derived from
/// `(seed, t)` only, so runs at different photon counts are paired.
pub fn multi_stage_accuracy(
    mode: SessionMode,
    photons: u32,
    stages: StageSet,
    block_size: usize,
    trials: u64,
    seed: u64,
) -> Result<f64, AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::NoTrials);
    }
    let config = SessionConfig {
        mode,
        block_size,
        photons_per_pulse: photons * stages.len() as u32 + 1,
        ..SessionConfig::default()
    };
    let mut correct = 0u64;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t);
        let mut plain_rng = rng_for(trial_seed, stream::SESSION);
        let bits: Vec<ProtocolBit> = (0..block_size).map(|_| ProtocolBit::from_bool(plain_rng.random())).collect();
        let guesses = if photons == 0 {
            let mut eve_rng = rng_for(trial_seed, stream::EVE);
            (0..block_size).map(|_| ProtocolBit::from_bool(eve_rng.random())).collect()
        } else {
            let strategy = EveStrategy::BeamSplit { k: photons, stages, basis: 0.0 };
            let mut channel = EveChannel {
                eve: Eve::new(strategy, trial_seed),
                inner: IdealChannel,
            };
            run_session_over(&bits, &config, trial_seed, &mut channel)?;
            let samples: Vec<[TapCounts; 3]> = (0..block_size)
                .map(|j| {
                    core::array::from_fn(|s| {
                        channel
                            .eve
                            .records()
                            .iter()
                            .find(|r| r.bit_index as usize == j && r.stage as usize == s + 1)
                            .and_then(|r| match r.observation {
                                Observation::Tapped(t) => Some(t),
                                _ => None,
                            })
                            .unwrap_or_default()
                    })
                })
                .collect();
            multi_stage_estimate(mode, &samples, &mut channel.eve.rng)?.bits
        };
        correct += bits.iter().zip(&guesses).filter(|(a, b)| a == b).count() as u64;
    }
    Ok(correct as f64 / (trials * block_size as u64) as f64)
}

/// System states `ψ`, `φ` and the ancilla's initial state `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeStates {
    pub psi: JonesVector,
    pub phi: JonesVector,
    pub ancilla: StateVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProbeVerdict {
    /// Joint inner products preserved; the probe disturbs at least one state.
    Preserved,
    /// Both states left unchanged and the ancilla ends identical: Eve learned nothing.
    NothingLearned,
    /// `⟨ψ|φ⟩ = 0`: no constraint on the ancilla; orthogonal states are distinguishable.
    OrthogonalDistinguishable,
    /// The inner-product identity failed.
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// `⟨ψ|φ⟩⟨v|v⟩` before the probe.
    pub before: Complex64,
    /// `⟨U(ψ⊗v)|U(φ⊗v)⟩` after the probe.
    pub after: Complex64,
    pub deviation: f64,
    pub system_overlap: Complex64,
    /// Ancilla left with `ψ` when the probe returns `ψ ⊗ v′` unchanged.
    pub ancilla_after_psi: Option<StateVector>,
    /// Ancilla left with `φ` when the probe returns `φ ⊗ v′` unchanged.
    pub ancilla_after_phi: Option<StateVector>,
    /// `⟨v′_ψ|v′_φ⟩`, when the probe fixes both states.
    pub ancilla_overlap: Option<Complex64>,
    pub verdict: ProbeVerdict,
}

// Writes `w = ψ ⊗ v′` and returns v′ when the residual is within TRIG_TOL.
fn product_factor(w: &StateVector, psi: &StateVector) -> Option<StateVector> {
    let d = w.dim() / psi.dim();
    let (p, a) = (psi.amplitudes(), w.amplitudes());
    let v: StateVector = StateVector(
        (0..d)
            .map(|k| (0..psi.dim()).map(|s| p[s].conj() * a[s * d + k]).sum())
            .collect(),
    );
    let residual = psi
        .kron(&v)
        .amplitudes()
        .iter()
        .zip(a)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    (residual <= TRIG_TOL).then_some(v)
}

fn unitarity_deviation(m: &CMatrix) -> f64 {
    (&m.adjoint() * m)
        .max_abs_diff(&CMatrix::identity(m.dim()))
        .unwrap_or(f64::INFINITY)
}

/// Executes the inner-product argument for one probe on `system ⊗ ancilla`.
pub fn probe_inner_product_check(probe: &CMatrix, states: &ProbeStates) -> Result<ProbeReport, AdversaryError> {
    let deviation = unitarity_deviation(probe);
    if deviation > ALGEBRA_TOL {
        return Err(AdversaryError::NotUnitary { deviation });
    }
    if probe.dim() != 2 * states.ancilla.dim() {
        return Err(AdversaryError::ProbeDimension {
            probe: probe.dim(),
            ancilla: states.ancilla.dim(),
        });
    }
    for (name, ok) in [
        ("psi", states.psi.is_normalized(TRIG_TOL)),
        ("phi", states.phi.is_normalized(TRIG_TOL)),
        ("ancilla", (states.ancilla.norm_sqr() - 1.0).abs() <= TRIG_TOL),
    ] {
        if !ok {
            return Err(AdversaryError::NotNormalized(name));
        }
    }
    let psi: StateVector = states.psi.into();
    let phi: StateVector = states.phi.into();
    let v = &states.ancilla;
    let system_overlap = psi.inner(&phi)?;
    let before = system_overlap * v.inner(v)?;
    let out_psi = probe.apply(&psi.kron(v))?;
    let out_phi = probe.apply(&phi.kron(v))?;
    let after = out_psi.inner(&out_phi)?;
    let deviation = (after - before).norm();

    let ancilla_after_psi = product_factor(&out_psi, &psi);
    let ancilla_after_phi = product_factor(&out_phi, &phi);
    let ancilla_overlap = match (&ancilla_after_psi, &ancilla_after_phi) {
        (Some(a), Some(b)) => Some(a.inner(b)?),
        _ => None,
    };
    let verdict = if deviation > ALGEBRA_TOL {
        ProbeVerdict::Violated
    } else if system_overlap.norm() <= ALGEBRA_TOL {
        ProbeVerdict::OrthogonalDistinguishable
    } else {
        match ancilla_overlap {
            Some(o) if (o - 1.0).norm() <= TRIG_TOL => ProbeVerdict::NothingLearned,
            Some(_) => ProbeVerdict::Violated,
            None => ProbeVerdict::Preserved,
        }
    };
    Ok(ProbeReport {
        before,
        after,
        deviation,
        system_overlap,
        ancilla_after_psi,
        ancilla_after_phi,
        ancilla_overlap,
        verdict,
    })
}

/// A random probe on `qubit ⊗ ancilla` that returns `ψ ⊗ v` unchanged in its
/// system part for every qubit state `ψ`, while acting arbitrarily on the
/// part of the joint space where the ancilla is orthogonal to `v`.
pub fn fixing_probe<R: Rng + ?Sized>(ancilla: &StateVector, rng: &mut R) -> Result<CMatrix, AdversaryError> {
    let d = ancilla.dim();
    let v = ancilla.normalized()?;
    // Orthonormal ancilla basis with v first.
    let mut cols: Vec<Vec<Complex64>> = alloc::vec![v.0.clone()];
    let seed_cols = random_unitary(d, rng);
    for c in 0..d {
        if cols.len() == d {
            break;
        }
        let mut x: Vec<Complex64> = (0..d).map(|r| seed_cols[(r, c)]).collect();
        for q in &cols {
            let proj: Complex64 = q.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
            for (xi, qi) in x.iter_mut().zip(q) {
                *xi -= proj * qi;
            }
        }
        let n = Float::sqrt(x.iter().map(|z| z.norm_sqr()).sum::<f64>());
        if n > 1e-8 {
            cols.push(x.into_iter().map(|z| z / n).collect());
        }
    }
    let mut q = CMatrix::zeros(d);
    for (c, col) in cols.iter().enumerate() {
        for (r, &z) in col.iter().enumerate() {
            q[(r, c)] = z;
        }
    }
    let basis = CMatrix::identity(2).kron(&q);

    let rest: Vec<usize> = (0..2 * d).filter(|i| i % d != 0).collect();
    let inner = random_unitary(rest.len(), rng);
    let mut block = CMatrix::zeros(2 * d);
    for s in 0..2 {
        block[(s * d, s * d)] = Complex64::new(1.0, 0.0);
    }
    for (r, &i) in rest.iter().enumerate() {
        for (c, &j) in rest.iter().enumerate() {
            block[(i, j)] = inner[(r, c)];
        }
    }
    let w = CMatrix::identity(2).kron(&random_unitary(d, rng));
    Ok(&(&(&w * &basis) * &block) * &basis.adjoint())
}

/// 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn half_width(&self) -> f64 {
        (self.high - self.low) / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.low..=self.high).contains(&x)
    }
}

pub fn wilson_interval(successes: u64, n: u64) -> Interval {
    if n == 0 {
        return Interval { low: 0.0, high: 1.0 };
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z / denom * Float::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    Interval {
        low: (center - half).max(0.0),
        high: (center + half).min(1.0),
    }
}

/// Exact two-sided binomial test of `successes` out of `n` against `p = ½`.
pub fn binomial_test_half(successes: u64, n: u64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let m = successes.min(n - successes);
    if 2 * m == n {
        return 1.0;
    }
    // P(X ≤ m) by summing pmf terms from the mode outward in log space.
    let ln2 = core::f64::consts::LN_2;
    let mut log_pmf = -(n as f64) * ln2;
    let mut terms = Vec::with_capacity(m as usize + 1);
    terms.push(log_pmf);
    for i in 0..m {
        log_pmf += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        terms.push(log_pmf);
    }
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tail = peak.exp() * terms.iter().map(|t| (t - peak).exp()).sum::<f64>();
    (2.0 * tail).min(1.0)
}

/// Plug-in mutual information, in bits, of a 2×2 joint histogram
/// `joint[plaintext][guess]`.
pub fn mutual_information(joint: &[[u64; 2]; 2]) -> f64 {
    let n: u64 = joint.iter().flatten().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let px = [(joint[0][0] + joint[0][1]) as f64 / n, (joint[1][0] + joint[1][1]) as f64 / n];
    let py = [(joint[0][0] + joint[1][0]) as f64 / n, (joint[0][1] + joint[1][1]) as f64 / n];
    let mut mi = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let pxy = joint[x][y] as f64 / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (px[x] * py[y])).log2();
            }
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AttackConfig {
    pub mode: SessionMode,
    pub photons_per_pulse: u32,
    /// Plaintext bits per trial; each trial is an independent session.
    pub bits_per_trial: usize,
    pub block_size: usize,
    pub detector: DetectorModel,
}

impl Default for AttackConfig {
    /// One single-photon bit per trial, so every trial has fresh secrets.
    fn default() -> Self {
        Self {
            mode: SessionMode::Rotation,
            photons_per_pulse: 1,
            bits_per_trial: 1,
            block_size: 1,
            detector: DetectorModel::ideal(),
        }
    }
}

/// Integer tallies from any number of trials; sums are order independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackCounts {
    pub trials: u64,
    pub bits: u64,
    pub eve_correct: u64,
    pub bob_errors: u64,
    pub erasures: u64,
    /// `joint[plaintext][eve_guess]`
    pub joint: [[u64; 2]; 2],
}

impl core::ops::Add for AttackCounts {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.trials += o.trials;
        self.bits += o.bits;
        self.eve_correct += o.eve_correct;
        self.bob_errors += o.bob_errors;
        self.erasures += o.erasures;
        for x in 0..2 {
            for y in 0..2 {
                self.joint[x][y] += o.joint[x][y];
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackReport {
    pub strategy: String,
    pub mode: String,
    pub photons_per_pulse: u32,
    pub seed: u64,
    pub counts: AttackCounts,
    pub eve_bit_accuracy: f64,
    pub eve_accuracy_interval: Interval,
    /// Two-sided exact binomial p-value of Eve's accuracy against ½.
    pub eve_p_value: f64,
    /// Errors among the bits Bob decoded (erasures excluded).
    pub bob_error_rate: f64,
    pub bob_error_interval: Interval,
    pub erasure_rate: f64,
    pub erasure_interval: Interval,
    /// Plug-in estimate, bits of information per plaintext bit.
    pub mutual_information: f64,
}

impl AttackReport {
    pub fn from_counts(strategy: &EveStrategy, config: &AttackConfig, seed: u64, counts: AttackCounts) -> Self {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let decoded = counts.bits - counts.erasures;
        Self {
            strategy: format!("{strategy}"),
            mode: format!("{}", config.mode),
            photons_per_pulse: config.photons_per_pulse,
            seed,
            counts,
            eve_bit_accuracy: ratio(counts.eve_correct, counts.bits),
            eve_accuracy_interval: wilson_interval(counts.eve_correct, counts.bits),
            eve_p_value: binomial_test_half(counts.eve_correct, counts.bits),
            bob_error_rate: ratio(counts.bob_errors, decoded),
            bob_error_interval: wilson_interval(counts.bob_errors, decoded),
            erasure_rate: ratio(counts.erasures, counts.bits),
            erasure_interval: wilson_interval(counts.erasures, counts.bits),
            mutual_information: mutual_information(&counts.joint),
        }
    }
}

/// Runs trial `trial` of an experiment: one full session with Eve on the line.
pub fn run_attack_trial(
    strategy: &EveStrategy,
    config: &AttackConfig,
    seed: u64,
    trial: u64,
) -> Result<AttackCounts, AdversaryError> {
    let trial_seed = derive_seed(seed, trial);
    let mut plain_rng = rng_for(trial_seed, stream::SESSION);
    let bits: Vec<ProtocolBit> = (0..config.bits_per_trial)
        .map(|_| ProtocolBit::from_bool(plain_rng.random()))
        .collect();
    let session = SessionConfig {
        mode: config.mode,
        block_size: config.block_size,
        photons_per_pulse: config.photons_per_pulse,
        detector: config.detector,
        turnaround: None,
    };
    let mut channel = EveChannel {
        eve: Eve::new(*strategy, trial_seed),
        inner: IdealChannel,
    };
    let transcript = run_session_over(&bits, &session, trial_seed, &mut channel)?;
    let guesses = channel.eve.guesses(config.mode, bits.len(), config.block_size)?;

    let mut counts = AttackCounts {
        trials: 1,
        bits: bits.len() as u64,
        bob_errors: transcript.bit_errors() as u64,
        erasures: transcript.erasures() as u64,
        ..AttackCounts::default()
    };
    for (b, g) in bits.iter().zip(&guesses) {
        counts.joint[b.as_u8() as usize][g.as_u8() as usize] += 1;
        if b == g {
            counts.eve_correct += 1;
        }
    }
    Ok(counts)
}

/// Runs `trials` independent trials. Trial `t` depends only on `(seed, t)`,
/// so any partition of the trials summed with [`AttackCounts`] addition gives
/// the same report.
pub fn run_attack_experiment(
    strategy: &EveStrategy,
    config: &AttackConfig,
    trials: u64,
    seed: u64,
) -> Result<AttackReport, AdversaryError> {
    check_experiment(strategy, config, trials)?;
    let mut counts = AttackCounts::default();
    for t in 0..trials {
        counts = counts + run_attack_trial(strategy, config, seed, t)?;
    }
    Ok(AttackReport::from_counts(strategy, config, seed, counts))
}

/// Validation shared by serial and parallel drivers.
pub fn check_experiment(strategy: &EveStrategy, config: &AttackConfig, trials: u64) -> Result<(), AdversaryError> {
    if trials == 0 {
        return Err(AdversaryError::NoTrials);
    }
    if config.block_size == 0 || config.block_size > 256 {
        return Err(ProtocolError::BlockSize.into());
    }
    if config.photons_per_pulse == 0 {
        return Err(PulseError::Empty.into());
    }
    strategy.validate(config.photons_per_pulse)
}
