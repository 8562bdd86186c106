//! The four-step three-stage protocol.
//!
//! 1. Alice encodes a bit, applies her secret `U_A` and sends the pulse.
//! 2. Bob applies his secret `U_B` and sends it back.
//! 3. Alice applies `U_A†`, leaving `U_B` applied to the bit, and sends it on.
//! 4. Bob applies `U_B†` and measures locally; nothing is transmitted.
//!
//! Secrets are redrawn for every block of `block_size` bits (8 by default).
//! Stage messages carry only the pulse; keys stay inside the endpoints.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::bench::{detector_click, DetectorError, DetectorModel, DetectorOutcome};
use crate::groups::{FamilyElement, FamilyKind, GroupError};
use crate::linalg::{CMatrix, LinalgError, StateVector};
use crate::polarization::{half_wave_plate_jones, rotation_operator, JonesOperator, JonesVector};
use crate::pulse::{PhotonPulse, PulseError};
use crate::seed::{rng_for, stream};

/// Default number of bits sharing one pair of secrets.
pub const DEFAULT_BLOCK_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("protocol violation: expected stage {expected}, received stage {received}")]
    OutOfOrder { expected: u8, received: u8 },
    #[error("block mismatch: key is for block {key}, message is for block {message}")]
    BlockMismatch { key: u32, message: u32 },
    #[error("secret does not fit session mode {0}")]
    KeyMismatch(SessionMode),
    #[error("block size must lie in 1..=256")]
    BlockSize,
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProtocolBit {
    Zero,
    One,
}

impl ProtocolBit {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Self::One
        } else {
            Self::Zero
        }
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Zero => Self::One,
            Self::One => Self::Zero,
        }
    }

    /// Encoding polarization: 0 ↔ 0°, 1 ↔ 90°.
    pub fn base_angle(self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::One => 90.0,
        }
    }
}

impl From<bool> for ProtocolBit {
    fn from(b: bool) -> Self {
        Self::from_bool(b)
    }
}

impl fmt::Display for ProtocolBit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// One party's secret for a block.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Secret {
    /// Rotation angle (rotation mode) or plate angle (half-wave-plate mode), degrees.
    Angle(f64),
    Element(FamilyElement),
}

/// The pair of secrets used for one block.
///
/// Only simulations that own both endpoints ever hold a whole `BlockKey`;
/// networked endpoints each keep their own half.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BlockKey {
    pub block_index: u32,
    pub alice: Secret,
    pub bob: Secret,
}

impl BlockKey {
    pub fn angles(block_index: u32, theta_a: f64, theta_b: f64) -> Self {
        Self {
            block_index,
            alice: Secret::Angle(theta_a),
            bob: Secret::Angle(theta_b),
        }
    }

    pub fn theta_a(&self) -> Option<f64> {
        match self.alice {
            Secret::Angle(a) => Some(a),
            Secret::Element(_) => None,
        }
    }

    pub fn theta_b(&self) -> Option<f64> {
        match self.bob {
            Secret::Angle(b) => Some(b),
            Secret::Element(_) => None,
        }
    }
}

/// How secrets act on the pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SessionMode {
    /// Polarization rotation `R(θ)`, undone by `R(−θ)`.
    Rotation,
    /// The bench's half-wave plates: a party applies a plate at `x` and later
    /// one at `−x`. Only the interleaved four-plate sequence is the identity.
    HalfWavePlates,
    /// Abstract unitaries drawn from a transformation family, undone by `U†`.
    Family(FamilyKind),
}

impl fmt::Display for SessionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rotation => f.write_str("rotation"),
            Self::HalfWavePlates => f.write_str("half-wave"),
            Self::Family(k) => write!(f, "family:{k}"),
        }
    }
}

impl SessionMode {
    pub fn dim(&self) -> usize {
        match self {
            Self::Rotation | Self::HalfWavePlates => 2,
            Self::Family(k) => k.dim(),
        }
    }

    /// Fresh secret; angles are uniform on `[0, 360)`.
    pub fn draw_secret<R: Rng + ?Sized>(&self, rng: &mut R) -> Secret {
        match self {
            Self::Rotation | Self::HalfWavePlates => Secret::Angle(rng.random::<f64>() * 360.0),
            Self::Family(k) => Secret::Element(k.random_element(rng)),
        }
    }

    /// Initial state of a bit before any secret is applied.
    pub fn encode(&self, bit: ProtocolBit) -> StateVector {
        match self {
            Self::Rotation | Self::HalfWavePlates => JonesVector::linear(bit.base_angle()).into(),
            Self::Family(k) => StateVector::basis(k.dim(), bit.as_u8() as usize),
        }
    }

    /// The operator a party applies on its first pass.
    pub fn forward(&self, secret: &Secret) -> Result<CMatrix, ProtocolError> {
        self.operator(secret, false)
    }

    /// The operator a party applies on its second pass.
    pub fn reverse(&self, secret: &Secret) -> Result<CMatrix, ProtocolError> {
        self.operator(secret, true)
    }

    fn operator(&self, secret: &Secret, reverse: bool) -> Result<CMatrix, ProtocolError> {
        let sign = if reverse { -1.0 } else { 1.0 };
        match (self, secret) {
            (Self::Rotation, Secret::Angle(t)) => Ok(rotation_operator(sign * t).to_matrix()),
            (Self::HalfWavePlates, Secret::Angle(x)) => Ok(half_wave_plate_jones(sign * x).to_matrix()),
            (Self::Family(kind), Secret::Element(e)) if e.kind() == *kind => {
                let u = e.transform()?;
                Ok(if reverse {
                    u.matrix().adjoint()
                } else {
                    u.matrix().clone()
                })
            }
            _ => Err(ProtocolError::KeyMismatch(*self)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

/// A pulse in flight between the parties.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageMessage {
    /// 1, 2 or 3.
    pub stage: u8,
    pub block_index: u32,
    pub bit_index: u8,
    pub pulse: PhotonPulse,
}

impl StageMessage {
    /// Stage 1 and 3 travel Alice → Bob, stage 2 Bob → Alice.
    pub fn direction(&self) -> Direction {
        if self.stage == 2 {
            Direction::BobToAlice
        } else {
            Direction::AliceToBob
        }
    }
}

fn expect_stage(msg: &StageMessage, expected: u8) -> Result<(), ProtocolError> {
    if msg.stage == expected {
        Ok(())
    } else {
        Err(ProtocolError::OutOfOrder {
            expected,
            received: msg.stage,
        })
    }
}

fn expect_block(msg: &StageMessage, key: &BlockKey) -> Result<(), ProtocolError> {
    if msg.block_index == key.block_index {
        Ok(())
    } else {
        Err(ProtocolError::BlockMismatch {
            key: key.block_index,
            message: msg.block_index,
        })
    }
}

fn transformed(msg: &StageMessage, op: &CMatrix, stage: u8) -> Result<StageMessage, ProtocolError> {
    let state = op.apply(msg.pulse.state())?;
    Ok(StageMessage {
        stage,
        pulse: msg.pulse.with_state(state),
        ..msg.clone()
    })
}

/// Step 1: encode `bit` and apply Alice's secret.
pub fn alice_stage1(
    mode: SessionMode,
    bit: ProtocolBit,
    key: &BlockKey,
    bit_index: u8,
    photons: u32,
) -> Result<StageMessage, ProtocolError> {
    let state = mode.forward(&key.alice)?.apply(&mode.encode(bit))?;
    Ok(StageMessage {
        stage: 1,
        block_index: key.block_index,
        bit_index,
        pulse: PhotonPulse::new(photons, state, 1.0)?,
    })
}

/// Step 2: Bob applies his secret.
pub fn bob_stage2(mode: SessionMode, msg: &StageMessage, key: &BlockKey) -> Result<StageMessage, ProtocolError> {
    expect_stage(msg, 1)?;
    expect_block(msg, key)?;
    transformed(msg, &mode.forward(&key.bob)?, 2)
}

/// Step 3: Alice removes her secret.
pub fn alice_stage3(mode: SessionMode, msg: &StageMessage, key: &BlockKey) -> Result<StageMessage, ProtocolError> {
    expect_stage(msg, 2)?;
    expect_block(msg, key)?;
    transformed(msg, &mode.reverse(&key.alice)?, 3)
}

/// Step 4: Bob removes his secret and measures.
///
/// Single-qubit pulses are measured in the H/V basis through `detector`.
/// Two-qubit states are sampled by the Born rule; outcomes `|10⟩` and `|11⟩`
/// encode no bit and are reported as erasures.
pub fn bob_stage4<R: Rng + ?Sized>(
    mode: SessionMode,
    msg: &StageMessage,
    key: &BlockKey,
    detector: &DetectorModel,
    rng: &mut R,
) -> Result<DetectorOutcome, ProtocolError> {
    expect_stage(msg, 3)?;
    expect_block(msg, key)?;
    let state = mode.reverse(&key.bob)?.apply(msg.pulse.state())?;
    let probs = state.probabilities();
    if probs.len() == 2 {
        let i = msg.pulse.intensity();
        return Ok(detector_click(probs[0] * i, probs[1] * i, detector, rng)?);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut outcome = probs.len() - 1;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            outcome = k;
            break;
        }
    }
    Ok(match outcome {
        0 => DetectorOutcome::Click(ProtocolBit::Zero),
        1 => DetectorOutcome::Click(ProtocolBit::One),
        _ => DetectorOutcome::Erasure,
    })
}

/// Anything that carries stage messages between the parties.
pub trait Channel {
    fn carry(&mut self, msg: StageMessage) -> Result<StageMessage, ProtocolError>;
}

/// Lossless, polarization-neutral channel.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdealChannel;

impl Channel for IdealChannel {
    fn carry(&mut self, msg: StageMessage) -> Result<StageMessage, ProtocolError> {
        Ok(msg)
    }
}

/// Applies a fixed element to every re-transmission (stages 2 and 3), as a
/// turnaround mirror would.
#[derive(Debug, Clone, Copy)]
pub struct TurnaroundChannel<C> {
    pub element: JonesOperator,
    pub inner: C,
}

impl<C: Channel> Channel for TurnaroundChannel<C> {
    fn carry(&mut self, msg: StageMessage) -> Result<StageMessage, ProtocolError> {
        let msg = if msg.stage >= 2 && msg.pulse.state().dim() == 2 {
            let stage = msg.stage;
            transformed(&msg, &self.element.to_matrix(), stage)?
        } else {
            msg
        };
        self.inner.carry(msg)
    }
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionConfig {
    pub mode: SessionMode,
    pub block_size: usize,
    pub photons_per_pulse: u32,
    pub detector: DetectorModel,
    /// Element applied at each turnaround; `None` models neutral mirrors.
    pub turnaround: Option<JonesOperator>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: SessionMode::Rotation,
            block_size: DEFAULT_BLOCK_SIZE,
            photons_per_pulse: 1,
            detector: DetectorModel::ideal(),
            turnaround: None,
        }
    }
}

impl SessionConfig {
    pub fn with_mode(mode: SessionMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TranscriptRecord {
    pub direction: Direction,
    pub message: StageMessage,
}

/// Evidence of one session: every transmission in order, the keys each
/// endpoint drew, and Bob's measurement outcomes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionTranscript {
    pub mode: SessionMode,
    pub block_size: usize,
    /// Bits requested before padding to whole blocks.
    pub message_len: usize,
    /// Bits actually sent, including zero padding.
    pub sent: Vec<ProtocolBit>,
    pub records: Vec<TranscriptRecord>,
    pub keys: Vec<BlockKey>,
    /// One outcome per sent bit.
    pub outcomes: Vec<DetectorOutcome>,
}

impl SessionTranscript {
    /// Decoded message bits (padding removed); erasures are `None`.
    pub fn decoded(&self) -> Vec<Option<ProtocolBit>> {
        self.outcomes
            .iter()
            .take(self.message_len)
            .map(|o| o.bit())
            .collect()
    }

    /// Decoded bits when no erasure occurred.
    pub fn decoded_bits(&self) -> Option<Vec<ProtocolBit>> {
        self.decoded().into_iter().collect()
    }

    pub fn bit_errors(&self) -> usize {
        self.sent
            .iter()
            .zip(&self.outcomes)
            .take(self.message_len)
            .filter(|(s, o)| o.bit().is_some_and(|b| b != **s))
            .count()
    }

    pub fn erasures(&self) -> usize {
        self.outcomes
            .iter()
            .take(self.message_len)
            .filter(|o| o.bit().is_none())
            .count()
    }
}

/// Runs a complete session over an ideal channel.
pub fn run_session(
    bits: &[ProtocolBit],
    config: &SessionConfig,
    seed: u64,
) -> Result<SessionTranscript, ProtocolError> {
    match config.turnaround {
        Some(element) => run_session_over(
            bits,
            config,
            seed,
            &mut TurnaroundChannel {
                element,
                inner: IdealChannel,
            },
        ),
        None => run_session_over(bits, config, seed, &mut IdealChannel),
    }
}

/// Runs a complete session with every transmission passing through `channel`.
///
/// Alice and Bob draw secrets from independent streams derived from `seed`,
/// one fresh pair per block. The output is a pure function of the inputs.
pub fn run_session_over<C: Channel + ?Sized>(
    bits: &[ProtocolBit],
    config: &SessionConfig,
    seed: u64,
    channel: &mut C,
) -> Result<SessionTranscript, ProtocolError> {
    let block_size = config.block_size;
    if block_size == 0 || block_size > u8::MAX as usize + 1 {
        return Err(ProtocolError::BlockSize);
    }
    let mode = config.mode;
    let mut alice_rng = rng_for(seed, stream::ALICE);
    let mut bob_rng = rng_for(seed, stream::BOB);
    let mut detector_rng = rng_for(seed, stream::DETECTOR);

    let mut sent = bits.to_vec();
    sent.resize(bits.len().div_ceil(block_size) * block_size, ProtocolBit::Zero);

    let mut transcript = SessionTranscript {
        mode,
        block_size,
        message_len: bits.len(),
        sent: Vec::with_capacity(sent.len()),
        records: Vec::with_capacity(sent.len() * 3),
        keys: Vec::with_capacity(sent.len() / block_size),
        outcomes: Vec::with_capacity(sent.len()),
    };

    for (block_index, block) in sent.chunks(block_size).enumerate() {
        let key = BlockKey {
            block_index: block_index as u32,
            alice: mode.draw_secret(&mut alice_rng),
            bob: mode.draw_secret(&mut bob_rng),
        };
        transcript.keys.push(key);
        for (bit_index, &bit) in block.iter().enumerate() {
            let m1 = alice_stage1(mode, bit, &key, bit_index as u8, config.photons_per_pulse)?;
            let m1 = record(&mut transcript, channel.carry(m1)?);
            let m2 = record(&mut transcript, channel.carry(bob_stage2(mode, &m1, &key)?)?);
            let m3 = record(&mut transcript, channel.carry(alice_stage3(mode, &m2, &key)?)?);
            let outcome = bob_stage4(mode, &m3, &key, &config.detector, &mut detector_rng)?;
            transcript.sent.push(bit);
            transcript.outcomes.push(outcome);
        }
    }
    Ok(transcript)
}

fn record(t: &mut SessionTranscript, msg: StageMessage) -> StageMessage {
    t.records.push(TranscriptRecord {
        direction: msg.direction(),
        message: msg.clone(),
    });
    msg
}
