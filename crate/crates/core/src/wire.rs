//! Fixed-layout binary frames exchanged by networked endpoints.
//!
//! Every frame starts with the same 14-byte header:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "3SQP"
//!      4     1  version (1)
//!      5     1  msg_type (1 HELLO, 2 HELLO_ACK, 3 STAGE, 4 DONE, 5 ERROR)
//!      6     8  session_id
//! ```
//!
//! and a body whose length is fixed by `msg_type`:
//!
//! ```text
//! HELLO / HELLO_ACK (24 bytes)  block_size u8, mode u8, message_bits u64
//! STAGE (56 bytes)              stage u8, block_index u32, bit_index u8,
//!                               photon_count u32, stokes 4 x f64
//! DONE (22 bytes)               decoded_bytes u64
//! ERROR (15 bytes)              code u8
//! ```
//!
//! All integers and floats are big-endian. The payload of a STAGE frame is
//! the simulated quantum state itself, so anyone reading frames learns it:
//! this is a simulator, and Eve is only as strong as the strategy she runs.

use alloc::vec::Vec;
use core::fmt;

use crate::groups::FamilyKind;
use crate::linalg::StateVector;
use crate::polarization::{stokes_to_jones, StokesVector};
use crate::protocol::{SessionMode, StageMessage};
use crate::pulse::PhotonPulse;

pub const MAGIC: [u8; 4] = *b"3SQP";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;
pub const STAGE_LEN: usize = 56;
pub const HELLO_LEN: usize = 24;
pub const DONE_LEN: usize = 22;
pub const ERROR_LEN: usize = 15;
/// Largest block that fits the 0–7 `bit_index` range.
pub const MAX_WIRE_BLOCK: u8 = 8;

/// Relative slack on `s1² + s2² + s3² ≤ s0²` when accepting a Stokes payload.
const PHYSICAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MsgType {
    Hello = 1,
    HelloAck = 2,
    Stage = 3,
    Done = 4,
    Error = 5,
}

impl MsgType {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Hello,
            2 => Self::HelloAck,
            3 => Self::Stage,
            4 => Self::Done,
            5 => Self::Error,
            _ => return None,
        })
    }

    pub fn frame_len(self) -> usize {
        match self {
            Self::Hello | Self::HelloAck => HELLO_LEN,
            Self::Stage => STAGE_LEN,
            Self::Done => DONE_LEN,
            Self::Error => ERROR_LEN,
        }
    }
}

/// Why a frame body was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Malformed {
    NonFiniteFloat,
    Unphysical,
    BadStage(u8),
    BadBitIndex(u8),
    NoPhotons,
    BadBlockSize(u8),
    UnknownMode(u8),
    UnknownErrorCode(u8),
}

impl fmt::Display for Malformed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonFiniteFloat => f.write_str("non-finite float in stokes payload"),
            Self::Unphysical => f.write_str("stokes payload is not a physical state"),
            Self::BadStage(s) => write!(f, "stage {s} outside 1..=3"),
            Self::BadBitIndex(b) => write!(f, "bit index {b} outside 0..=7"),
            Self::NoPhotons => f.write_str("photon count is zero"),
            Self::BadBlockSize(b) => write!(f, "block size {b} outside 1..=8"),
            Self::UnknownMode(m) => write!(f, "unknown mode id {m}"),
            Self::UnknownErrorCode(c) => write!(f, "unknown error code {c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed payload: {0}")]
    Malformed(Malformed),
    #[error("session mode {0} cannot travel as a Stokes vector")]
    UnsupportedMode(SessionMode),
}

impl WireError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            Self::BadMagic(_) => "bad_magic",
            Self::UnsupportedVersion(_) => "unsupported_version",
            Self::UnknownType(_) => "unknown_type",
            Self::Truncated { .. } => "truncated",
            Self::Malformed(_) => "malformed",
            Self::UnsupportedMode(_) => "unsupported_mode",
        }
    }
}

/// Reasons an endpoint aborts, carried by ERROR frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ErrorCode {
    ProtocolViolation = 1,
    VersionMismatch = 2,
    MalformedFrame = 3,
    UnsupportedParams = 4,
    Internal = 5,
}

impl ErrorCode {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::ProtocolViolation,
            2 => Self::VersionMismatch,
            3 => Self::MalformedFrame,
            4 => Self::UnsupportedParams,
            5 => Self::Internal,
            _ => return None,
        })
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ProtocolViolation => "protocol violation",
            Self::VersionMismatch => "version mismatch",
            Self::MalformedFrame => "malformed frame",
            Self::UnsupportedParams => "unsupported session parameters",
            Self::Internal => "internal error",
        })
    }
}

/// Session modes that can travel on the wire: all act on a single qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WireMode {
    Rotation = 0,
    HalfWavePlates = 1,
    Pauli = 2,
    Hadamard = 3,
}

impl WireMode {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            0 => Self::Rotation,
            1 => Self::HalfWavePlates,
            2 => Self::Pauli,
            3 => Self::Hadamard,
            _ => return None,
        })
    }

    pub fn session_mode(self) -> SessionMode {
        match self {
            Self::Rotation => SessionMode::Rotation,
            Self::HalfWavePlates => SessionMode::HalfWavePlates,
            Self::Pauli => SessionMode::Family(FamilyKind::Pauli),
            Self::Hadamard => SessionMode::Family(FamilyKind::HadamardPair),
        }
    }
}

impl TryFrom<SessionMode> for WireMode {
    type Error = WireError;
    fn try_from(mode: SessionMode) -> Result<Self, WireError> {
        Ok(match mode {
            SessionMode::Rotation => Self::Rotation,
            SessionMode::HalfWavePlates => Self::HalfWavePlates,
            SessionMode::Family(FamilyKind::Pauli) => Self::Pauli,
            SessionMode::Family(FamilyKind::HadamardPair) => Self::Hadamard,
            other => return Err(WireError::UnsupportedMode(other)),
        })
    }
}

/// Handshake parameters. No key material, ever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionParams {
    pub block_size: u8,
    pub mode: WireMode,
    pub message_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StageFrame {
    pub stage: u8,
    pub block_index: u32,
    pub bit_index: u8,
    pub photon_count: u32,
    pub stokes: StokesVector,
}

impl StageFrame {
    pub fn from_message(msg: &StageMessage) -> Result<Self, WireError> {
        let stokes = msg
            .pulse
            .stokes()
            .map_err(|_| WireError::Malformed(Malformed::Unphysical))?;
        let f = Self {
            stage: msg.stage,
            block_index: msg.block_index,
            bit_index: msg.bit_index,
            photon_count: msg.pulse.photon_count(),
            stokes,
        };
        f.validate()?;
        Ok(f)
    }

    /// The pulse this frame describes, with its polarization recovered up to phase.
    pub fn to_message(&self) -> Result<StageMessage, WireError> {
        self.validate()?;
        let jones = stokes_to_jones(&self.stokes).map_err(|_| WireError::Malformed(Malformed::Unphysical))?;
        let pulse = PhotonPulse::new(self.photon_count, StateVector::from(jones), self.stokes.s0)
            .map_err(|_| WireError::Malformed(Malformed::NoPhotons))?;
        Ok(StageMessage {
            stage: self.stage,
            block_index: self.block_index,
            bit_index: self.bit_index,
            pulse,
        })
    }

    pub fn validate(&self) -> Result<(), WireError> {
        let bad = |m| Err(WireError::Malformed(m));
        if !(1..=3).contains(&self.stage) {
            return bad(Malformed::BadStage(self.stage));
        }
        if self.bit_index >= MAX_WIRE_BLOCK {
            return bad(Malformed::BadBitIndex(self.bit_index));
        }
        if self.photon_count == 0 {
            return bad(Malformed::NoPhotons);
        }
        let s = self.stokes.as_array();
        if s.iter().any(|x| !x.is_finite()) {
            return bad(Malformed::NonFiniteFloat);
        }
        let pol = s[1] * s[1] + s[2] * s[2] + s[3] * s[3];
        if s[0] <= 0.0 || pol > s[0] * s[0] * (1.0 + PHYSICAL_TOL) {
            return bad(Malformed::Unphysical);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FrameBody {
    Hello(SessionParams),
    HelloAck(SessionParams),
    Stage(StageFrame),
    Done { decoded_bytes: u64 },
    Error(ErrorCode),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Frame {
    pub session_id: u64,
    pub body: FrameBody,
}

impl Frame {
    pub fn msg_type(&self) -> MsgType {
        match self.body {
            FrameBody::Hello(_) => MsgType::Hello,
            FrameBody::HelloAck(_) => MsgType::HelloAck,
            FrameBody::Stage(_) => MsgType::Stage,
            FrameBody::Done { .. } => MsgType::Done,
            FrameBody::Error(_) => MsgType::Error,
        }
    }
}

fn check_params(p: &SessionParams) -> Result<(), WireError> {
    if p.block_size == 0 || p.block_size > MAX_WIRE_BLOCK {
        return Err(WireError::Malformed(Malformed::BadBlockSize(p.block_size)));
    }
    Ok(())
}

/// Serializes a frame. Fails when the frame breaks its own invariants.
pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, WireError> {
    let t = frame.msg_type();
    let mut out = Vec::with_capacity(t.frame_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(t as u8);
    out.extend_from_slice(&frame.session_id.to_be_bytes());
    match &frame.body {
        FrameBody::Hello(p) | FrameBody::HelloAck(p) => {
            check_params(p)?;
            out.push(p.block_size);
            out.push(p.mode as u8);
            out.extend_from_slice(&p.message_bits.to_be_bytes());
        }
        FrameBody::Stage(s) => {
            s.validate()?;
            out.push(s.stage);
            out.extend_from_slice(&s.block_index.to_be_bytes());
            out.push(s.bit_index);
            out.extend_from_slice(&s.photon_count.to_be_bytes());
            for x in s.stokes.as_array() {
                out.extend_from_slice(&x.to_be_bytes());
            }
        }
        FrameBody::Done { decoded_bytes } => out.extend_from_slice(&decoded_bytes.to_be_bytes()),
        FrameBody::Error(code) => out.push(*code as u8),
    }
    debug_assert_eq!(out.len(), t.frame_len());
    Ok(out)
}

/// Length of the frame starting at `bytes`, from its first six bytes.
pub fn frame_len(bytes: &[u8]) -> Result<usize, WireError> {
    let need = |n: usize| {
        if bytes.len() < n {
            Err(WireError::Truncated {
                needed: n,
                available: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(4)?;
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    need(6)?;
    if bytes[4] != VERSION {
        return Err(WireError::UnsupportedVersion(bytes[4]));
    }
    MsgType::from_u8(bytes[5])
        .map(MsgType::frame_len)
        .ok_or(WireError::UnknownType(bytes[5]))
}

// Big-endian cursor over a slice whose length has already been checked.
struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        let mut a = [0; N];
        a.copy_from_slice(head);
        a
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_be_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_be_bytes(self.take())
    }
}

/// Parses one frame from the front of `bytes` and returns it with the number
/// of bytes consumed. Never reads past the declared frame length and never
/// panics.
pub fn decode_frame(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
    let len = frame_len(bytes)?;
    if bytes.len() < len {
        return Err(WireError::Truncated {
            needed: len,
            available: bytes.len(),
        });
    }
    let mut c = Cursor(&bytes[6..len]);
    let session_id = c.u64();
    let body = match MsgType::from_u8(bytes[5]).ok_or(WireError::UnknownType(bytes[5]))? {
        t @ (MsgType::Hello | MsgType::HelloAck) => {
            let block_size = c.u8();
            let mode_id = c.u8();
            let mode = WireMode::from_u8(mode_id).ok_or(WireError::Malformed(Malformed::UnknownMode(mode_id)))?;
            let p = SessionParams {
                block_size,
                mode,
                message_bits: c.u64(),
            };
            check_params(&p)?;
            if t == MsgType::Hello {
                FrameBody::Hello(p)
            } else {
                FrameBody::HelloAck(p)
            }
        }
        MsgType::Stage => {
            let s = StageFrame {
                stage: c.u8(),
                block_index: c.u32(),
                bit_index: c.u8(),
                photon_count: c.u32(),
                stokes: StokesVector::new(c.f64(), c.f64(), c.f64(), c.f64()),
            };
            s.validate()?;
            FrameBody::Stage(s)
        }
        MsgType::Done => FrameBody::Done { decoded_bytes: c.u64() },
        MsgType::Error => {
            let b = c.u8();
            FrameBody::Error(ErrorCode::from_u8(b).ok_or(WireError::Malformed(Malformed::UnknownErrorCode(b)))?)
        }
    };
    Ok((Frame { session_id, body }, len))
}
