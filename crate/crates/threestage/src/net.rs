//! Alice and Bob as separate endpoints over a reliable, ordered byte stream.
//!
//! ```text
//! Alice                         Bob
//!   HELLO(params)        ──▶
//!                        ◀──    HELLO_ACK(params)
//!   per bit:
//!   STAGE 1              ──▶
//!                        ◀──    STAGE 2
//!   STAGE 3              ──▶
//!                        ◀──    DONE(decoded bytes)
//! ```
//!
//! Either side answers anything unexpected with an ERROR frame and aborts.
//! Failed sessions still hand back every frame exchanged so far.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};

use rand::Rng;
use serde::{Deserialize, Serialize};
use threestage_core::bench::{decode_message, DetectorModel, DetectorOutcome};
use threestage_core::protocol::{
    alice_stage1, alice_stage3, bob_stage2, bob_stage4, BlockKey, ProtocolBit, ProtocolError, SessionMode, StageMessage,
};
use threestage_core::seed::{derive_seed, rng_for, stream};
use threestage_core::wire::{
    decode_frame, encode_frame, frame_len, ErrorCode, Frame, FrameBody, SessionParams, StageFrame, WireError, WireMode,
    MAX_WIRE_BLOCK,
};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("transport error: {0}")]
    Io(#[from] io::Error),
    #[error("connection closed by peer")]
    Closed,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("protocol violation: {0}")]
    Violation(String),
    #[error("peer aborted: {0}")]
    Peer(ErrorCode),
    #[error("unsupported session parameters: {0}")]
    Unsupported(String),
}

impl NetError {
    /// Whether the byte stream itself failed, as opposed to its content.
    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Io(_) | Self::Closed)
    }

    fn code(&self) -> ErrorCode {
        match self {
            Self::Wire(WireError::UnsupportedVersion(_)) => ErrorCode::VersionMismatch,
            Self::Wire(_) => ErrorCode::MalformedFrame,
            Self::Violation(_) | Self::Protocol(ProtocolError::OutOfOrder { .. } | ProtocolError::BlockMismatch { .. }) => {
                ErrorCode::ProtocolViolation
            }
            Self::Unsupported(_) => ErrorCode::UnsupportedParams,
            _ => ErrorCode::Internal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameDirection {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub direction: FrameDirection,
    pub frame: Frame,
}

/// Frames one endpoint exchanged, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetTranscript {
    pub frames: Vec<FrameRecord>,
}

impl NetTranscript {
    pub fn stage_frames(&self) -> impl Iterator<Item = &StageFrame> {
        self.frames.iter().filter_map(|r| match &r.frame.body {
            FrameBody::Stage(s) => Some(s),
            _ => None,
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SessionFailure {
    pub error: NetError,
    pub transcript: NetTranscript,
}

/// One frame as read off the stream: its bytes, and the parse result.
#[derive(Debug)]
pub struct RawFrame {
    pub bytes: Vec<u8>,
    pub frame: Result<Frame, WireError>,
}

/// Reads one frame. A bad header yields just the six header bytes, since the
/// frame length is unknown; a bad body yields the whole declared frame.
pub fn read_raw<R: Read>(r: &mut R) -> Result<RawFrame, NetError> {
    let mut head = [0u8; 6];
    let mut got = 0;
    while got < head.len() {
        match r.read(&mut head[got..]) {
            Ok(0) if got == 0 => return Err(NetError::Closed),
            Ok(0) => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = match frame_len(&head) {
        Ok(len) => len,
        Err(e) => {
            return Ok(RawFrame {
                bytes: head.to_vec(),
                frame: Err(e),
            })
        }
    };
    let mut bytes = vec![0u8; len];
    bytes[..6].copy_from_slice(&head);
    r.read_exact(&mut bytes[6..])?;
    let frame = decode_frame(&bytes).map(|(f, _)| f);
    Ok(RawFrame { bytes, frame })
}

pub fn read_frame<R: Read>(r: &mut R) -> Result<Frame, NetError> {
    Ok(read_raw(r)?.frame?)
}

pub fn write_frame<W: Write>(w: &mut W, frame: &Frame) -> Result<(), NetError> {
    w.write_all(&encode_frame(frame)?)?;
    w.flush()?;
    Ok(())
}

// Shared bookkeeping for both endpoints.
struct Link<'a, S> {
    stream: &'a mut S,
    session_id: u64,
    transcript: NetTranscript,
}

impl<S: Read + Write> Link<'_, S> {
    fn send(&mut self, body: FrameBody) -> Result<(), NetError> {
        let frame = Frame {
            session_id: self.session_id,
            body,
        };
        write_frame(self.stream, &frame)?;
        self.transcript.frames.push(FrameRecord {
            direction: FrameDirection::Sent,
            frame,
        });
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, NetError> {
        let frame = read_frame(self.stream)?;
        self.transcript.frames.push(FrameRecord {
            direction: FrameDirection::Received,
            frame,
        });
        if let FrameBody::Error(code) = frame.body {
            return Err(NetError::Peer(code));
        }
        if frame.session_id != self.session_id {
            return Err(NetError::Violation(format!(
                "session id {:#x}, expected {:#x}",
                frame.session_id, self.session_id
            )));
        }
        Ok(frame)
    }

    fn recv_stage(&mut self, stage: u8, block_index: u32, bit_index: u8) -> Result<StageMessage, NetError> {
        match self.recv()?.body {
            FrameBody::Stage(s) if s.stage == stage && s.block_index == block_index && s.bit_index == bit_index => {
                Ok(s.to_message()?)
            }
            FrameBody::Stage(s) => Err(NetError::Violation(format!(
                "expected stage {stage} of block {block_index} bit {bit_index}, got stage {} of block {} bit {}",
                s.stage, s.block_index, s.bit_index
            ))),
            other => Err(NetError::Violation(format!("expected a STAGE frame, got {other:?}"))),
        }
    }

    // Reports the error to the peer (best effort) and packages the failure.
    fn abort(mut self, error: NetError) -> SessionFailure {
        if !error.is_transport() && !matches!(error, NetError::Peer(_)) {
            let _ = self.send(FrameBody::Error(error.code()));
        }
        SessionFailure {
            error,
            transcript: self.transcript,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliceConfig {
    pub mode: WireMode,
    pub block_size: u8,
    pub photons_per_pulse: u32,
}

impl Default for AliceConfig {
    fn default() -> Self {
        Self {
            mode: WireMode::Rotation,
            block_size: 8,
            photons_per_pulse: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliceReport {
    pub session_id: u64,
    pub params: SessionParams,
    /// Byte count Bob announced in DONE.
    pub bob_decoded_bytes: u64,
    pub transcript: NetTranscript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BobReport {
    pub session_id: u64,
    pub params: SessionParams,
    /// Erased bits are read as 0.
    pub decoded: Vec<u8>,
    pub outcomes: Vec<DetectorOutcome>,
    pub transcript: NetTranscript,
}

impl BobReport {
    pub fn erasures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.bit().is_none()).count()
    }
}

fn half_key(block_index: u32, own: threestage_core::protocol::Secret) -> BlockKey {
    // Each endpoint knows only its own secret; the other half is never read.
    BlockKey {
        block_index,
        alice: own,
        bob: own,
    }
}

/// Sends `message` to the Bob at the other end of `stream`.
pub fn alice_endpoint<S: Read + Write>(
    stream: &mut S,
    message: &[u8],
    config: &AliceConfig,
    seed: u64,
) -> Result<AliceReport, SessionFailure> {
    let mut link = Link {
        stream,
        session_id: derive_seed(seed, stream::SESSION),
        transcript: NetTranscript::default(),
    };
    match run_alice(&mut link, message, config, seed) {
        Ok((params, bob_decoded_bytes)) => Ok(AliceReport {
            session_id: link.session_id,
            params,
            bob_decoded_bytes,
            transcript: link.transcript,
        }),
        Err(e) => Err(link.abort(e)),
    }
}

fn run_alice<S: Read + Write>(
    link: &mut Link<'_, S>,
    message: &[u8],
    config: &AliceConfig,
    seed: u64,
) -> Result<(SessionParams, u64), NetError> {
    if config.block_size == 0 || config.block_size > MAX_WIRE_BLOCK {
        return Err(NetError::Unsupported(format!("block size {} outside 1..=8", config.block_size)));
    }
    let params = SessionParams {
        block_size: config.block_size,
        mode: config.mode,
        message_bits: 8 * message.len() as u64,
    };
    link.send(FrameBody::Hello(params))?;
    match link.recv()?.body {
        FrameBody::HelloAck(p) if p == params => {}
        other => return Err(NetError::Violation(format!("expected HELLO_ACK echoing {params:?}, got {other:?}"))),
    }

    let mode = config.mode.session_mode();
    let bs = config.block_size as usize;
    let mut rng = rng_for(seed, stream::ALICE);
    let mut key = None;
    for (i, bit) in threestage_core::bench::encode_message(message).into_iter().enumerate() {
        let (block_index, bit_index) = ((i / bs) as u32, (i % bs) as u8);
        if bit_index == 0 {
            key = Some(half_key(block_index, mode.draw_secret(&mut rng)));
        }
        let key = key.as_ref().expect("drawn at the first bit of each block");
        let m1 = alice_stage1(mode, bit, key, bit_index, config.photons_per_pulse)?;
        link.send(FrameBody::Stage(StageFrame::from_message(&m1)?))?;
        let m2 = link.recv_stage(2, block_index, bit_index)?;
        let m3 = alice_stage3(mode, &m2, key)?;
        link.send(FrameBody::Stage(StageFrame::from_message(&m3)?))?;
    }
    match link.recv()?.body {
        FrameBody::Done { decoded_bytes } => Ok((params, decoded_bytes)),
        other => Err(NetError::Violation(format!("expected DONE, got {other:?}"))),
    }
}

/// Serves one session on `stream`: waits for HELLO, then receives the message.
pub fn bob_endpoint<S: Read + Write>(
    stream: &mut S,
    detector: &DetectorModel,
    seed: u64,
) -> Result<BobReport, SessionFailure> {
    let mut link = Link {
        stream,
        session_id: 0,
        transcript: NetTranscript::default(),
    };
    let mut outcomes = Vec::new();
    match run_bob(&mut link, detector, seed, &mut outcomes) {
        Ok((params, decoded)) => Ok(BobReport {
            session_id: link.session_id,
            params,
            decoded,
            outcomes,
            transcript: link.transcript,
        }),
        Err(e) => Err(link.abort(e)),
    }
}

fn run_bob<S: Read + Write>(
    link: &mut Link<'_, S>,
    detector: &DetectorModel,
    seed: u64,
    outcomes: &mut Vec<DetectorOutcome>,
) -> Result<(SessionParams, Vec<u8>), NetError> {
    let hello = read_frame(link.stream)?;
    link.transcript.frames.push(FrameRecord {
        direction: FrameDirection::Received,
        frame: hello,
    });
    link.session_id = hello.session_id;
    let params = match hello.body {
        FrameBody::Hello(p) => p,
        other => return Err(NetError::Violation(format!("expected HELLO, got {other:?}"))),
    };
    if params.message_bits % 8 != 0 {
        return Err(NetError::Unsupported(format!("{} bits is not whole bytes", params.message_bits)));
    }
    if params.message_bits / params.block_size as u64 > u32::MAX as u64 {
        return Err(NetError::Unsupported("message too long".into()));
    }
    link.send(FrameBody::HelloAck(params))?;

    let mode: SessionMode = params.mode.session_mode();
    let bs = params.block_size as u64;
    let mut rng = rng_for(seed, stream::BOB);
    let mut detector_rng = rng_for(seed, stream::DETECTOR);
    let mut key = None;
    let mut bits = Vec::new();
    for i in 0..params.message_bits {
        let (block_index, bit_index) = ((i / bs) as u32, (i % bs) as u8);
        if bit_index == 0 {
            key = Some(half_key(block_index, mode.draw_secret(&mut rng)));
        }
        let key = key.as_ref().expect("drawn at the first bit of each block");
        let m1 = link.recv_stage(1, block_index, bit_index)?;
        let m2 = bob_stage2(mode, &m1, key)?;
        link.send(FrameBody::Stage(StageFrame::from_message(&m2)?))?;
        let m3 = link.recv_stage(3, block_index, bit_index)?;
        let outcome = bob_stage4(mode, &m3, key, detector, &mut detector_rng)?;
        outcomes.push(outcome);
        bits.push(outcome.bit().unwrap_or(ProtocolBit::Zero));
    }
    let decoded = decode_message(&bits).expect("whole bytes checked at HELLO");
    link.send(FrameBody::Done {
        decoded_bytes: decoded.len() as u64,
    })?;
    Ok((params, decoded))
}

/// Connects to `addr` and runs Alice.
pub fn send_tcp<A: ToSocketAddrs>(
    addr: A,
    message: &[u8],
    config: &AliceConfig,
    seed: u64,
) -> Result<AliceReport, SessionFailure> {
    let mut stream = TcpStream::connect(addr).map_err(|e| SessionFailure {
        error: e.into(),
        transcript: NetTranscript::default(),
    })?;
    let _ = stream.set_nodelay(true);
    alice_endpoint(&mut stream, message, config, seed)
}

/// Accepts `sessions` connections, serving each on its own thread with
/// isolated state. Connection `i` uses the seed derived from `(seed, i)`,
/// except that a single session uses `seed` itself.
pub fn serve_tcp(
    listener: &TcpListener,
    sessions: usize,
    detector: &DetectorModel,
    seed: u64,
) -> io::Result<Vec<Result<BobReport, SessionFailure>>> {
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(sessions);
        for i in 0..sessions {
            let (mut stream, _) = listener.accept()?;
            let _ = stream.set_nodelay(true);
            let s = if sessions == 1 { seed } else { derive_seed(seed, i as u64) };
            handles.push(scope.spawn(move || bob_endpoint(&mut stream, detector, s)));
        }
        Ok(handles
            .into_iter()
            .map(|h| h.join().expect("session thread panicked"))
            .collect())
    })
}

/// Draws a fresh seed for runs that did not ask for one.
pub fn fresh_seed() -> u64 {
    rand::rng().random()
}
