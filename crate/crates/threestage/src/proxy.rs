//! Eve as a man-in-the-middle between an Alice connection and a Bob connection.
//!
//! Each direction is pumped by its own thread, one frame at a time. STAGE
//! frames pass through [`Eve::intercept`]; anything else, including frames
//! that fail to parse, is forwarded byte for byte.

use std::io::Write;
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Mutex;

use serde::Serialize;
use threestage_core::adversary::{
    AdversaryError, AttackConfig, AttackCounts, AttackReport, Eve, EveRecord, EveStrategy,
};
use threestage_core::bench::{encode_message, DetectorModel};
use threestage_core::protocol::ProtocolBit;
use threestage_core::wire::{encode_frame, FrameBody, SessionParams, StageFrame};

use crate::net::{read_raw, NetError};

#[derive(Debug, thiserror::Error)]
pub enum ProxyError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("adversary failed: {0}")]
    Adversary(#[from] AdversaryError),
}

impl ProxyError {
    pub fn is_transport(&self) -> bool {
        matches!(self, Self::Net(e) if e.is_transport())
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ForwardCounts {
    pub frames: u64,
    pub stage_frames: u64,
    /// Stage frames Eve changed before forwarding.
    pub rewritten: u64,
    pub malformed: u64,
}

/// What the proxy saw of one session.
#[derive(Debug)]
pub struct ProxyOutcome {
    pub strategy: EveStrategy,
    pub seed: u64,
    pub params: Option<SessionParams>,
    /// Photon count of the first stage-1 pulse seen.
    pub photons_per_pulse: Option<u32>,
    pub alice_to_bob: ForwardCounts,
    pub bob_to_alice: ForwardCounts,
    pub bob_decoded_bytes: Option<u64>,
    eve: Eve,
}

impl ProxyOutcome {
    pub fn records(&self) -> &[EveRecord] {
        self.eve.records()
    }

    /// Eve's guess for every message bit announced in HELLO.
    pub fn eve_guesses(&mut self) -> Result<Vec<ProtocolBit>, AdversaryError> {
        let Some(p) = self.params else {
            return Ok(Vec::new());
        };
        self.eve
            .guesses(p.mode.session_mode(), p.message_bits as usize, p.block_size as usize)
    }

    /// Scores the session against the plaintext and Bob's decode, which the
    /// proxy itself never sees. Bits are compared position by position.
    pub fn report(&mut self, plaintext: &[u8], bob_decoded: &[u8]) -> Result<AttackReport, AdversaryError> {
        let guesses = self.eve_guesses()?;
        let sent = encode_message(plaintext);
        let got = encode_message(bob_decoded);
        let mut counts = AttackCounts {
            trials: 1,
            bits: sent.len() as u64,
            ..AttackCounts::default()
        };
        for (i, &b) in sent.iter().enumerate() {
            if got.get(i) != Some(&b) {
                counts.bob_errors += 1;
            }
            let g = guesses.get(i).copied().unwrap_or(ProtocolBit::Zero);
            counts.joint[b.as_u8() as usize][g.as_u8() as usize] += 1;
            if g == b {
                counts.eve_correct += 1;
            }
        }
        let p = self.params.unwrap_or(SessionParams {
            block_size: 1,
            mode: threestage_core::wire::WireMode::Rotation,
            message_bits: 0,
        });
        let config = AttackConfig {
            mode: p.mode.session_mode(),
            photons_per_pulse: self.photons_per_pulse.unwrap_or(1),
            bits_per_trial: sent.len(),
            block_size: p.block_size as usize,
            detector: DetectorModel::ideal(),
        };
        Ok(AttackReport::from_counts(&self.strategy, &config, self.seed, counts))
    }
}

#[derive(Default)]
struct Shared {
    params: Option<SessionParams>,
    photons: Option<u32>,
    done: Option<u64>,
}

/// Relays one session between `alice` and `bob` until both sides close.
pub fn eve_proxy(alice: TcpStream, bob: TcpStream, strategy: EveStrategy, seed: u64) -> Result<ProxyOutcome, ProxyError> {
    let eve = Mutex::new(Eve::new(strategy, seed));
    let shared = Mutex::new(Shared::default());
    let (a2b, b2a) = std::thread::scope(|scope| -> std::io::Result<_> {
        let (mut a_read, mut a_write) = (alice.try_clone()?, alice);
        let (mut b_read, mut b_write) = (bob.try_clone()?, bob);
        let (eve, shared) = (&eve, &shared);
        let forward = scope.spawn(move || pump(&mut a_read, &mut b_write, eve, shared));
        let backward = scope.spawn(move || pump(&mut b_read, &mut a_write, eve, shared));
        Ok((
            forward.join().expect("proxy thread panicked"),
            backward.join().expect("proxy thread panicked"),
        ))
    })
    .map_err(NetError::from)?;
    let shared = shared.into_inner().expect("proxy thread panicked");
    Ok(ProxyOutcome {
        strategy,
        seed,
        params: shared.params,
        photons_per_pulse: shared.photons,
        alice_to_bob: a2b?,
        bob_to_alice: b2a?,
        bob_decoded_bytes: shared.done,
        eve: eve.into_inner().expect("proxy thread panicked"),
    })
}

fn pump(
    from: &mut TcpStream,
    to: &mut TcpStream,
    eve: &Mutex<Eve>,
    shared: &Mutex<Shared>,
) -> Result<ForwardCounts, ProxyError> {
    let mut counts = ForwardCounts::default();
    let result = loop {
        let raw = match read_raw(from) {
            Ok(raw) => raw,
            Err(NetError::Closed) => break Ok(()),
            Err(e) => break Err(ProxyError::from(e)),
        };
        let bytes = match raw.frame {
            Ok(frame) => match frame.body {
                FrameBody::Stage(s) => {
                    counts.stage_frames += 1;
                    match relay_stage(frame.session_id, &s, eve, shared) {
                        Ok(Some(bytes)) => {
                            counts.rewritten += 1;
                            bytes
                        }
                        Ok(None) => raw.bytes,
                        Err(e) => break Err(e),
                    }
                }
                body => {
                    let mut sh = shared.lock().expect("proxy thread panicked");
                    match body {
                        FrameBody::Hello(p) | FrameBody::HelloAck(p) => sh.params = Some(p),
                        FrameBody::Done { decoded_bytes } => sh.done = Some(decoded_bytes),
                        _ => {}
                    }
                    raw.bytes
                }
            },
            Err(_) => {
                counts.malformed += 1;
                raw.bytes
            }
        };
        if let Err(e) = to.write_all(&bytes) {
            break Err(NetError::from(e).into());
        }
        counts.frames += 1;
    };
    match result {
        Ok(()) => {
            let _ = to.shutdown(Shutdown::Write);
            Ok(counts)
        }
        Err(e) => {
            // Unblock the opposite pump and both endpoints.
            let _ = from.shutdown(Shutdown::Both);
            let _ = to.shutdown(Shutdown::Both);
            Err(e)
        }
    }
}

// Returns the replacement frame bytes, or `None` to forward the original.
fn relay_stage(
    session_id: u64,
    frame: &StageFrame,
    eve: &Mutex<Eve>,
    shared: &Mutex<Shared>,
) -> Result<Option<Vec<u8>>, ProxyError> {
    if frame.stage == 1 {
        shared.lock().expect("proxy thread panicked").photons.get_or_insert(frame.photon_count);
    }
    let Ok(msg) = frame.to_message() else {
        return Ok(None);
    };
    let out = eve.lock().expect("proxy thread panicked").intercept(msg.clone())?;
    if out == msg {
        return Ok(None);
    }
    let rewritten = StageFrame::from_message(&out).map_err(NetError::from)?;
    let bytes = encode_frame(&threestage_core::wire::Frame {
        session_id,
        body: FrameBody::Stage(rewritten),
    })
    .map_err(NetError::from)?;
    Ok(Some(bytes))
}

/// Accepts one Alice connection on `listener`, dials Bob at `upstream`, and
/// relays the session.
pub fn proxy_tcp<A: ToSocketAddrs>(
    listener: &TcpListener,
    upstream: A,
    strategy: EveStrategy,
    seed: u64,
) -> Result<ProxyOutcome, ProxyError> {
    let (alice, _) = listener.accept().map_err(NetError::from)?;
    let bob = TcpStream::connect(upstream).map_err(NetError::from)?;
    let _ = alice.set_nodelay(true);
    let _ = bob.set_nodelay(true);
    eve_proxy(alice, bob, strategy, seed)
}
