//! The free-space optical bench: beam path, detectors, framing and timing.

mod detector;
mod framing;
mod path;
mod timing;

use alloc::vec::Vec;

pub use detector::{detector_click, DecisionRule, DetectorError, DetectorModel, DetectorOutcome};
pub use framing::{decode_message, encode_message, FramingError};
pub use path::{
    bench_transmit_bit, plate_product, plates_are_identity, Arm, BeamPath, BenchConfig, BenchError, BenchReading,
    Element, Plate, Propagation,
};
pub use timing::{
    rotator_travel_ms, session_schedule, shutter_plan, validate_schedule, BlockPlan, ConstraintViolation, EventKind,
    TimingEvent, TimingLimits, TimingReport,
};

use crate::protocol::{run_session, SessionConfig, SessionMode, SessionTranscript, DEFAULT_BLOCK_SIZE};

/// Everything a bench run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    /// `None` when an erasure left a bit undecided.
    pub decoded: Option<Vec<u8>>,
    pub timing: TimingReport,
    pub transcript: SessionTranscript,
}

impl BenchRun {
    pub fn matches(&self, message: &[u8]) -> bool {
        self.decoded.as_deref() == Some(message)
    }
}

/// Sends `message` across the bench.
///
/// Each block draws fresh plate angles `x` (Alice) and `y` (Bob); the bits
/// travel through the half-wave-plate protocol over neutral mirrors, and the
/// rotator moves needed between blocks are scheduled into the timing report.
pub fn bench_run(
    message: &[u8],
    config: &BenchConfig,
    detector: &DetectorModel,
    seed: u64,
) -> Result<BenchRun, BenchError> {
    if message.is_empty() {
        return Err(BenchError::EmptyMessage);
    }
    config.validate()?;
    detector.validate()?;
    let bits = encode_message(message);
    let session = SessionConfig {
        mode: SessionMode::HalfWavePlates,
        block_size: DEFAULT_BLOCK_SIZE,
        detector: *detector,
        ..SessionConfig::default()
    };
    let transcript = run_session(&bits, &session, seed)?;

    let blocks: Vec<BlockPlan> = transcript
        .keys
        .iter()
        .zip(transcript.sent.chunks(transcript.block_size))
        .map(|(key, chunk)| BlockPlan {
            x: key.theta_a().unwrap_or_default(),
            y: key.theta_b().unwrap_or_default(),
            bits: chunk.to_vec(),
        })
        .collect();
    let timing = session_schedule(&blocks, config.slot_duration, &TimingLimits::from(config))?;

    let decoded = transcript
        .decoded_bits()
        .map(|b| decode_message(&b).expect("message bits are whole bytes"));
    Ok(BenchRun {
        decoded,
        timing,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SimRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hello_round_trip() {
        let run = bench_run(b"hello", &BenchConfig::default(), &DetectorModel::ideal(), 7).unwrap();
        assert!(run.matches(b"hello"));
        assert_eq!(run.transcript.records.len(), 40 * 3);
        assert_eq!(run.timing.bits, 40);
        assert_eq!(run.timing.rotator_travel_ms().len(), 5);
        assert!(run.timing.bits_per_second <= 25.0);
    }

    #[test]
    fn empty_message_rejected() {
        assert_eq!(
            bench_run(b"", &BenchConfig::default(), &DetectorModel::ideal(), 0),
            Err(BenchError::EmptyMessage)
        );
    }

    #[test]
    fn random_messages_decode() {
        let mut rng = SimRng::seed_from_u64(11);
        for seed in 0..1000 {
            let msg: [u8; 8] = rng.random();
            let run = bench_run(&msg, &BenchConfig::default(), &DetectorModel::ideal(), seed).unwrap();
            assert!(run.matches(&msg), "seed {seed}");
        }
    }

    #[test]
    fn deterministic() {
        let a = bench_run(b"xyz", &BenchConfig::default(), &DetectorModel::default(), 3).unwrap();
        let b = bench_run(b"xyz", &BenchConfig::default(), &DetectorModel::default(), 3).unwrap();
        assert_eq!(a, b);
    }
}
