use proptest::prelude::*;
use rand::SeedableRng;

use threestage_core::bench::{decode_message, encode_message};
use threestage_core::linalg::{random_state, random_unitary};
use threestage_core::polarization::{jones_to_stokes, JonesVector, StokesVector};
use threestage_core::protocol::{run_session, ProtocolBit, SessionConfig, SessionMode};
use threestage_core::seed::SimRng;
use threestage_core::wire::{
    decode_frame, encode_frame, ErrorCode, Frame, FrameBody, SessionParams, StageFrame, WireMode,
};

fn stokes_strategy() -> impl Strategy<Value = StokesVector> {
    (0.0f64..360.0, -90.0f64..90.0, 1e-3f64..10.0, 0.0f64..=1.0).prop_map(|(az, el, s0, dop)| {
        let (az, el) = (az.to_radians(), el.to_radians());
        let r = s0 * dop;
        StokesVector::new(s0, r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin())
    })
}

fn wire_mode() -> impl Strategy<Value = WireMode> {
    prop_oneof![
        Just(WireMode::Rotation),
        Just(WireMode::HalfWavePlates),
        Just(WireMode::Pauli),
        Just(WireMode::Hadamard)
    ]
}

fn frame_strategy() -> impl Strategy<Value = Frame> {
    let params = || {
        (1u8..=8, wire_mode(), any::<u64>()).prop_map(|(block_size, mode, message_bits)| SessionParams {
            block_size,
            mode,
            message_bits,
        })
    };
    let stage = (1u8..=3, any::<u32>(), 0u8..8, 1u32.., stokes_strategy()).prop_map(
        |(stage, block_index, bit_index, photon_count, stokes)| StageFrame {
            stage,
            block_index,
            bit_index,
            photon_count,
            stokes,
        },
    );
    let code = prop_oneof![
        Just(ErrorCode::ProtocolViolation),
        Just(ErrorCode::VersionMismatch),
        Just(ErrorCode::MalformedFrame),
        Just(ErrorCode::UnsupportedParams),
        Just(ErrorCode::Internal)
    ];
    let body = prop_oneof![
        params().prop_map(FrameBody::Hello),
        params().prop_map(FrameBody::HelloAck),
        stage.prop_map(FrameBody::Stage),
        any::<u64>().prop_map(|decoded_bytes| FrameBody::Done { decoded_bytes }),
        code.prop_map(FrameBody::Error),
    ];
    (any::<u64>(), body).prop_map(|(session_id, body)| Frame { session_id, body })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn frames_round_trip(frame in frame_strategy()) {
        let bytes = encode_frame(&frame).unwrap();
        if let FrameBody::Stage(_) = frame.body {
            prop_assert_eq!(bytes.len(), 56);
        }
        let (back, used) = decode_frame(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, frame);
        prop_assert_eq!(encode_frame(&back).unwrap(), bytes);
    }
}

proptest! {
    #[test]
    fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
        let _ = decode_frame(&bytes);
    }

    #[test]
    fn decode_is_total_near_valid(
        frame in frame_strategy(),
        flips in proptest::collection::vec((0usize..56, any::<u8>()), 1..4),
        cut in 0usize..57,
    ) {
        let mut bytes = encode_frame(&frame).unwrap();
        for (i, b) in flips {
            if i < bytes.len() {
                bytes[i] = b;
            }
        }
        bytes.truncate(cut);
        if let Ok((_, used)) = decode_frame(&bytes) {
            prop_assert!(used <= bytes.len());
        }
    }

    #[test]
    fn unitaries_preserve_inner_products(seed in any::<u64>(), dim in prop_oneof![Just(2usize), Just(4), Just(8)]) {
        let mut rng = SimRng::seed_from_u64(seed);
        let u = random_unitary(dim, &mut rng);
        let (a, b) = (random_state(dim, &mut rng), random_state(dim, &mut rng));
        let before = a.inner(&b).unwrap();
        let after = u.apply(&a).unwrap().inner(&u.apply(&b).unwrap()).unwrap();
        prop_assert!((before - after).norm() <= 1e-12);
    }

    #[test]
    fn bytes_round_trip(msg in proptest::collection::vec(any::<u8>(), 0..64)) {
        let bits = encode_message(&msg);
        prop_assert_eq!(bits.len(), 8 * msg.len());
        prop_assert_eq!(decode_message(&bits).unwrap(), msg);
    }

    #[test]
    fn jones_stokes_intensity(angle in 0.0f64..180.0, intensity in 1e-3f64..10.0) {
        let s = jones_to_stokes(&JonesVector::linear(angle), intensity).unwrap();
        prop_assert!((s.degree_of_polarization() - 1.0).abs() < 1e-12);
        prop_assert!((s.s0 - intensity).abs() < 1e-15);
    }

    #[test]
    fn noiseless_sessions_decode(bits in proptest::collection::vec(any::<bool>(), 1..40), seed in any::<u64>(), hwp in any::<bool>()) {
        let bits: Vec<ProtocolBit> = bits.into_iter().map(ProtocolBit::from_bool).collect();
        let mode = if hwp { SessionMode::HalfWavePlates } else { SessionMode::Rotation };
        let t = run_session(&bits, &SessionConfig::with_mode(mode), seed).unwrap();
        prop_assert_eq!(t.decoded_bits().unwrap(), bits);
        prop_assert_eq!(t.records.len(), 3 * t.sent.len());
    }
}
