use num_complex::Complex64;
use proptest::prelude::*;

use qtp_core::netsim::frame::{decode_frame, encode_frame, read_frame, Hello, WirePhoton};
use qtp_core::netsim::{AbortReason, Frame};
use qtp_core::statekit::PureState;

fn photon() -> impl Strategy<Value = Frame> {
    (
        any::<[u8; 16]>(),
        any::<u32>(),
        1u8..=3,
        prop::array::uniform4(-1.0f64..1.0),
    )
        .prop_filter_map("degenerate amplitudes", |(session_id, position, pass, a)| {
            let s = PureState::normalized(Complex64::new(a[0], a[1]), Complex64::new(a[2], a[3])).ok()?;
            Some(Frame::Photon(WirePhoton {
                session_id,
                position,
                pass,
                amps: [s.amp_h().re, s.amp_h().im, s.amp_v().re, s.amp_v().im],
            }))
        })
}

fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        (any::<u8>(), any::<u8>(), any::<u16>(), any::<u32>())
            .prop_map(|(version, variant, k, n)| Frame::Hello(Hello { version, variant, k, n })),
        photon(),
        Just(Frame::Done),
        any::<u8>().prop_map(|c| Frame::Abort(AbortReason::from_code(c))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn encode_decode_identity(f in frame()) {
        let bytes = encode_frame(&f);
        let back = decode_frame(&bytes).unwrap();
        prop_assert_eq!(back, f);
        prop_assert_eq!(encode_frame(&back), bytes);
    }
}

proptest! {
    #[test]
    fn streamed_frames_decode_in_order(frames in prop::collection::vec(frame(), 1..20)) {
        let wire: Vec<u8> = frames.iter().flat_map(encode_frame).collect();
        let mut r = wire.as_slice();
        for f in &frames {
            prop_assert_eq!(&read_frame(&mut r).unwrap(), f);
        }
        prop_assert!(r.is_empty());
    }

    #[test]
    fn every_strict_prefix_is_rejected(f in frame(), cut in 0usize..64) {
        let bytes = encode_frame(&f);
        let cut = cut % bytes.len();
        prop_assert!(decode_frame(&bytes[..cut]).is_err());
    }
}
