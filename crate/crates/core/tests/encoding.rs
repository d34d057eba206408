use doco::encoding::*;
use doco::rng::{stream_rng, STREAM_ENCODER};
use proptest::prelude::*;

mod common;
use common::exact_mean;

fn in_ball(raw: Vec<f64>, g: f64) -> Vec<f64> {
    let n = norm(&raw);
    if n > g {
        raw.iter().map(|x| x * g / n * (1.0 - 1e-15)).collect()
    } else {
        raw
    }
}

proptest! {
    #[test]
    fn deterministic_error_within_cell(d in 1usize..8, q in 1usize..24, g in 0.1f64..10.0, raw in proptest::collection::vec(-10.0f64..10.0, 8)) {
        let x = in_ball(raw[..d].to_vec(), g);
        let spec = EncoderSpec::deterministic(d, g, d * q).unwrap();
        let bits = encode_deterministic(&x, &spec).unwrap();
        prop_assert_eq!(bits.len(), d * q);
        let y = decode_deterministic(&bits, &spec).unwrap();
        let cell = g * 2f64.powi(-(q as i32));
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= cell * (1.0 + 1e-12));
        }
        let e: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&e) <= spec.error_bound() * (1.0 + 1e-12));
        prop_assert!(norm(&y) <= spec.decoded_norm_bound() * (1.0 + 1e-12));
        if norm(&y) <= g {
            prop_assert_eq!(encode_deterministic(&y, &spec).unwrap(), bits);
        }
    }

    #[test]
    fn stochastic_mean_is_exact(d in 1usize..=8, m in 1usize..=2, p in 0usize..=3, raw in proptest::collection::vec(-1.0f64..1.0, 8)) {
        let x = in_ball(raw[..d].to_vec(), 1.0);
        let spec = EncoderSpec::stochastic(d, 1.0, m * (index_bits(d) + p + 2), p).unwrap();
        prop_assert_eq!(spec.repetitions(), m);
        let mean = exact_mean(&x, &spec);
        for (a, b) in x.iter().zip(&mean) {
            prop_assert!((a - b).abs() <= 1e-12, "x = {:?}, mean = {:?}", x, mean);
        }
    }

    #[test]
    fn stochastic_payload_decodes_in_range(d in 1usize..16, p in 0usize..6, seed in any::<u64>(), raw in proptest::collection::vec(-1.0f64..1.0, 16)) {
        let x = in_ball(raw[..d].to_vec(), 1.0);
        let spec = EncoderSpec::stochastic(d, 1.0, 3 * (index_bits(d) + p + 2) + 1, p).unwrap();
        let bits = encode_stochastic(&x, &spec, &mut stream_rng(seed, STREAM_ENCODER, 0)).unwrap();
        prop_assert_eq!(bits.len(), spec.payload_len());
        prop_assert!(spec.payload_len() <= spec.bits_per_gradient);
        let y = decode_stochastic(&bits, &spec).unwrap();
        prop_assert!(norm(&y) <= spec.decoded_norm_bound());
    }
}

#[test]
fn variance_bound_holds_by_monte_carlo() {
    let spec = EncoderSpec::stochastic(8, 1.0, 2 * (3 + 3 + 2), 3).unwrap();
    let (alpha, beta) = variance_bound(&spec).unwrap();
    let x = [0.5, -0.3, 0.1, 0.0, 0.2, -0.4, 0.05, 0.3];
    let n = 20_000;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for s in 0..n {
        let bits = encode_stochastic(&x, &spec, &mut stream_rng(9, STREAM_ENCODER, s)).unwrap();
        let y = decode_stochastic(&bits, &spec).unwrap();
        let e: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        sum += e;
        sq += e * e;
    }
    let mean = sum / n as f64;
    let sd = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    let x2: f64 = x.iter().map(|v| v * v).sum();
    assert!(mean - 3.0 * sd <= alpha * x2 + beta, "{mean} vs {}", alpha * x2 + beta);
}

#[test]
fn quantization_levels() {
    assert_eq!(quantize_level(0.3, 1.0, 2), (1, 0.19999999999999996));
    assert_eq!(quantize_level(-1.0, 1.0, 2), (3, 1.0));
    assert_eq!(quantize_level(0.5, 1.0, 2), (2, 0.0));
    assert_eq!(quantize_level(0.7, 1.0, 0), (0, 0.7));
}

#[test]
fn invalid_inputs() {
    let spec = EncoderSpec::deterministic(2, 1.0, 8).unwrap();
    assert!(matches!(encode_deterministic(&[1.0, 1.0], &spec), Err(EncodingError::NormExceeded { .. })));
    assert!(matches!(encode_deterministic(&[0.1], &spec), Err(EncodingError::InvalidParameter(_))));
    assert!(matches!(
        decode_deterministic(&[true; 7], &spec),
        Err(EncodingError::PayloadLength { got: 7, expected: 8 })
    ));
    assert!(matches!(decode_stochastic(&[true; 8], &spec), Err(EncodingError::WrongKind(_))));
    let st = EncoderSpec::stochastic(4, 1.0, 6, 1).unwrap();
    assert!(variance_bound(&st).is_err());
    assert_eq!(bits_to_hex(&[true, false, true, true, true]), "b8");
    assert_eq!(index_bits(1), 0);
    assert_eq!(index_bits(8), 3);
    assert_eq!(index_bits(9), 4);
}
