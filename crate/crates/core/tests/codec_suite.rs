use ceps_core::codec::{decode, encode, inverse_rescale, log_rescale, DecoderOptions, EncodedMessage, EncodingMatrix};
use ceps_core::rng::{derive_seed, substream, Stream};
use ceps_core::sparse::{euclidean_norm, SparsityBudget};
use rand::Rng;
use rand_distr::StandardNormal;

mod common;

use common::{median_cosine, oracle_agreement_rate, sparse_vector, GAMMA};

#[test]
fn rescale_roundtrip_is_accurate() {
    let mut rng = substream(1, Stream::Data, 0);
    for gamma in [1.5, 2.0, 5.0, 10.0, 100.0] {
        for _ in 0..200 {
            let w: Vec<f64> = (0..50)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 10f64.powi(rng.random_range(-6..4)))
                .collect();
            let back = inverse_rescale(&log_rescale(&w, gamma).unwrap(), gamma).unwrap();
            for (a, b) in w.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} -> {b} at gamma {gamma}");
            }
        }
    }
}

#[test]
fn decoded_norm_equals_transmitted_norm() {
    for trial in 0..100u64 {
        let n = 20 + (trial as usize % 7) * 30;
        let s = 1 + trial as usize % 6;
        let w = sparse_vector(n, s, trial);
        let phi = EncodingMatrix::generate(derive_seed(trial, Stream::Encoding, 0), n / 2, n, 1.0).unwrap();
        let msg = encode(&w, &phi, GAMMA).unwrap();
        assert_eq!(msg.norm(), euclidean_norm(&w));
        let z = decode(&msg, &phi, GAMMA, SparsityBudget::new(s).unwrap(), &DecoderOptions::default()).unwrap();
        let got = z.norm();
        // Floating-point rescaling: equal to within a few units in the last place.
        assert!((got - msg.norm()).abs() <= 4.0 * f64::EPSILON * msg.norm(), "{got} vs {}", msg.norm());
        assert!(z.nnz() <= s);
    }
}

#[test]
fn zero_model_uses_the_zero_message() {
    let phi = EncodingMatrix::generate(3, 10, 20, 1.0).unwrap();
    assert!(encode(&[0.0; 20], &phi, GAMMA).is_err());
    let msg = EncodedMessage::zero();
    assert!(msg.is_zero());
    let z = decode(&msg, &phi, GAMMA, SparsityBudget::new(3).unwrap(), &DecoderOptions::default()).unwrap();
    assert!(z.is_zero());
    assert_eq!(EncodedMessage::from_bytes(&msg.to_bytes()).unwrap(), msg);
}

#[test]
fn decoder_support_matches_exhaustive_search() {
    let rate = oracle_agreement_rate(200);
    assert!(rate >= 0.95, "agreement {rate}");
}

#[test]
fn decoder_recovers_direction_at_half_dimension() {
    let median = median_cosine(1000, 10, 500, 50);
    assert!(median >= 0.9, "median cosine {median}");
}

#[test]
fn wire_format_survives_roundtrip_and_rejects_garbage() {
    let w = sparse_vector(64, 4, 5);
    let phi = EncodingMatrix::generate(11, 37, 64, 1.0).unwrap();
    let msg = encode(&w, &phi, GAMMA).unwrap();
    let bytes = msg.to_bytes();
    assert_eq!(bytes.len(), 13 + 37usize.div_ceil(8));
    assert_eq!(EncodedMessage::from_bytes(&bytes).unwrap(), msg);
    assert!(EncodedMessage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(EncodedMessage::from_bytes(&bad).is_err());
}
