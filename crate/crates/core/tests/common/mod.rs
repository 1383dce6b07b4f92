//! Measurements shared by the codec suite and the acceptance harness.

#![allow(dead_code)]

use std::path::PathBuf;

use ceps_core::codec::{brute_force_decode, decode, decode_with_report, encode, DecoderOptions, EncodingMatrix};
use ceps_core::rng::{derive_seed, substream, Stream};
use ceps_core::sparse::{cosine_similarity, SparsityBudget};
use rand::Rng;
use rand_distr::StandardNormal;

pub const GAMMA: f64 = 5.0;

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn sparse_vector(n: usize, s: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, Stream::Data, 7);
    let mut w = vec![0.0; n];
    for idx in rand::seq::index::sample(&mut rng, n, s) {
        let mag: f64 = rng.random_range(0.5..2.0);
        w[idx] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    w
}

/// Fraction of `instances` small problems (n in 2..=8, s = 1, d = 8n) on
/// which the decoder selects the same support as the exhaustive search.
pub fn oracle_agreement_rate(instances: u64) -> f64 {
    let s = SparsityBudget::new(1).unwrap();
    let mut agree = 0;
    for k in 0..instances {
        let n = 2 + (k as usize % 7);
        let mut rng = substream(k, Stream::Data, 3);
        // A dominant coordinate plus a perturbation on every other one.
        let mut w: Vec<f64> = (0..n).map(|_| 0.2 * rng.sample::<f64, _>(StandardNormal)).collect();
        let j = rng.random_range(0..n);
        w[j] += if rng.random_bool(0.5) { 1.5 } else { -1.5 };
        let phi = EncodingMatrix::generate(derive_seed(k, Stream::Encoding, 0), 8 * n, n, 1.0).unwrap();
        let msg = encode(&w, &phi, GAMMA).unwrap();
        let (_, report) = decode_with_report(&msg, &phi, GAMMA, s, &DecoderOptions::default()).unwrap();
        let oracle = brute_force_decode(&msg, &phi, GAMMA, s).unwrap();
        if report.support == oracle.support {
            agree += 1;
        }
    }
    agree as f64 / instances as f64
}

/// Median cosine similarity between `w` and its decode over `trials`
/// random `s`-sparse vectors.
pub fn median_cosine(n: usize, s: usize, d: usize, trials: u64) -> f64 {
    let mut cos: Vec<f64> = (0..trials)
        .map(|trial| {
            let w = sparse_vector(n, s, 1000 + trial);
            let phi = EncodingMatrix::generate(derive_seed(trial, Stream::Encoding, 1), d, n, 1.0).unwrap();
            let msg = encode(&w, &phi, GAMMA).unwrap();
            let z = decode(&msg, &phi, GAMMA, SparsityBudget::new(s).unwrap(), &DecoderOptions::default()).unwrap();
            cosine_similarity(&w, z.as_slice())
        })
        .collect();
    cos.sort_by(f64::total_cmp);
    let mid = cos.len() / 2;
    if cos.len() % 2 == 0 {
        0.5 * (cos[mid - 1] + cos[mid])
    } else {
        cos[mid]
    }
}

/// Largest `|a - b| / |b|` over the privacy reference grid (exact match
/// required where the reference is zero).
pub fn privacy_grid_max_rel_error() -> (usize, f64) {
    use ceps_core::privacy::{compose_privacy, gaussian_variance, PrivacyParams};
    let text = std::fs::read_to_string(data_path("privacy_grid.csv")).unwrap();
    let mut worst: f64 = 0.0;
    let mut rows = 0;
    let rel = |a: f64, b: f64| if b == 0.0 { if a == 0.0 { 0.0 } else { f64::INFINITY } } else { ((a - b) / b).abs() };
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let p = PrivacyParams::new(f[0], f[1], f[2]).unwrap();
        let spend = compose_privacy(f[3] as u64, &p);
        worst = worst
            .max(rel(gaussian_variance(&p), f[4]))
            .max(rel(spend.epsilon_total, f[5]))
            .max(rel(spend.delta_total_raw, f[6]));
        rows += 1;
    }
    (rows, worst)
}
