//! Browser bindings for the interactive demo page in `www/`.
//!
//! Each export takes plain numbers and returns a JSON string; the `*_json`
//! functions hold the logic so they can be tested natively.

use ceps_core::codec::{decode_with_report, encode, message_size_bits, dense_size_bits, EncodingMatrix, DecoderOptions};
use ceps_core::config::ExperimentConfig;
use ceps_core::privacy::{compose_privacy, gaussian_variance, PrivacyParams};
use ceps_core::rng::{derive_seed, substream, Stream};
use ceps_core::simulator::{run_ceps, variant_label};
use ceps_core::sparse::{cosine_similarity, SparsityBudget};
use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_DEMO_N: usize = 4000;
const MAX_DEMO_NODES: usize = 24;

#[derive(Serialize)]
struct CodecDemo {
    original: Vec<f64>,
    decoded: Vec<f64>,
    cosine: f64,
    relative_error: f64,
    mismatches: usize,
    iterations: usize,
    message_bits: u64,
    dense_bits: u64,
}

/// Encodes a random `s`-sparse vector into `d` sign bits and decodes it.
pub fn codec_roundtrip_json(n: usize, s: usize, d: usize, gamma: f64, seed: u64) -> ceps_core::Result<String> {
    if n == 0 || n > MAX_DEMO_N || d == 0 || d > MAX_DEMO_N {
        return Err(ceps_core::Error::invalid("n/d", format!("must be in 1..={MAX_DEMO_N}")));
    }
    let budget = SparsityBudget::for_dimension(s, n)?;
    let mut rng = substream(seed, Stream::Data, 0);
    let mut w = vec![0.0; n];
    for idx in rand::seq::index::sample(&mut rng, n, budget.get()) {
        let mag: f64 = rng.random_range(0.5..2.0);
        w[idx] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    let phi = EncodingMatrix::generate(derive_seed(seed, Stream::Encoding, 0), d, n, 1.0)?;
    let msg = encode(&w, &phi, gamma)?;
    let (z, report) = decode_with_report(&msg, &phi, gamma, budget, &DecoderOptions::default())?;
    let z = z.into_inner();
    let err: f64 = w.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = w.iter().map(|a| a * a).sum::<f64>().sqrt();
    let out = CodecDemo {
        cosine: cosine_similarity(&w, &z),
        relative_error: err / norm,
        mismatches: report.mismatches,
        iterations: report.iterations,
        message_bits: message_size_bits(&msg),
        dense_bits: dense_size_bits(n),
        original: w,
        decoded: z,
    };
    Ok(serde_json::to_string(&out).expect("plain data serializes"))
}

#[derive(Serialize)]
struct RunDemo {
    label: String,
    status: String,
    objective: Vec<f64>,
    residual: Vec<f64>,
    dtv_bytes: Vec<f64>,
    comm_round: Vec<u64>,
    eps_total: f64,
}

/// Small synthetic CEPS run (n = 200, s = 5, 100-200 samples per node).
pub fn ceps_run_json(
    m: usize,
    r: f64,
    epsilon: f64,
    private: bool,
    one_bit: bool,
    max_ticks: u64,
    seed: u64,
) -> ceps_core::Result<String> {
    if !(1..=MAX_DEMO_NODES).contains(&m) {
        return Err(ceps_core::Error::invalid("m", format!("must be in 1..={MAX_DEMO_NODES}")));
    }
    let mut cfg = ExperimentConfig::linreg(200, 5, m);
    cfg.seed = seed;
    cfg.problem.samples_min = 100;
    cfg.problem.samples_max = 200;
    cfg.topology.r = r;
    cfg.privacy.enabled = private;
    cfg.privacy.epsilon = epsilon;
    cfg.privacy.clip = false;
    cfg.codec.perfect_comm = !one_bit;
    cfg.termination.max_ticks = max_ticks.clamp(1, 5000);
    cfg.validate()?;
    let trace = run_ceps(&cfg)?;
    let out = RunDemo {
        label: variant_label(&cfg),
        status: format!("{:?}", trace.status),
        objective: trace.rows.iter().map(|r| r.objective).collect(),
        residual: trace.rows.iter().map(|r| r.consensus_residual).collect(),
        dtv_bytes: trace.rows.iter().map(|r| r.dtv_bits_ideal as f64 / 8.0).collect(),
        comm_round: trace.rows.iter().map(|r| r.comm_round).collect(),
        eps_total: trace.last().map_or(0.0, |r| r.eps_total),
    };
    Ok(serde_json::to_string(&out).expect("plain data serializes"))
}

#[derive(Serialize)]
struct PrivacyCurve {
    variance: f64,
    rounds: Vec<u64>,
    epsilon_total: Vec<f64>,
    delta_total: Vec<f64>,
}

/// Noise variance and composed `(epsilon, delta)` for `1..=max_rounds` rounds.
pub fn privacy_curve_json(epsilon: f64, delta: f64, sensitivity: f64, max_rounds: u64) -> ceps_core::Result<String> {
    let p = PrivacyParams::new(epsilon, delta, sensitivity)?;
    let rounds: Vec<u64> = (1..=max_rounds.clamp(1, 10_000)).collect();
    let spends: Vec<_> = rounds.iter().map(|&a| compose_privacy(a, &p)).collect();
    let out = PrivacyCurve {
        variance: gaussian_variance(&p),
        epsilon_total: spends.iter().map(|s| s.epsilon_total).collect(),
        delta_total: spends.iter().map(|s| s.delta_total_capped).collect(),
        rounds,
    };
    Ok(serde_json::to_string(&out).expect("plain data serializes"))
}

fn js_err(e: ceps_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn codec_roundtrip(n: usize, s: usize, d: usize, gamma: f64, seed: u32) -> Result<String, JsError> {
    codec_roundtrip_json(n, s, d, gamma, seed as u64).map_err(js_err)
}

#[wasm_bindgen]
pub fn ceps_run(
    m: usize,
    r: f64,
    epsilon: f64,
    private: bool,
    one_bit: bool,
    max_ticks: u32,
    seed: u32,
) -> Result<String, JsError> {
    ceps_run_json(m, r, epsilon, private, one_bit, max_ticks as u64, seed as u64).map_err(js_err)
}

#[wasm_bindgen]
pub fn privacy_curve(epsilon: f64, delta: f64, sensitivity: f64, max_rounds: u32) -> Result<String, JsError> {
    privacy_curve_json(epsilon, delta, sensitivity, max_rounds as u64).map_err(js_err)
}
