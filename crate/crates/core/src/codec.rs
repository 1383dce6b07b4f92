//! One-bit compressive-sensing channel.
//!
//! The sender log-rescales its sparse model, normalises it and transmits the
//! signs of `d` random projections together with the model norm. The
//! receiver regenerates the same encoding matrix from its seed, recovers an
//! `s`-sparse unit vector consistent with the signs (normalised binary
//! iterative hard thresholding), undoes the rescaling and restores the norm.
//!
//! Wire format (little-endian):
//!
//! ```text
//! 0xB1 | u32 d | f64 norm | ceil(d/8) bytes of signs, MSB first, 1 => +1
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{euclidean_norm, hard_threshold_in_place, ModelVector, SparseView, SparsityBudget};

pub const WIRE_MAGIC: u8 = 0xB1;
const WIRE_HEADER_BYTES: usize = 1 + 4 + 8;

/// `d x n` measurement matrix, reconstructible from `(seed, d, n, density)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMatrix {
    d: usize,
    n: usize,
    seed: u64,
    density: f64,
    data: Vec<f64>,
}

impl EncodingMatrix {
    /// Draws i.i.d. standard normals, row-major. With `density < 1` each
    /// entry is kept with that probability and zero otherwise.
    pub fn generate(seed: u64, d: usize, n: usize, density: f64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::invalid("d", "encoding matrix needs d >= 1 and n >= 1"));
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(Error::invalid("density", format!("{density} not in (0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = if density >= 1.0 {
            (0..d * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        } else {
            (0..d * n)
                .map(|_| {
                    if rng.random::<f64>() < density {
                        rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        Ok(EncodingMatrix {
            d,
            n,
            seed,
            density,
            data,
        })
    }

    /// Wraps an explicit matrix (tests and small demos).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if d == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("rows", "ragged or empty encoding matrix"));
        }
        Ok(EncodingMatrix {
            d,
            n,
            seed: 0,
            density: 1.0,
            data: rows.concat(),
        })
    }

    pub fn identity(n: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_rows(&rows).expect("identity is well formed")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n..(r + 1) * self.n]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.d).map(|r| self.data[r * self.n + c]).collect()
    }

    fn apply_sparse(&self, x: &SparseView) -> Vec<f64> {
        (0..self.d)
            .map(|r| {
                let row = self.row(r);
                x.indices
                    .iter()
                    .zip(&x.values)
                    .map(|(&j, &v)| row[j] * v)
                    .sum()
            })
            .collect()
    }

    fn apply_transpose_signs(&self, signs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (r, &c) in signs.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(self.row(r)) {
                *o += c * p;
            }
        }
        out
    }
}

/// `sign(t) = 1` if `t > 0`, `-1` otherwise.
#[inline]
pub fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `(norm, signs)` pair sent between neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedMessage {
    norm_bits: u64,
    d: usize,
    packed: Vec<u8>,
}

impl EncodedMessage {
    /// Builds a message from `+1/-1` signs (anything `> 0` is `+1`).
    pub fn from_signs(norm: f64, signs: &[f64]) -> Result<Self> {
        if !(norm.is_finite() && norm >= 0.0) {
            return Err(Error::invalid("norm", format!("{norm} is not a finite nonnegative value")));
        }
        let d = signs.len();
        let mut packed = vec![0u8; d.div_ceil(8)];
        for (i, &c) in signs.iter().enumerate() {
            if c > 0.0 {
                packed[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Ok(EncodedMessage {
            norm_bits: norm.to_bits(),
            d,
            packed,
        })
    }

    /// The message sent for `w = 0`: norm only, no sign bits.
    pub fn zero() -> Self {
        EncodedMessage {
            norm_bits: 0.0f64.to_bits(),
            d: 0,
            packed: Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d == 0
    }

    pub fn norm(&self) -> f64 {
        f64::from_bits(self.norm_bits)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sign_at(&self, i: usize) -> f64 {
        if self.packed[i / 8] & (0x80 >> (i % 8)) != 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn signs(&self) -> Vec<f64> {
        (0..self.d).map(|i| self.sign_at(i)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(WIRE_HEADER_BYTES + self.packed.len());
        out.push(WIRE_MAGIC);
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&self.norm_bits.to_le_bytes());
        out.extend_from_slice(&self.packed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < WIRE_HEADER_BYTES {
            return Err(Error::Wire(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if bytes[0] != WIRE_MAGIC {
            return Err(Error::Wire(format!("bad magic byte {:#04x}", bytes[0])));
        }
        let d = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
        let norm_bits = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
        let norm = f64::from_bits(norm_bits);
        if !(norm.is_finite() && norm >= 0.0) {
            return Err(Error::Wire(format!("invalid norm {norm}")));
        }
        let packed = &bytes[WIRE_HEADER_BYTES..];
        if packed.len() != d.div_ceil(8) {
            return Err(Error::Wire(format!(
                "expected {} sign bytes for d = {d}, found {}",
                d.div_ceil(8),
                packed.len()
            )));
        }
        if d % 8 != 0 {
            let pad_mask = 0xFFu8 >> (d % 8);
            if packed[packed.len() - 1] & pad_mask != 0 {
                return Err(Error::Wire("nonzero padding bits".into()));
            }
        }
        Ok(EncodedMessage {
            norm_bits,
            d,
            packed: packed.to_vec(),
        })
    }
}

/// Idealised size: a 64-bit norm plus one bit per measurement.
pub fn message_size_bits(msg: &EncodedMessage) -> u64 {
    64 + msg.d() as u64
}

/// Size of the framed wire encoding, in bits.
pub fn framed_size_bits(msg: &EncodedMessage) -> u64 {
    8 * (WIRE_HEADER_BYTES + msg.d().div_ceil(8)) as u64
}

/// A dense vector of `n` doubles.
pub fn dense_size_bits(n: usize) -> u64 {
    64 * n as u64
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 1.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("gamma", format!("{gamma} must be finite and > 1")))
    }
}

/// `x_t = sign(w_t) * log_gamma(1 + |w_t|)`, zeros stay zero.
pub fn log_rescale(w: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let ln_gamma = gamma.ln();
    Ok(w
        .iter()
        .map(|&x| {
            if x == 0.0 {
                0.0
            } else {
                x.signum() * x.abs().ln_1p() / ln_gamma
            }
        })
        .collect())
}

/// `v_t = sign(v_t) * (gamma^|v_t| - 1)`, inverse of [`log_rescale`].
pub fn inverse_rescale(v: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    let ln_gamma = gamma.ln();
    Ok(v
        .iter()
        .map(|&x| {
            if x == 0.0 {
                0.0
            } else {
                x.signum() * (x.abs() * ln_gamma).exp_m1()
            }
        })
        .collect())
}

/// Encodes `w` as `(||w||, sign(Phi x / ||x||))` with `x` the log-rescaled `w`.
pub fn encode(w: &[f64], phi: &EncodingMatrix, gamma: f64) -> Result<EncodedMessage> {
    if w.len() != phi.n() {
        return Err(Error::DimensionMismatch {
            expected: phi.n(),
            actual: w.len(),
        });
    }
    let norm = euclidean_norm(w);
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let mut x = log_rescale(w, gamma)?;
    let xn = euclidean_norm(&x);
    x.iter_mut().for_each(|t| *t /= xn);
    let projections = phi.apply_sparse(&SparseView::from_dense(&x));
    let signs: Vec<f64> = projections.into_iter().map(sign).collect();
    EncodedMessage::from_signs(norm, &signs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// Normalised binary iterative hard thresholding.
    #[default]
    Biht,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderOptions {
    pub kind: DecoderKind,
    pub max_iter: usize,
    /// Multiplies the base step `sqrt(pi/2) / d`.
    pub step_scale: f64,
    /// Stop after this many iterations without fewer sign mismatches.
    pub stall_iters: usize,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        DecoderOptions {
            kind: DecoderKind::Biht,
            max_iter: 100,
            step_scale: 1.0,
            stall_iters: 20,
        }
    }
}

/// Outcome of the sign-consistency solve, before rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    pub iterations: usize,
    /// Rows where `sign(Phi v) != c` for the returned `v`.
    pub mismatches: usize,
    pub support: Vec<usize>,
}

fn count_mismatches(projections: &[f64], signs: &[f64]) -> usize {
    projections
        .iter()
        .zip(signs)
        .filter(|(&p, &c)| sign(p) != c)
        .count()
}

fn normalize(x: &mut [f64]) -> bool {
    let nx = euclidean_norm(x);
    if nx == 0.0 || !nx.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|t| *t /= nx);
    true
}

/// Finds an `s`-sparse unit `v` with `sign(Phi v)` matching `signs` as
/// closely as the solver manages. Returns the best iterate seen.
fn biht(
    signs: &[f64],
    phi: &EncodingMatrix,
    s: SparsityBudget,
    opts: &DecoderOptions,
) -> (Vec<f64>, DecodeReport) {
    let d = phi.d();
    let step = opts.step_scale * (std::f64::consts::PI / 2.0).sqrt() / d as f64;

    let mut x = phi.apply_transpose_signs(signs);
    hard_threshold_in_place(&mut x, s);
    if !normalize(&mut x) {
        let report = DecodeReport {
            iterations: 0,
            mismatches: d,
            support: Vec::new(),
        };
        return (vec![0.0; phi.n()], report);
    }

    let mut best = x.clone();
    let mut best_mismatches = usize::MAX;
    let mut stalled = 0;
    let mut iterations = 0;
    for it in 0..=opts.max_iter {
        iterations = it;
        let view = SparseView::from_dense(&x);
        let projections = phi.apply_sparse(&view);
        let mismatched: Vec<usize> = projections
            .iter()
            .zip(signs)
            .enumerate()
            .filter(|(_, (&p, &c))| sign(p) != c)
            .map(|(r, _)| r)
            .collect();
        if mismatched.len() < best_mismatches {
            best_mismatches = mismatched.len();
            best.copy_from_slice(&x);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if mismatched.is_empty() || stalled >= opts.stall_iters || it == opts.max_iter {
            break;
        }
        // Phi^T (c - sign(Phi x)) only has contributions from mismatched rows.
        for &r in &mismatched {
            let scale = 2.0 * signs[r] * step;
            for (xi, &p) in x.iter_mut().zip(phi.row(r)) {
                *xi += scale * p;
            }
        }
        hard_threshold_in_place(&mut x, s);
        if !normalize(&mut x) {
            break;
        }
    }
    let support = SparseView::from_dense(&best).indices;
    (
        best,
        DecodeReport {
            iterations,
            mismatches: best_mismatches,
            support,
        },
    )
}

/// Maps a unit-norm sign-consistent solution back to a model estimate with
/// norm `norm`.
fn restore(v: &[f64], norm: f64, gamma: f64) -> Result<ModelVector> {
    let rescaled = inverse_rescale(v, gamma)?;
    let rn = euclidean_norm(&rescaled);
    if rn == 0.0 || !rn.is_finite() {
        return Err(Error::DecodeFailure);
    }
    let factor = norm / rn;
    Ok(ModelVector::from_finite(
        rescaled.into_iter().map(|t| t * factor).collect(),
    ))
}

/// Recovers a model estimate from a neighbour's message.
pub fn decode(
    msg: &EncodedMessage,
    phi: &EncodingMatrix,
    gamma: f64,
    s: SparsityBudget,
    opts: &DecoderOptions,
) -> Result<ModelVector> {
    decode_with_report(msg, phi, gamma, s, opts).map(|(z, _)| z)
}

pub fn decode_with_report(
    msg: &EncodedMessage,
    phi: &EncodingMatrix,
    gamma: f64,
    s: SparsityBudget,
    opts: &DecoderOptions,
) -> Result<(ModelVector, DecodeReport)> {
    check_gamma(gamma)?;
    if msg.is_zero() {
        let report = DecodeReport {
            iterations: 0,
            mismatches: 0,
            support: Vec::new(),
        };
        return Ok((ModelVector::zeros(phi.n()), report));
    }
    if msg.d() != phi.d() {
        return Err(Error::DimensionMismatch {
            expected: phi.d(),
            actual: msg.d(),
        });
    }
    let signs = msg.signs();
    let (v, report) = match opts.kind {
        DecoderKind::Biht => biht(&signs, phi, s, opts),
    };
    if report.support.is_empty() {
        return Err(Error::DecodeFailure);
    }
    Ok((restore(&v, msg.norm(), gamma)?, report))
}

/// Result of the exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecode {
    pub z: ModelVector,
    pub support: Vec<usize>,
    /// Rows where `sign(Phi v)` agrees with the message.
    pub agreement: usize,
}

const ORACLE_ANGLES: usize = 720;

/// Exhaustive search over supports of size `<= s` (and a 0.5 degree angle
/// grid for pairs) maximising sign agreement. Test oracle only.
pub fn brute_force_decode(
    msg: &EncodedMessage,
    phi: &EncodingMatrix,
    gamma: f64,
    s: SparsityBudget,
) -> Result<OracleDecode> {
    let n = phi.n();
    if n > 12 || s.get() > 2 {
        return Err(Error::OracleTooLarge { n, s: s.get() });
    }
    check_gamma(gamma)?;
    if msg.d() != phi.d() {
        return Err(Error::DimensionMismatch {
            expected: phi.d(),
            actual: msg.d(),
        });
    }
    let signs = msg.signs();
    let columns: Vec<Vec<f64>> = (0..n).map(|j| phi.column(j)).collect();
    let agreement = |v: &[(usize, f64)]| -> usize {
        (0..phi.d())
            .filter(|&r| {
                let p: f64 = v.iter().map(|&(j, a)| columns[j][r] * a).sum();
                sign(p) == signs[r]
            })
            .count()
    };

    let mut best: Option<(usize, Vec<(usize, f64)>)> = None;
    let mut consider = |cand: Vec<(usize, f64)>| {
        let a = agreement(&cand);
        if best.as_ref().is_none_or(|(b, _)| a > *b) {
            best = Some((a, cand));
        }
    };
    for j in 0..n {
        consider(vec![(j, 1.0)]);
        consider(vec![(j, -1.0)]);
    }
    if s.get() >= 2 {
        for j in 0..n {
            for k in j + 1..n {
                for t in 0..ORACLE_ANGLES {
                    let theta = 2.0 * std::f64::consts::PI * t as f64 / ORACLE_ANGLES as f64;
                    let (sn, cs) = theta.sin_cos();
                    if sn.abs() < 1e-12 || cs.abs() < 1e-12 {
                        continue;
                    }
                    consider(vec![(j, cs), (k, sn)]);
                }
            }
        }
    }
    let (agreement, cand) = best.expect("n >= 1 gives at least one candidate");
    let mut v = vec![0.0; n];
    for &(j, a) in &cand {
        v[j] = a;
    }
    let support = cand.iter().map(|&(j, _)| j).collect();
    let z = if msg.norm() == 0.0 {
        ModelVector::zeros(n)
    } else {
        restore(&v, msg.norm(), gamma)?
    };
    Ok(OracleDecode {
        z,
        support,
        agreement,
    })
}

/// Sign agreement of `v` with `msg` under `phi`.
pub fn sign_agreement(msg: &EncodedMessage, phi: &EncodingMatrix, v: &[f64]) -> usize {
    let signs = msg.signs();
    let proj = phi.apply_sparse(&SparseView::from_dense(v));
    phi.d() - count_mismatches(&proj, &signs)
}
