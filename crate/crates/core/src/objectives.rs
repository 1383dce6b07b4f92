//! Local losses, synthetic regression data, LibSVM ingestion and the
//! spectral constants used to pick step sizes.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::sparse::{axpy, dot, euclidean_norm, squared_norm, Matrix, SparseView};

/// Samples held privately by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDataset {
    features: Matrix,
    labels: Vec<f64>,
}

impl NodeDataset {
    pub fn new(features: Matrix, labels: Vec<f64>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if features.rows() == 0 {
            return Err(Error::EmptyDataset("node dataset has no samples".into()));
        }
        if !features.data().iter().chain(&labels).all(|x| x.is_finite()) {
            return Err(Error::invalid("dataset", "entries must be finite"));
        }
        Ok(NodeDataset { features, labels })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// `m_i`
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: w.len(),
            });
        }
        Ok(())
    }

    /// `A w`, using only the support of `w` when it is sparse.
    fn predict(&self, w: &[f64]) -> Vec<f64> {
        let view = SparseView::from_dense(w);
        if view.nnz() * 4 < w.len() {
            self.features.matvec_sparse(&view)
        } else {
            self.features.matvec(w)
        }
    }

    /// `sum_t phi(<a_t, w>, b_t) a_t` in a single sweep over the rows, so
    /// each row is read from memory once.
    fn fused_gradient(&self, w: &[f64], phi: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let view = SparseView::from_dense(w);
        let sparse = view.nnz() * 4 < w.len();
        let mut g = vec![0.0; w.len()];
        for (r, &b) in self.labels.iter().enumerate() {
            let row = self.features.row(r);
            let t = if sparse {
                view.indices.iter().zip(&view.values).map(|(&j, &v)| row[j] * v).sum()
            } else {
                dot(row, w)
            };
            let c = phi(t, b);
            if c != 0.0 {
                axpy(c, row, &mut g);
            }
        }
        g
    }

    fn check_binary(&self) -> Result<()> {
        match self.labels.iter().find(|&&b| b != 0.0 && b != 1.0) {
            Some(&b) => Err(Error::NonBinaryLabel(b)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    LinearRegression,
    LogisticRegression,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_regression" | "linreg" => Ok(ObjectiveKind::LinearRegression),
            "logistic_regression" | "logreg" => Ok(ObjectiveKind::LogisticRegression),
            other => Err(Error::invalid("objective", format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    /// Ridge penalty; only used by the logistic loss.
    pub lambda: f64,
}

impl ObjectiveSpec {
    pub fn linear() -> Self {
        ObjectiveSpec {
            kind: ObjectiveKind::LinearRegression,
            lambda: 0.0,
        }
    }

    pub fn logistic(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "ridge penalty must be nonnegative"));
        }
        Ok(ObjectiveSpec {
            kind: ObjectiveKind::LogisticRegression,
            lambda,
        })
    }

    pub fn value(&self, w: &[f64], data: &NodeDataset) -> Result<f64> {
        match self.kind {
            ObjectiveKind::LinearRegression => linreg_value(w, data),
            ObjectiveKind::LogisticRegression => logreg_value(w, data, self.lambda),
        }
    }

    pub fn gradient(&self, w: &[f64], data: &NodeDataset) -> Result<Vec<f64>> {
        match self.kind {
            ObjectiveKind::LinearRegression => linreg_grad(w, data),
            ObjectiveKind::LogisticRegression => logreg_grad(w, data, self.lambda),
        }
    }

    /// Gradient Lipschitz constant of one node's loss.
    pub fn lipschitz(&self, data: &NodeDataset) -> PowerEstimate {
        let est = gram_lambda_max(data.features());
        let m_i = data.num_samples() as f64;
        let value = match self.kind {
            ObjectiveKind::LinearRegression => est.value / m_i,
            ObjectiveKind::LogisticRegression => est.value / (4.0 * m_i) + self.lambda,
        };
        PowerEstimate { value, ..est }
    }
}

/// `||A w - b||^2 / (2 m_i)`
pub fn linreg_value(w: &[f64], data: &NodeDataset) -> Result<f64> {
    data.check_dim(w)?;
    let pred = data.predict(w);
    let sq: f64 = pred.iter().zip(data.labels()).map(|(p, b)| (p - b) * (p - b)).sum();
    Ok(sq / (2.0 * data.num_samples() as f64))
}

/// `A^T (A w - b) / m_i`
pub fn linreg_grad(w: &[f64], data: &NodeDataset) -> Result<Vec<f64>> {
    data.check_dim(w)?;
    let m_i = data.num_samples() as f64;
    Ok(data.fused_gradient(w, |t, b| (t - b) / m_i))
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `(1/m_i) sum [ln(1 + e^<a,w>) - b <a,w>] + (lambda/2) ||w||^2`
pub fn logreg_value(w: &[f64], data: &NodeDataset, lambda: f64) -> Result<f64> {
    data.check_dim(w)?;
    data.check_binary()?;
    let pred = data.predict(w);
    let loss: f64 = pred.iter().zip(data.labels()).map(|(&t, &b)| softplus(t) - b * t).sum();
    Ok(loss / data.num_samples() as f64 + 0.5 * lambda * squared_norm(w))
}

/// `(1/m_i) sum (logistic(<a,w>) - b) a + lambda w`
pub fn logreg_grad(w: &[f64], data: &NodeDataset, lambda: f64) -> Result<Vec<f64>> {
    data.check_dim(w)?;
    data.check_binary()?;
    let m_i = data.num_samples() as f64;
    let mut g = data.fused_gradient(w, |t, b| (logistic(t) - b) / m_i);
    if lambda != 0.0 {
        axpy(lambda, w, &mut g);
    }
    Ok(g)
}

/// Sparse linear-regression instance with a known ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticProblem {
    pub nodes: Vec<NodeDataset>,
    pub w_star: Vec<f64>,
    pub s: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinregGenerator {
    pub n: usize,
    pub s: usize,
    pub m: usize,
    pub samples_min: usize,
    pub samples_max: usize,
    pub noise_scale: f64,
}

impl LinregGenerator {
    pub fn new(n: usize, s: usize, m: usize) -> Self {
        LinregGenerator {
            n,
            s,
            m,
            samples_min: 250,
            samples_max: 750,
            noise_scale: 0.5,
        }
    }
}

/// `b_i = A_i w* + noise_scale * e_i` with standard normal `A_i`, `e_i`;
/// `w*` has exactly `s` nonzeros with magnitudes uniform on `[0.5, 2]` and
/// random signs. Node `i` draws from its own substream, so instances are
/// identical whatever the node count of other runs.
pub fn generate_linreg_problem(cfg: &LinregGenerator, seed: u64) -> Result<SyntheticProblem> {
    let LinregGenerator {
        n,
        s,
        m,
        samples_min,
        samples_max,
        noise_scale,
    } = *cfg;
    if s == 0 || s > n {
        return Err(Error::invalid("s", format!("need 1 <= s <= n, got s={s}, n={n}")));
    }
    if m == 0 {
        return Err(Error::invalid("m", "need at least one node"));
    }
    if samples_min == 0 || samples_min > samples_max {
        return Err(Error::invalid("samples", format!("bad range [{samples_min}, {samples_max}]")));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::invalid("noise_scale", "must be nonnegative"));
    }

    let mut rng = substream(seed, Stream::Data, u64::MAX);
    let mut w_star = vec![0.0; n];
    for idx in rand::seq::index::sample(&mut rng, n, s) {
        let mag = rng.random_range(0.5..=2.0);
        w_star[idx] = if rng.random::<bool>() { mag } else { -mag };
    }

    let nodes = (0..m)
        .map(|i| {
            let mut rng = substream(seed, Stream::Data, i as u64);
            let m_i = rng.random_range(samples_min..=samples_max);
            let data: Vec<f64> = (0..m_i * n).map(|_| rng.sample(StandardNormal)).collect();
            let features = Matrix::new(m_i, n, data)?;
            let mut labels = features.matvec(&w_star);
            for b in &mut labels {
                let e: f64 = rng.sample(StandardNormal);
                *b += noise_scale * e;
            }
            NodeDataset::new(features, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticProblem { nodes, w_star, s })
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"CEPSSYN1";

impl SyntheticProblem {
    /// Little-endian snapshot: magic, `n`, `s`, `m` (u64), `w*`, then for each
    /// node `m_i` (u64), the row-major features and the labels (f64).
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        for x in [self.w_star.len(), self.s, self.nodes.len()] {
            out.write_all(&(x as u64).to_le_bytes())?;
        }
        let put = |out: &mut W, xs: &[f64]| -> std::io::Result<()> {
            for x in xs {
                out.write_all(&x.to_le_bytes())?;
            }
            Ok(())
        };
        put(&mut out, &self.w_star)?;
        for node in &self.nodes {
            out.write_all(&(node.num_samples() as u64).to_le_bytes())?;
            put(&mut out, node.features().data())?;
            put(&mut out, node.labels())?;
        }
        out.flush()
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Wire(format!("snapshot read failed: {e}")))?;
        let mut cur = SnapshotCursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != SNAPSHOT_MAGIC {
            return Err(Error::Wire("not a problem snapshot".into()));
        }
        let n = cur.usize()?;
        let s = cur.usize()?;
        let m = cur.usize()?;
        let w_star = cur.f64s(n)?;
        let mut nodes = Vec::with_capacity(m.min(1 << 16));
        for _ in 0..m {
            let m_i = cur.usize()?;
            let cells = m_i
                .checked_mul(n)
                .ok_or_else(|| Error::Wire("snapshot dimensions overflow".into()))?;
            let features = Matrix::new(m_i, n, cur.f64s(cells)?)?;
            nodes.push(NodeDataset::new(features, cur.f64s(m_i)?)?);
        }
        if cur.pos != bytes.len() {
            return Err(Error::Wire("trailing bytes after snapshot".into()));
        }
        Ok(SyntheticProblem { nodes, w_star, s })
    }
}

struct SnapshotCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> SnapshotCursor<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(k)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Wire("snapshot truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn usize(&mut self) -> Result<usize> {
        let raw = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(raw).map_err(|_| Error::Wire("snapshot size overflow".into()))
    }

    fn f64s(&mut self, k: usize) -> Result<Vec<f64>> {
        let len = k.checked_mul(8).ok_or_else(|| Error::Wire("snapshot size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Dense design matrix plus `{0, 1}` labels read from LibSVM text.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: Matrix,
    pub labels: Vec<f64>,
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<LabeledData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm(&text, &path.display().to_string())
}

/// `label idx:val ...` per line with 1-based indices. Blank lines and lines
/// starting with `#` are skipped. Labels `{-1, +1}`, `{1, 2}` and `{0, 1}`
/// are mapped to `{0, 1}`.
pub fn parse_libsvm(text: &str, origin: &str) -> Result<LabeledData> {
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: origin.to_string(),
        line,
        reason,
    };
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut dim = 0;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label: f64 = tokens
            .next()
            .unwrap()
            .parse()
            .map_err(|_| parse_err(k + 1, "label is not a number".into()))?;
        let mut row = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_err(k + 1, format!("expected idx:val, found `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_err(k + 1, format!("bad feature index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_err(k + 1, "feature indices are 1-based".into()));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| parse_err(k + 1, format!("bad feature value `{val}`")))?;
            if !val.is_finite() {
                return Err(parse_err(k + 1, format!("non-finite feature value `{val}`")));
            }
            dim = dim.max(idx);
            row.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset(format!("{origin} contains no samples")));
    }
    let labels = map_binary_labels(&raw_labels)?;
    let mut features = Matrix::zeros(rows.len(), dim);
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            features.set(r, c, v);
        }
    }
    Ok(LabeledData { features, labels })
}

fn map_binary_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let within = |set: [f64; 2]| raw.iter().all(|x| set.contains(x));
    let (neg, _pos) = if within([0.0, 1.0]) {
        (0.0, 1.0)
    } else if within([-1.0, 1.0]) {
        (-1.0, 1.0)
    } else if within([1.0, 2.0]) {
        (1.0, 2.0)
    } else {
        let bad = raw
            .iter()
            .copied()
            .find(|x| ![-1.0, 0.0, 1.0, 2.0].contains(x))
            .unwrap_or(raw[0]);
        return Err(Error::NonBinaryLabel(bad));
    };
    Ok(raw.iter().map(|&x| if x == neg { 0.0 } else { 1.0 }).collect())
}

/// Random balanced split: sizes differ by at most one, larger parts first.
pub fn partition<R: Rng + ?Sized>(data: &LabeledData, m: usize, rng: &mut R) -> Result<Vec<NodeDataset>> {
    let total = data.labels.len();
    if m == 0 || m > total {
        return Err(Error::invalid("m", format!("cannot split {total} samples across {m} nodes")));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(rng);
    let (base, extra) = (total / m, total % m);
    let mut start = 0;
    (0..m)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let idx = &order[start..start + size];
            start += size;
            let rows: Vec<Vec<f64>> = idx.iter().map(|&r| data.features.row(r).to_vec()).collect();
            NodeDataset::new(Matrix::from_rows(&rows)?, idx.iter().map(|&r| data.labels[r]).collect())
        })
        .collect()
}

pub const POWER_TOL: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 2000;
const POWER_SEED: u64 = 0x5eed_1a4b_da00_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest eigenvalue of `A^T A` by power iteration from a fixed random
/// start, stopping once the Rayleigh quotient changes by less than
/// `POWER_TOL` relative between iterations.
pub fn gram_lambda_max(a: &Matrix) -> PowerEstimate {
    let n = a.cols();
    let zero = |iterations| PowerEstimate {
        value: 0.0,
        iterations,
        converged: true,
    };
    if n == 0 || a.rows() == 0 {
        return zero(0);
    }
    let mut rng = substream(POWER_SEED, Stream::PowerIteration, n as u64);
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let nv = euclidean_norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda = f64::NAN;
    for it in 1..=POWER_MAX_ITER {
        let mv = a.matvec_t(&a.matvec(&v));
        let next = dot(&v, &mv);
        let norm = euclidean_norm(&mv);
        if norm == 0.0 {
            return zero(it);
        }
        v = mv.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= POWER_TOL * next {
            return PowerEstimate {
                value: next,
                iterations: it,
                converged: true,
            };
        }
        lambda = next;
    }
    log::warn!("power iteration hit {POWER_MAX_ITER} iterations without converging");
    PowerEstimate {
        value: lambda,
        iterations: POWER_MAX_ITER,
        converged: false,
    }
}

/// `sigma_i = c * lambda_max(A_i^T A_i) / (m (2r + 0.1) d_i)`
pub fn sigma_from_lambda(lambda_max: f64, m: usize, r: f64, d_i: usize, c_knob: f64) -> f64 {
    c_knob * lambda_max / (m as f64 * (2.0 * r + 0.1) * d_i as f64)
}

pub fn compute_sigma_i(data: &NodeDataset, m: usize, r: f64, d_i: usize, c_knob: f64) -> (f64, PowerEstimate) {
    let est = gram_lambda_max(data.features());
    (sigma_from_lambda(est.value, m, r, d_i, c_knob), est)
}

/// `max_i` of the per-node gradient Lipschitz constants.
pub fn estimate_lipschitz(spec: &ObjectiveSpec, nodes: &[NodeDataset]) -> f64 {
    nodes
        .iter()
        .map(|d| spec.lipschitz(d).value)
        .fold(0.0, f64::max)
}
