//! Dense vectors and matrices plus the sparse projection `P_Omega`.
//!
//! Storage is always dense; [`SparseView`] is a read-out used when only the
//! support matters (message building, sparse mat-vec).

use std::cmp::Ordering;
use std::num::NonZeroUsize;
use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real parameter vector with finite entries and fixed length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid("values", format!("non-finite entry {bad}")));
        }
        Ok(ModelVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        ModelVector(vec![0.0; n])
    }

    /// Wraps values the caller already knows to be finite.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|x| x.is_finite()));
        ModelVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.0)
    }

    pub fn nnz(&self) -> usize {
        nnz(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn hard_threshold(&self, s: SparsityBudget) -> ModelVector {
        ModelVector(hard_threshold(&self.0, s))
    }

    pub fn sparse_view(&self) -> SparseView {
        SparseView::from_dense(&self.0)
    }
}

impl Deref for ModelVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ModelVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ModelVector::new(values)
    }
}

/// Sparsity level `s >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparsityBudget(NonZeroUsize);

impl SparsityBudget {
    pub fn new(s: usize) -> Result<Self> {
        NonZeroUsize::new(s)
            .map(SparsityBudget)
            .ok_or_else(|| Error::invalid("s", "sparsity level must be at least 1"))
    }

    /// Checks `s <= n` as well.
    pub fn for_dimension(s: usize, n: usize) -> Result<Self> {
        if s > n {
            return Err(Error::invalid("s", format!("s = {s} exceeds dimension n = {n}")));
        }
        Self::new(s)
    }

    pub fn get(self) -> usize {
        self.0.get()
    }
}

/// Nonzero positions and values of a dense vector, indices ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseView {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseView {
    pub fn from_dense(v: &[f64]) -> Self {
        let mut view = SparseView::default();
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                view.indices.push(i);
                view.values.push(x);
            }
        }
        view
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Larger magnitude first; equal magnitudes keep the lower index first.
fn magnitude_order(v: &[f64], a: usize, b: usize) -> Ordering {
    v[b].abs()
        .total_cmp(&v[a].abs())
        .then_with(|| a.cmp(&b))
}

/// Indices of the `s` largest-magnitude entries, ascending.
pub fn top_s_indices(v: &[f64], s: SparsityBudget) -> Vec<usize> {
    let s = s.get();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    if s < v.len() {
        idx.select_nth_unstable_by(s - 1, |&a, &b| magnitude_order(v, a, b));
        idx.truncate(s);
    }
    idx.sort_unstable();
    idx
}

/// `P_Omega(v)`: keeps the `s` largest entries in absolute value and zeroes
/// the rest. Ties go to the lowest index.
pub fn hard_threshold(v: &[f64], s: SparsityBudget) -> Vec<f64> {
    if s.get() >= v.len() {
        return v.to_vec();
    }
    let mut out = vec![0.0; v.len()];
    for i in top_s_indices(v, s) {
        out[i] = v[i];
    }
    out
}

/// In-place variant of [`hard_threshold`].
pub fn hard_threshold_in_place(v: &mut [f64], s: SparsityBudget) {
    if s.get() >= v.len() {
        return;
    }
    let keep = top_s_indices(v, s);
    let mut k = 0;
    for (i, x) in v.iter_mut().enumerate() {
        if k < keep.len() && keep[k] == i {
            k += 1;
        } else {
            *x = 0.0;
        }
    }
}

pub fn euclidean_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn squared_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Inner product with eight independent partial sums, which lets the
/// compiler vectorise; the summation order is fixed, so results are
/// reproducible.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub fn nnz(v: &[f64]) -> usize {
    v.iter().filter(|&&x| x != 0.0).count()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = euclidean_norm(a);
    let nb = euclidean_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds an `n x m` matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[&[f64]]) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.len());
        let cols = columns.len();
        let mut m = Matrix::zeros(rows, cols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    actual: c.len(),
                });
            }
            for (i, &x) in c.iter().enumerate() {
                m.data[i * cols + j] = x;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, x: f64) {
        self.data[r * self.cols + c] = x;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn set_column(&mut self, c: usize, values: &[f64]) {
        for (r, &x) in values.iter().enumerate() {
            self.set(r, c, x);
        }
    }

    /// `self * x`
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data.chunks_exact(self.cols.max(1)).map(|row| dot(row, x)).take(self.rows).collect()
    }

    /// `self * x` touching only the given support of `x`.
    pub fn matvec_sparse(&self, x: &SparseView) -> Vec<f64> {
        (0..self.rows)
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

    /// `self^T * y`
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), &mut out);
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Column sums.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            axpy(1.0, self.row(r), &mut out);
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }
}

/// Applies [`hard_threshold`] to every column of `w`.
pub fn project_columns(w: &Matrix, s: SparsityBudget) -> Matrix {
    let mut out = w.clone();
    for c in 0..w.cols() {
        let col = hard_threshold(&w.column(c), s);
        out.set_column(c, &col);
    }
    out
}

pub fn frobenius_norm(w: &Matrix) -> f64 {
    euclidean_norm(w.data())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(k: usize) -> SparsityBudget {
        SparsityBudget::new(k).unwrap()
    }

    #[test]
    fn threshold_keeps_largest() {
        assert_eq!(hard_threshold(&[3.0, -1.0, 2.0], s(2)), vec![3.0, 0.0, 2.0]);
        assert_eq!(hard_threshold(&[0.0, 0.0, 0.0], s(1)), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn threshold_ties_prefer_low_index() {
        assert_eq!(hard_threshold(&[1.0, 1.0, 1.0], s(2)), vec![1.0, 1.0, 0.0]);
        assert_eq!(hard_threshold(&[-2.0, 1.0, 2.0], s(1)), vec![-2.0, 0.0, 0.0]);
    }

    #[test]
    fn threshold_with_large_budget_is_identity() {
        let v = [1.0, -5.0, 0.25];
        assert_eq!(hard_threshold(&v, s(3)), v.to_vec());
        assert_eq!(hard_threshold(&v, s(10)), v.to_vec());
    }

    #[test]
    fn in_place_matches() {
        let mut v = vec![0.5, -3.0, 3.0, 0.1, -0.2];
        let expect = hard_threshold(&v, s(2));
        hard_threshold_in_place(&mut v, s(2));
        assert_eq!(v, expect);
    }

    #[test]
    fn project_columns_examples() {
        let eye = Matrix::identity(3);
        assert_eq!(project_columns(&eye, s(1)), eye);
        let ones = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let expect = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(project_columns(&ones, s(1)), expect);
    }

    #[test]
    fn project_columns_is_columnwise() {
        let data: Vec<f64> = (0..15).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let w = Matrix::new(5, 3, data).unwrap();
        let p = project_columns(&w, s(2));
        for c in 0..3 {
            assert_eq!(p.column(c), hard_threshold(&w.column(c), s(2)));
        }
    }

    #[test]
    fn norms() {
        assert_eq!(euclidean_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(euclidean_norm(&[0.0; 4]), 0.0);
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(frobenius_norm(&w), 5.0);
    }

    #[test]
    fn model_vector_rejects_non_finite() {
        assert!(ModelVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ModelVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(SparsityBudget::new(0).is_err());
        assert!(SparsityBudget::for_dimension(4, 3).is_err());
    }

    #[test]
    fn matvec_routes_agree() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]]).unwrap();
        let x = [0.0, 2.0, -1.0];
        let view = SparseView::from_dense(&x);
        assert_eq!(a.matvec(&x), a.matvec_sparse(&view));
        assert_eq!(a.matvec_t(&[1.0, 1.0]), a.transpose().matvec(&[1.0, 1.0]));
    }

    /// Best objective over all supports of size exactly min(s, n).
    fn brute_force_best(v: &[f64], k: usize) -> f64 {
        let n = v.len();
        let total: f64 = v.iter().map(|x| x * x).sum();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize > k {
                continue;
            }
            let kept: f64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| v[i] * v[i])
                .sum();
            best = best.min(total - kept);
        }
        best
    }

    proptest! {
        #[test]
        fn threshold_is_a_projection(
            v in prop::collection::vec(-10.0f64..10.0, 1..=10),
            k in 1usize..=10,
        ) {
            let p = hard_threshold(&v, s(k));
            prop_assert!(nnz(&p) <= k);
            for (pi, vi) in p.iter().zip(&v) {
                prop_assert!(*pi == 0.0 || pi == vi);
            }
            let err = squared_distance(&p, &v);
            prop_assert!(err <= brute_force_best(&v, k) + 1e-9);
        }

        #[test]
        fn threshold_idempotent_and_scale_equivariant(
            v in prop::collection::vec(-10.0f64..10.0, 1..=30),
            k in 1usize..=30,
            alpha in 0.01f64..100.0,
        ) {
            let p = hard_threshold(&v, s(k));
            prop_assert_eq!(hard_threshold(&p, s(k)), p.clone());
            let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
            let ps = hard_threshold(&scaled, s(k));
            let expect: Vec<f64> = p.iter().map(|x| alpha * x).collect();
            prop_assert_eq!(
                top_s_indices(&scaled, s(k)),
                top_s_indices(&v, s(k))
            );
            for (a, b) in ps.iter().zip(&expect) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
