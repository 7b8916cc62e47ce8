//! Dense/sparse matrix substrate shared by all solvers.
//!
//! [`DenseMatrix`] holds ground truths and small dense workspaces,
//! [`SparseObservations`] holds the observed set `E` with its (noisy) values,
//! and [`FactoredMatrix`] represents rank-`r` estimates without materializing
//! the full product. NaN/Inf are rejected at construction so the numeric
//! kernels never have to re-validate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An `m x n` real matrix with all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    inner: DMatrix<f64>,
}

impl DenseMatrix {
    /// Build from entries in row-major order. Rejects NaN/Inf and size
    /// mismatches.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        let inner = DMatrix::from_row_slice(rows, cols, entries);
        Self::from_dmatrix(inner)
    }

    /// Wrap an existing dense matrix, validating finiteness.
    pub fn from_dmatrix(inner: DMatrix<f64>) -> Result<Self> {
        for j in 0..inner.ncols() {
            for i in 0..inner.nrows() {
                if !inner[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { inner })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            inner: DMatrix::zeros(rows, cols),
        }
    }

    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.inner
    }

    /// `sqrt(sum of squared entries)`.
    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// One observed entry `(i, j, N_ij)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// The observed set `E` together with its values, stored as coordinate
/// triples sorted by `(row, col)` plus row/column adjacency for the solvers'
/// per-row loops.
#[derive(Debug, Clone)]
pub struct SparseObservations {
    rows: usize,
    cols: usize,
    entries: Vec<Observation>,
    /// CSR-style offsets into `entries` (which are sorted by row, then col).
    row_start: Vec<usize>,
    /// For each column, the indices into `entries` that fall in it.
    col_entries: Vec<Vec<usize>>,
}

impl SparseObservations {
    /// Build from `(row, col, value)` triples. Validates bounds, finiteness
    /// and uniqueness of the index pairs.
    pub fn from_triples(
        rows: usize,
        cols: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<Observation> = triples
            .into_iter()
            .map(|(row, col, value)| Observation { row, col, value })
            .collect();
        for e in &entries {
            if e.row >= rows || e.col >= cols {
                return Err(Error::IndexOutOfBounds {
                    row: e.row,
                    col: e.col,
                    rows,
                    cols,
                });
            }
            if !e.value.is_finite() {
                return Err(Error::NonFinite {
                    row: e.row,
                    col: e.col,
                });
            }
        }
        entries.sort_unstable_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
        for w in entries.windows(2) {
            if w[0].row == w[1].row && w[0].col == w[1].col {
                return Err(Error::DuplicateEntry {
                    row: w[0].row,
                    col: w[0].col,
                });
            }
        }
        Ok(Self::from_sorted(rows, cols, entries))
    }

    fn from_sorted(rows: usize, cols: usize, entries: Vec<Observation>) -> Self {
        let mut row_start = vec![0usize; rows + 1];
        for e in &entries {
            row_start[e.row + 1] += 1;
        }
        for i in 0..rows {
            row_start[i + 1] += row_start[i];
        }
        let mut col_entries = vec![Vec::new(); cols];
        for (k, e) in entries.iter().enumerate() {
            col_entries[e.col].push(k);
        }
        Self {
            rows,
            cols,
            entries,
            row_start,
            col_entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `|E|`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sampling fraction `p = |E| / (m n)`.
    pub fn sampling_fraction(&self) -> f64 {
        self.entries.len() as f64 / (self.rows as f64 * self.cols as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Observation> {
        self.entries.iter()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    /// Entries of row `i` (sorted by column).
    pub fn row(&self, i: usize) -> &[Observation] {
        &self.entries[self.row_start[i]..self.row_start[i + 1]]
    }

    /// Indices into `entries()` for column `j`.
    pub fn col_indices(&self, j: usize) -> &[usize] {
        &self.col_entries[j]
    }

    pub fn row_counts(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|i| self.row_start[i + 1] - self.row_start[i])
            .collect()
    }

    pub fn col_counts(&self) -> Vec<usize> {
        self.col_entries.iter().map(Vec::len).collect()
    }

    /// Same index set, new values (`values[k]` pairs with `entries()[k]`).
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values, got {}",
                self.entries.len(),
                values.len()
            )));
        }
        let entries: Vec<Observation> = self
            .entries
            .iter()
            .zip(values)
            .map(|(e, &value)| {
                if value.is_finite() {
                    Ok(Observation { value, ..*e })
                } else {
                    Err(Error::NonFinite {
                        row: e.row,
                        col: e.col,
                    })
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self::from_sorted(self.rows, self.cols, entries))
    }

    /// `sqrt(sum of stored values squared)`; indices outside `E` count as 0.
    pub fn frobenius_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.value * e.value)
            .sum::<f64>()
            .sqrt()
    }

    /// Zero-filled dense embedding `N^E`.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for e in &self.entries {
            out[(e.row, e.col)] = e.value;
        }
        DenseMatrix { inner: out }
    }
}

/// `P_E(A)`: the values of `A` at exactly `E`'s index set.
pub fn project_observed(a: &DenseMatrix, e: &SparseObservations) -> Result<SparseObservations> {
    if a.rows() != e.rows() || a.cols() != e.cols() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, observation set is {}x{}",
            a.rows(),
            a.cols(),
            e.rows(),
            e.cols()
        )));
    }
    let entries = e
        .entries
        .iter()
        .map(|obs| Observation {
            row: obs.row,
            col: obs.col,
            value: a.get(obs.row, obs.col),
        })
        .collect();
    Ok(SparseObservations::from_sorted(e.rows, e.cols, entries))
}

/// A rank-`r` matrix `left * core * right^T` with orthonormal `left`
/// (`m x r`) and `right` (`n x r`). The core is a general `r x r` matrix.
#[derive(Debug, Clone)]
pub struct FactoredMatrix {
    left: DMatrix<f64>,
    core: DMatrix<f64>,
    right: DMatrix<f64>,
}

/// Orthonormality slack accepted at construction.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

impl FactoredMatrix {
    pub fn new(left: DMatrix<f64>, core: DMatrix<f64>, right: DMatrix<f64>) -> Result<Self> {
        let r = core.nrows();
        if r == 0 || core.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "core must be square and nonempty, got {}x{}",
                core.nrows(),
                core.ncols()
            )));
        }
        if left.ncols() != r || right.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "factor widths ({}, {}) do not match core rank {r}",
                left.ncols(),
                right.ncols()
            )));
        }
        for (name, f) in [("left", &left), ("right", &right)] {
            let gram = f.transpose() * f;
            let dev = (gram - DMatrix::<f64>::identity(r, r)).norm();
            if dev > ORTHONORMALITY_TOL * (r as f64).sqrt().max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} factor is not orthonormal (deviation {dev:.3e})"
                )));
            }
        }
        Ok(Self { left, core, right })
    }

    /// The zero matrix represented at rank 1 (axis-aligned factors, zero core).
    pub fn zero(rows: usize, cols: usize) -> Self {
        let mut left = DMatrix::zeros(rows, 1);
        left[(0, 0)] = 1.0;
        let mut right = DMatrix::zeros(cols, 1);
        right[(0, 0)] = 1.0;
        Self {
            left,
            core: DMatrix::zeros(1, 1),
            right,
        }
    }

    pub fn rank(&self) -> usize {
        self.core.nrows()
    }

    pub fn rows(&self) -> usize {
        self.left.nrows()
    }

    pub fn cols(&self) -> usize {
        self.right.nrows()
    }

    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    pub fn core(&self) -> &DMatrix<f64> {
        &self.core
    }

    pub fn right(&self) -> &DMatrix<f64> {
        &self.right
    }

    /// Materialize `left * core * right^T`.
    pub fn to_dense(&self) -> DenseMatrix {
        DenseMatrix {
            inner: &self.left * &self.core * self.right.transpose(),
        }
    }

    /// Single entry `(left * core * right^T)_{ij}` in `O(r^2)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let r = self.rank();
        let mut acc = 0.0;
        for a in 0..r {
            let mut inner = 0.0;
            for b in 0..r {
                inner += self.core[(a, b)] * self.right[(j, b)];
            }
            acc += self.left[(i, a)] * inner;
        }
        acc
    }

    /// Values of the factored product at the observation index set, in
    /// `entries()` order, without forming the dense matrix.
    pub fn values_at(&self, obs: &SparseObservations) -> Result<Vec<f64>> {
        if self.rows() != obs.rows() || self.cols() != obs.cols() {
            return Err(Error::DimensionMismatch(format!(
                "factored matrix is {}x{}, observation set is {}x{}",
                self.rows(),
                self.cols(),
                obs.rows(),
                obs.cols()
            )));
        }
        // T = left * core, then each entry is <T_i, right_j>.
        let t = &self.left * &self.core;
        let r = self.rank();
        let mut out = Vec::with_capacity(obs.len());
        for e in obs.iter() {
            let mut acc = 0.0;
            for a in 0..r {
                acc += t[(e.row, a)] * self.right[(e.col, a)];
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `|| P_E(left core right^T) - P_E(N) ||_F` over the stored values of
    /// `obs`, computed entrywise.
    pub fn residual_on_observed(&self, obs: &SparseObservations) -> Result<f64> {
        let predicted = self.values_at(obs)?;
        let ss: f64 = predicted
            .iter()
            .zip(obs.iter())
            .map(|(p, e)| {
                let d = p - e.value;
                d * d
            })
            .sum();
        Ok(ss.sqrt())
    }
}

/// Thin-QR orthonormalization of the columns of `a`, with the sign fixed so
/// the diagonal of R is nonnegative. Returns the `m x k` Q factor where
/// `k = min(m, n)`.
pub fn orthonormalize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Euclidean norm of a vector view; helper shared by the iterative kernels.
pub(crate) fn vec_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dense_rejects_nan_and_size_mismatch() {
        assert!(matches!(
            DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, f64::NAN, 4.0]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sparse_rejects_duplicates_and_out_of_bounds() {
        assert!(matches!(
            SparseObservations::from_triples(2, 2, [(0, 0, 1.0), (0, 0, 2.0)]),
            Err(Error::DuplicateEntry { row: 0, col: 0 })
        ));
        assert!(matches!(
            SparseObservations::from_triples(2, 2, [(2, 0, 1.0)]),
            Err(Error::IndexOutOfBounds { .. })
        ));
    }

    #[test]
    fn project_full_observation_is_identity() {
        let a = DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let all = SparseObservations::from_triples(
            2,
            2,
            (0..2).flat_map(|i| (0..2).map(move |j| (i, j, 0.0))),
        )
        .unwrap();
        let projected = project_observed(&a, &all).unwrap();
        for e in projected.iter() {
            assert_eq!(e.value, a.get(e.row, e.col));
        }
        assert_eq!(projected.len(), 4);
    }

    #[test]
    fn project_empty_set_is_empty() {
        let a = DenseMatrix::zeros(3, 3);
        let none = SparseObservations::from_triples(3, 3, []).unwrap();
        assert!(project_observed(&a, &none).unwrap().is_empty());
    }

    #[test]
    fn project_looks_up_requested_indices() {
        // Direct-lookup oracle on a hand-built case.
        let a = DenseMatrix::from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let e = SparseObservations::from_triples(2, 2, [(0, 1, 0.0), (1, 0, 0.0)]).unwrap();
        let p = project_observed(&a, &e).unwrap();
        let got: Vec<(usize, usize, f64)> = p.iter().map(|o| (o.row, o.col, o.value)).collect();
        assert_eq!(got, vec![(0, 1, 2.0), (1, 0, 3.0)]);
    }

    #[test]
    fn project_dimension_mismatch_errors() {
        let a = DenseMatrix::zeros(2, 3);
        let e = SparseObservations::from_triples(3, 3, []).unwrap();
        assert!(project_observed(&a, &e).is_err());
    }

    #[test]
    fn frobenius_matches_brute_force() {
        assert_eq!(DenseMatrix::zeros(3, 4).frobenius_norm(), 0.0);
        let a = DenseMatrix::from_row_major(1, 2, &[3.0, 4.0]).unwrap();
        assert_relative_eq!(a.frobenius_norm(), 5.0, max_relative = 1e-15);

        // Entrywise-summation oracle on a fixed 5x5.
        let vals: Vec<f64> = (0..25).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        let a = DenseMatrix::from_row_major(5, 5, &vals).unwrap();
        let mut ss = 0.0;
        for v in &vals {
            ss += v * v;
        }
        assert_relative_eq!(a.frobenius_norm(), ss.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn sparse_frobenius_sums_stored_triples_only() {
        let e = SparseObservations::from_triples(4, 4, [(0, 0, 3.0), (2, 3, 4.0)]).unwrap();
        assert_relative_eq!(e.frobenius_norm(), 5.0, max_relative = 1e-15);
    }

    #[test]
    fn projector_is_contraction() {
        let vals: Vec<f64> = (0..30).map(|k| (k as f64 * 0.7).sin() * 3.0).collect();
        let a = DenseMatrix::from_row_major(5, 6, &vals).unwrap();
        let e = SparseObservations::from_triples(
            5,
            6,
            (0..5).map(|i| (i, (i * 2) % 6, 0.0)),
        )
        .unwrap();
        let p = project_observed(&a, &e).unwrap();
        assert!(p.frobenius_norm() <= a.frobenius_norm());
    }

    #[test]
    fn projector_is_idempotent_on_its_index_set() {
        let vals: Vec<f64> = (0..16).map(|k| k as f64).collect();
        let a = DenseMatrix::from_row_major(4, 4, &vals).unwrap();
        let e = SparseObservations::from_triples(4, 4, [(0, 1, 0.0), (2, 2, 0.0), (3, 0, 0.0)])
            .unwrap();
        let once = project_observed(&a, &e).unwrap();
        let twice = project_observed(&once.to_dense(), &e).unwrap();
        for (x, y) in once.iter().zip(twice.iter()) {
            assert_eq!(x.value, y.value);
        }
    }

    #[test]
    fn factored_to_dense_matches_triple_loop() {
        // Identity factors: the product is the core itself.
        let eye = DMatrix::<f64>::identity(3, 3);
        let core = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 3.0, 1.0, 5.0, 0.0, 2.0]);
        let f = FactoredMatrix::new(eye.clone(), core.clone(), eye).unwrap();
        assert_eq!(f.to_dense().as_dmatrix(), &core);

        // Zero core: zero matrix.
        let z = FactoredMatrix::zero(4, 5);
        assert_eq!(z.to_dense().frobenius_norm(), 0.0);

        // Random orthonormal factors vs a naive triple loop.
        let raw_l = DMatrix::from_fn(6, 2, |i, j| ((i * 3 + j + 1) as f64 * 0.37).sin());
        let raw_r = DMatrix::from_fn(5, 2, |i, j| ((i * 5 + j + 2) as f64 * 0.53).cos());
        let left = orthonormalize(&raw_l);
        let right = orthonormalize(&raw_r);
        let core = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.5, 3.0]);
        let f = FactoredMatrix::new(left.clone(), core.clone(), right.clone()).unwrap();
        let dense = f.to_dense();
        for i in 0..6 {
            for j in 0..5 {
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        acc += left[(i, a)] * core[(a, b)] * right[(j, b)];
                    }
                }
                assert_relative_eq!(dense.get(i, j), acc, epsilon = 1e-12);
                assert_relative_eq!(f.entry(i, j), acc, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn factored_rejects_non_orthonormal_factors() {
        let left = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]); // norm sqrt(2)
        let right = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let core = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(FactoredMatrix::new(left, core, right).is_err());
    }

    #[test]
    fn residual_zero_when_factors_interpolate() {
        let eye = DMatrix::<f64>::identity(4, 4);
        let core = DMatrix::from_fn(4, 4, |i, j| (i + j) as f64 * 0.25);
        let f = FactoredMatrix::new(eye.clone(), core.clone(), eye).unwrap();
        let obs = SparseObservations::from_triples(
            4,
            4,
            [(0, 0, core[(0, 0)]), (1, 3, core[(1, 3)]), (2, 2, core[(2, 2)])],
        )
        .unwrap();
        assert_relative_eq!(f.residual_on_observed(&obs).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn residual_empty_set_is_zero() {
        let f = FactoredMatrix::zero(3, 3);
        let obs = SparseObservations::from_triples(3, 3, []).unwrap();
        assert_eq!(f.residual_on_observed(&obs).unwrap(), 0.0);
    }

    #[test]
    fn residual_matches_densify_then_subtract() {
        let raw_l = DMatrix::from_fn(4, 2, |i, j| ((i + 2 * j + 1) as f64).sin());
        let raw_r = DMatrix::from_fn(4, 2, |i, j| ((2 * i + j + 1) as f64).cos());
        let f = FactoredMatrix::new(
            orthonormalize(&raw_l),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, -0.3, 2.0]),
            orthonormalize(&raw_r),
        )
        .unwrap();
        let obs = SparseObservations::from_triples(
            4,
            4,
            [(0, 1, 0.7), (1, 1, -0.2), (2, 3, 1.1), (3, 0, 0.05)],
        )
        .unwrap();
        let dense = f.to_dense();
        let mut ss = 0.0;
        for e in obs.iter() {
            let d = dense.get(e.row, e.col) - e.value;
            ss += d * d;
        }
        assert_relative_eq!(
            f.residual_on_observed(&obs).unwrap(),
            ss.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn residual_dimension_mismatch_errors() {
        let f = FactoredMatrix::zero(3, 3);
        let obs = SparseObservations::from_triples(4, 3, []).unwrap();
        assert!(f.residual_on_observed(&obs).is_err());
    }
}
