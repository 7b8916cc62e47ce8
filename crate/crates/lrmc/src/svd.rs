//! Truncated SVD backends.
//!
//! Dense inputs go through nalgebra's full SVD. Sparse-backed or structured
//! operators go through Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization, which only needs matrix-vector products. The solvers
//! pick the backend by size: anything with `min(m, n)` up to
//! [`DENSE_CUTOFF`] is decomposed densely, larger problems iteratively.
//!
//! All outputs share the same conventions: singular values in nonincreasing
//! order, vectors orthonormal, and the sign fixed so the first nonzero entry
//! of each left vector is positive.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{vec_norm, DenseMatrix, SparseObservations};
use crate::rng;

/// Largest `min(m, n)` the dense backend is used for by default.
pub const DENSE_CUTOFF: usize = 1000;

/// Fixed stream tag for Lanczos start vectors; keeps iterative results
/// reproducible run to run.
const LANCZOS_SEED: u64 = 0x6c72_6d63;

/// Top-`k` singular triplets: `singular_values[i]` pairs with column `i` of
/// `left` and `right`.
#[derive(Debug, Clone)]
pub struct SvdTriplets {
    pub singular_values: Vec<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
}

impl SvdTriplets {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Reconstruction `sum_i sigma_i x_i y_i^T`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.rank();
        let m = self.left.nrows();
        let n = self.right.nrows();
        let mut out = DMatrix::zeros(m, n);
        for idx in 0..k {
            let s = self.singular_values[idx];
            if s == 0.0 {
                continue;
            }
            for j in 0..n {
                let vy = s * self.right[(j, idx)];
                for i in 0..m {
                    out[(i, j)] += self.left[(i, idx)] * vy;
                }
            }
        }
        out
    }
}

/// Anything that can multiply a vector by itself and its transpose.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = A x`.
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    /// `out = A^T x`.
    fn apply_transpose(&self, x: &DVector<f64>, out: &mut DVector<f64>);
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        DMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        DMatrix::ncols(self)
    }
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.mul_to(x, out);
    }
    fn apply_transpose(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.tr_mul_to(x, out);
    }
}

/// Zero-filled view of an observation set.
pub struct SparseOperator<'a>(pub &'a SparseObservations);

impl LinearOperator for SparseOperator<'_> {
    fn nrows(&self) -> usize {
        self.0.rows()
    }
    fn ncols(&self) -> usize {
        self.0.cols()
    }
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for e in self.0.iter() {
            out[e.row] += e.value * x[e.col];
        }
    }
    fn apply_transpose(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for e in self.0.iter() {
            out[e.col] += e.value * x[e.row];
        }
    }
}

/// `T R^T + c S` where `T` is `m x k`, `R` is `n x k` and `S` is sparse.
/// This is the shape of an FPCA gradient step on a factored iterate.
pub struct LowRankPlusSparse<'a> {
    pub row_factor: &'a DMatrix<f64>,
    pub col_factor: &'a DMatrix<f64>,
    pub sparse: &'a SparseObservations,
    pub sparse_scale: f64,
}

impl LinearOperator for LowRankPlusSparse<'_> {
    fn nrows(&self) -> usize {
        self.row_factor.nrows()
    }
    fn ncols(&self) -> usize {
        self.col_factor.nrows()
    }
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let tmp = self.col_factor.tr_mul(x);
        self.row_factor.mul_to(&tmp, out);
        if self.sparse_scale != 0.0 {
            for e in self.sparse.iter() {
                out[e.row] += self.sparse_scale * e.value * x[e.col];
            }
        }
    }
    fn apply_transpose(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let tmp = self.row_factor.tr_mul(x);
        self.col_factor.mul_to(&tmp, out);
        if self.sparse_scale != 0.0 {
            for e in self.sparse.iter() {
                out[e.col] += self.sparse_scale * e.value * x[e.row];
            }
        }
    }
}

/// Full dense SVD, sorted descending and sign-fixed. Errors if the implicit
/// QR iteration fails to converge.
pub(crate) fn dense_svd(a: &DMatrix<f64>) -> Result<SvdTriplets> {
    // niter = 0 runs until convergence; nalgebra's capped path mis-factors
    // exactly rank-deficient inputs.
    let svd = nalgebra::linalg::SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdNonConvergence { iterations: 0 })?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .expect("singular values are finite")
    });

    let m = a.nrows();
    let n = a.ncols();
    let mut left = DMatrix::zeros(m, k);
    let mut right = DMatrix::zeros(n, k);
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        singular_values.push(svd.singular_values[src]);
        for i in 0..m {
            left[(i, dst)] = u[(i, src)];
        }
        for j in 0..n {
            right[(j, dst)] = v_t[(src, j)];
        }
    }
    let mut out = SvdTriplets {
        singular_values,
        left,
        right,
    };
    fix_signs(&mut out);
    Ok(out)
}

/// First-nonzero-entry-positive convention on left vectors.
fn fix_signs(t: &mut SvdTriplets) {
    let m = t.left.nrows();
    let n = t.right.nrows();
    for idx in 0..t.rank() {
        let mut sign = 0.0;
        for i in 0..m {
            let x = t.left[(i, idx)];
            if x != 0.0 {
                sign = x.signum();
                break;
            }
        }
        if sign < 0.0 {
            for i in 0..m {
                t.left[(i, idx)] = -t.left[(i, idx)];
            }
            for j in 0..n {
                t.right[(j, idx)] = -t.right[(j, idx)];
            }
        }
    }
}

/// Top-`k` singular triplets of a dense matrix.
pub fn truncated_svd(a: &DenseMatrix, k: usize) -> Result<SvdTriplets> {
    let (m, n) = (a.rows(), a.cols());
    if k == 0 || k > m.min(n) {
        return Err(Error::RankOutOfRange {
            k,
            rows: m,
            cols: n,
        });
    }
    let full = dense_svd(a.as_dmatrix())?;
    Ok(truncate(full, k))
}

/// Top-`k` singular triplets of the zero-filled observation matrix. Dense up
/// to [`DENSE_CUTOFF`], Lanczos beyond it.
pub fn truncated_svd_sparse(obs: &SparseObservations, k: usize) -> Result<SvdTriplets> {
    let (m, n) = (obs.rows(), obs.cols());
    if k == 0 || k > m.min(n) {
        return Err(Error::RankOutOfRange {
            k,
            rows: m,
            cols: n,
        });
    }
    if m.min(n) <= DENSE_CUTOFF {
        let full = dense_svd(obs.to_dense().as_dmatrix())?;
        Ok(truncate(full, k))
    } else {
        lanczos_svd(&SparseOperator(obs), k, &LanczosOptions::default())
    }
}

fn truncate(full: SvdTriplets, k: usize) -> SvdTriplets {
    SvdTriplets {
        singular_values: full.singular_values[..k].to_vec(),
        left: full.left.columns(0, k).into_owned(),
        right: full.right.columns(0, k).into_owned(),
    }
}

/// Largest singular value to relative accuracy 1e-8.
pub fn spectral_norm(a: &DenseMatrix) -> Result<f64> {
    if a.rows().min(a.cols()) <= DENSE_CUTOFF {
        Ok(dense_svd(a.as_dmatrix())?.singular_values[0])
    } else {
        let t = lanczos_svd(a.as_dmatrix(), 1, &LanczosOptions::default())?;
        Ok(t.singular_values[0])
    }
}

/// Largest singular value of the zero-filled observation matrix, via Lanczos
/// (cheap at any size: each product costs `O(|E|)`).
pub fn spectral_norm_sparse(obs: &SparseObservations) -> Result<f64> {
    if obs.is_empty() {
        return Ok(0.0);
    }
    let t = lanczos_svd(&SparseOperator(obs), 1, &LanczosOptions::default())?;
    Ok(t.singular_values[0])
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the largest Ritz value.
    pub tol: f64,
    /// Subspace cap; `None` picks `max(2k + 20, 40)` clamped to `min(m, n)`.
    pub max_dim: Option<usize>,
    /// Extra expansion steps after the target triplets first converge.
    pub settle_steps: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_dim: None,
            settle_steps: 4,
        }
    }
}

/// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.
/// Returns the top-`k` triplets; exact low rank below `k` is padded with
/// zero singular values and deterministic orthonormal complements.
pub fn lanczos_svd(
    op: &dyn LinearOperator,
    k: usize,
    opts: &LanczosOptions,
) -> Result<SvdTriplets> {
    let (m, n) = (op.nrows(), op.ncols());
    if k == 0 || k > m.min(n) {
        return Err(Error::RankOutOfRange {
            k,
            rows: m,
            cols: n,
        });
    }
    let max_dim = opts
        .max_dim
        .unwrap_or_else(|| (2 * k + 20).max(40))
        .clamp(k, m.min(n));

    let mut state = GklState::new(op, max_dim);
    let mut settled = 0usize;
    loop {
        let grown = state.expand()?;
        let j = state.dim();
        if j >= k || !grown {
            let ritz = state.ritz()?;
            let converged = ritz.converged_count(opts.tol);
            if converged >= k.min(j) {
                settled += 1;
            } else {
                settled = 0;
            }
            let done = !grown || j == max_dim || (converged >= k && settled > opts.settle_steps);
            if done {
                if converged >= k.min(j) || !grown {
                    return state.extract(ritz, k);
                }
                return Err(Error::SvdNonConvergence { iterations: j });
            }
        }
    }
}

/// All singular triplets with `sigma > threshold`, for shrinkage steps.
/// Expands the subspace until a converged Ritz value falls at or below the
/// threshold (so everything above it has been captured), then keeps only the
/// above-threshold triplets. `rank_cap` bounds how many triplets may be
/// returned; hitting it without crossing the threshold is a convergence
/// error (FPCA falls back to a dense decomposition in that case).
pub fn svd_above_threshold(
    op: &dyn LinearOperator,
    threshold: f64,
    rank_cap: usize,
) -> Result<SvdTriplets> {
    let (m, n) = (op.nrows(), op.ncols());
    let minmn = m.min(n);
    let max_dim = (2 * rank_cap + 20).max(40).min(minmn);
    let tol = 1e-9;

    let mut state = GklState::new(op, max_dim);
    loop {
        let grown = state.expand()?;
        let j = state.dim();
        let ritz = state.ritz()?;
        let converged = ritz.converged_count(tol);
        // Count of converged Ritz values above the threshold.
        let above = ritz.values[..converged]
            .iter()
            .filter(|&&s| s > threshold)
            .count();
        let crossed = converged > above; // a converged value sits at/below threshold
        if (crossed || !grown || j == minmn) && above <= rank_cap {
            let extracted = state.extract(ritz, above.max(1).min(j))?;
            let keep = extracted
                .singular_values
                .iter()
                .take_while(|&&s| s > threshold)
                .count();
            return Ok(SvdTriplets {
                singular_values: extracted.singular_values[..keep].to_vec(),
                left: extracted.left.columns(0, keep).into_owned(),
                right: extracted.right.columns(0, keep).into_owned(),
            });
        }
        if j == max_dim || above > rank_cap {
            return Err(Error::SvdNonConvergence { iterations: j });
        }
    }
}

struct GklState<'a> {
    op: &'a dyn LinearOperator,
    us: Vec<DVector<f64>>,
    vs: Vec<DVector<f64>>,
    alphas: Vec<f64>,
    betas: Vec<f64>,
    /// Next right vector and its beta, computed at the tail of each step so
    /// the Ritz residual bound `beta_j |e_j^T p_i|` is available.
    pending: Option<(DVector<f64>, f64)>,
    /// Terminal column `beta_j e_j` kept when `A v_{j+1}` falls inside
    /// `span(u_1..u_j)`: the factorization becomes an exact j x (j+1) one.
    tail_beta: Option<f64>,
    /// Set when the Krylov space is exhausted (exact low rank).
    exhausted: bool,
    max_dim: usize,
    restarts: usize,
}

struct RitzDecomposition {
    values: Vec<f64>,
    /// Left/right singular vectors of the small bidiagonal matrix.
    p: DMatrix<f64>,
    q: DMatrix<f64>,
    /// Residual estimates `beta_j * |last entry of p_i|`.
    residuals: Vec<f64>,
}

impl RitzDecomposition {
    fn converged_count(&self, tol: f64) -> usize {
        let scale = self.values.first().copied().unwrap_or(0.0).max(1e-300);
        self.residuals
            .iter()
            .take_while(|&&r| r <= tol * scale)
            .count()
    }
}

impl<'a> GklState<'a> {
    fn new(op: &'a dyn LinearOperator, max_dim: usize) -> Self {
        Self {
            op,
            us: Vec::new(),
            vs: Vec::new(),
            alphas: Vec::new(),
            betas: Vec::new(),
            pending: None,
            tail_beta: None,
            exhausted: false,
            max_dim,
            restarts: 0,
        }
    }

    fn dim(&self) -> usize {
        self.alphas.len()
    }

    /// Deterministic unit start vector orthogonal to the current basis.
    fn fresh_v(&mut self) -> Option<DVector<f64>> {
        let n = self.op.ncols();
        let mut rng = rng::stream(LANCZOS_SEED, "start", self.restarts as u64);
        self.restarts += 1;
        for _ in 0..8 {
            let mut v = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            orthogonalize_against(&mut v, &self.vs);
            let norm = vec_norm(&v);
            if norm > 1e-8 {
                v /= norm;
                return Some(v);
            }
        }
        None
    }

    /// Add one (u, v) pair; returns false when the space is exhausted.
    fn expand(&mut self) -> Result<bool> {
        if self.exhausted || self.dim() == self.max_dim {
            return Ok(false);
        }
        let m = self.op.nrows();
        let j = self.dim();

        // Right vector: either the pending one from the previous step's
        // tail, or a fresh seed at j = 0.
        let v = if j == 0 {
            match self.fresh_v() {
                Some(v) => v,
                None => {
                    self.exhausted = true;
                    return Ok(false);
                }
            }
        } else {
            match self.pending.take() {
                Some((v, beta)) => {
                    self.betas.push(beta);
                    v
                }
                None => {
                    self.exhausted = true;
                    return Ok(false);
                }
            }
        };

        let mut z = DVector::zeros(m);
        self.op.apply(&v, &mut z);
        if j > 0 {
            z.axpy(-self.betas[j - 1], &self.us[j - 1], 1.0);
        }
        orthogonalize_against(&mut z, &self.us);
        orthogonalize_against(&mut z, &self.us);
        let alpha = vec_norm(&z);
        let scale = self.alphas.first().copied().unwrap_or(alpha).max(1e-300);
        if alpha <= 1e-14 * scale {
            if j > 0 {
                // A v_{j+1} = beta_j u_j exactly; keep the trailing column so
                // the j x (j+1) factorization stays exact.
                self.tail_beta = self.betas.pop();
                self.vs.push(v);
            }
            self.exhausted = true;
            return Ok(false);
        }
        self.vs.push(v);
        self.us.push(z / alpha);
        self.alphas.push(alpha);

        // Tail: prepare v_{j+1} so the residual bound beta_{j+1} is known.
        let mut w = DVector::zeros(self.op.ncols());
        self.op.apply_transpose(&self.us[j], &mut w);
        w.axpy(-alpha, &self.vs[j], 1.0);
        orthogonalize_against(&mut w, &self.vs);
        orthogonalize_against(&mut w, &self.vs);
        let beta = vec_norm(&w);
        if beta <= 1e-14 * self.alphas[0].max(1e-300) {
            // Invariant subspace: the factorization is exact at this dim.
            self.pending = None;
            self.exhausted = true;
        } else {
            self.pending = Some((w / beta, beta));
        }
        Ok(true)
    }

    fn bidiagonal(&self) -> DMatrix<f64> {
        let j = self.dim();
        let cols = j + usize::from(self.tail_beta.is_some());
        let mut b = DMatrix::zeros(j, cols);
        for i in 0..j {
            b[(i, i)] = self.alphas[i];
            if i + 1 < j {
                b[(i, i + 1)] = self.betas[i];
            }
        }
        if let Some(tb) = self.tail_beta {
            b[(j - 1, j)] = tb;
        }
        b
    }

    fn ritz(&self) -> Result<RitzDecomposition> {
        let j = self.dim();
        if j == 0 {
            return Ok(RitzDecomposition {
                values: Vec::new(),
                p: DMatrix::zeros(0, 0),
                q: DMatrix::zeros(0, 0),
                residuals: Vec::new(),
            });
        }
        let small = dense_svd(&self.bidiagonal())?;
        // If the space was exhausted the factorization is exact and no
        // residual remains; otherwise the pending beta bounds the error.
        let tail_beta = self.pending.as_ref().map_or(0.0, |&(_, b)| b);
        let residuals = (0..j)
            .map(|i| tail_beta * small.left[(j - 1, i)].abs())
            .collect();
        Ok(RitzDecomposition {
            values: small.singular_values,
            p: small.left,
            q: small.right,
            residuals,
        })
    }

    /// Assemble the top-`k` triplets, padding with zeros past the exact rank.
    fn extract(&mut self, ritz: RitzDecomposition, k: usize) -> Result<SvdTriplets> {
        let (m, n) = (self.op.nrows(), self.op.ncols());
        let j = self.dim();
        let have = j.min(k);
        let mut left = DMatrix::zeros(m, k);
        let mut right = DMatrix::zeros(n, k);
        let mut singular_values = vec![0.0; k];
        for idx in 0..have {
            singular_values[idx] = ritz.values[idx];
            for row in 0..ritz.p.nrows() {
                left.column_mut(idx)
                    .axpy(ritz.p[(row, idx)], &self.us[row], 1.0);
            }
            for row in 0..ritz.q.nrows() {
                right
                    .column_mut(idx)
                    .axpy(ritz.q[(row, idx)], &self.vs[row], 1.0);
            }
        }
        // Deterministic orthonormal complements for the zero part.
        for idx in have..k {
            let lv = self.complement_vector(m, true, idx)?;
            let rv = self.complement_vector(n, false, idx)?;
            left.set_column(idx, &lv);
            right.set_column(idx, &rv);
        }
        let mut out = SvdTriplets {
            singular_values,
            left,
            right,
        };
        fix_signs(&mut out);
        Ok(out)
    }

    fn complement_vector(&mut self, len: usize, left_side: bool, idx: usize) -> Result<DVector<f64>> {
        let mut rng = rng::stream(LANCZOS_SEED, "pad", (idx as u64) << 1 | left_side as u64);
        for _ in 0..16 {
            let mut v = DVector::from_fn(len, |_, _| rng.random::<f64>() - 0.5);
            let basis = if left_side { &self.us } else { &self.vs };
            orthogonalize_against(&mut v, basis);
            let norm = vec_norm(&v);
            if norm > 1e-8 {
                v /= norm;
                if left_side {
                    self.us.push(v.clone());
                } else {
                    self.vs.push(v.clone());
                }
                return Ok(v);
            }
        }
        Err(Error::SvdNonConvergence {
            iterations: self.dim(),
        })
    }
}

fn orthogonalize_against(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for b in basis {
        let proj = v.dot(b);
        v.axpy(-proj, b, 1.0);
    }
}
