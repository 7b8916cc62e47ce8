//! Spectral preprocessing shared by the solvers: trimming of over-sampled
//! rows/columns, the scaled rank-r projection used as initialization, and
//! the singular-value rank estimator.

use crate::error::{Error, Result};
use crate::matrix::{FactoredMatrix, SparseObservations};
use crate::svd::truncated_svd_sparse;

/// Outcome of trimming: the surviving observations plus which rows/columns
/// were zeroed.
#[derive(Debug, Clone)]
pub struct TrimReport {
    pub trimmed: SparseObservations,
    pub zeroed_rows: Vec<usize>,
    pub zeroed_cols: Vec<usize>,
}

/// Drop all columns with more than `2|E|/n` observations, then all rows with
/// more than `2|E|/m`, both thresholds computed from the pre-trim `|E|`.
pub fn trim(obs: &SparseObservations) -> TrimReport {
    let m = obs.rows();
    let n = obs.cols();
    let e_size = obs.len() as f64;
    let col_threshold = 2.0 * e_size / n as f64;
    let row_threshold = 2.0 * e_size / m as f64;

    let col_counts = obs.col_counts();
    let zeroed_cols: Vec<usize> = (0..n)
        .filter(|&j| col_counts[j] as f64 > col_threshold)
        .collect();
    let col_dropped: Vec<bool> = {
        let mut mask = vec![false; n];
        for &j in &zeroed_cols {
            mask[j] = true;
        }
        mask
    };

    // Row counts are re-taken after the column pass; the threshold stays
    // pinned to the original |E|.
    let mut row_counts = vec![0usize; m];
    for e in obs.iter() {
        if !col_dropped[e.col] {
            row_counts[e.row] += 1;
        }
    }
    let zeroed_rows: Vec<usize> = (0..m)
        .filter(|&i| row_counts[i] as f64 > row_threshold)
        .collect();
    let row_dropped: Vec<bool> = {
        let mut mask = vec![false; m];
        for &i in &zeroed_rows {
            mask[i] = true;
        }
        mask
    };

    let survivors = obs
        .iter()
        .filter(|e| !col_dropped[e.col] && !row_dropped[e.row])
        .map(|e| (e.row, e.col, e.value));
    let trimmed = SparseObservations::from_triples(m, n, survivors)
        .expect("subset of a valid observation set is valid");
    TrimReport {
        trimmed,
        zeroed_rows,
        zeroed_cols,
    }
}

/// `P_r(N^E) = (mn / |E|) * sum_{i<=r} sigma_i x_i y_i^T`: the best rank-r
/// approximation of the zero-filled observation matrix, rescaled to undo the
/// expected sampling attenuation.
pub fn rank_r_projection(obs: &SparseObservations, r: usize) -> Result<FactoredMatrix> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let svd = truncated_svd_sparse(obs, r)?;
    let scale = (obs.rows() * obs.cols()) as f64 / obs.len() as f64;
    let core = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        r,
        svd.singular_values.iter().map(|&s| scale * s),
    ));
    FactoredMatrix::new(svd.left, core, svd.right)
}

/// How far down the spectrum the rank search looks.
const RANK_SEARCH_CAP: usize = 50;
/// Relative floor under which a singular value counts as zero.
const SPECTRUM_FLOOR: f64 = 1e-12;

/// Estimate the target rank from the trimmed spectrum: the minimizer of
///
/// ```text
/// R(i) = (sigma_{i+1} + sigma_1 sqrt(i sqrt(mn) / |E|)) / sigma_i
/// ```
///
/// over `i` in `[1, min(50, min(m,n) - 1)]`. The search stops at the first
/// `sigma_i` that is numerically zero, and ties go to the smaller rank.
pub fn estimate_rank(obs: &SparseObservations) -> Result<usize> {
    if obs.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let report = trim(obs);
    let trimmed = &report.trimmed;
    if trimmed.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let m = trimmed.rows();
    let n = trimmed.cols();
    let k = (RANK_SEARCH_CAP + 1).min(m.min(n));
    let svd = truncated_svd_sparse(trimmed, k)?;
    let sigma = &svd.singular_values;
    if sigma[0] <= 0.0 {
        return Err(Error::EmptySpectrum);
    }
    let e_size = trimmed.len() as f64;
    let mn_root = ((m * n) as f64).sqrt();
    let floor = SPECTRUM_FLOOR * sigma[0];

    let mut best_i = 1;
    let mut best_cost = f64::INFINITY;
    for i in 1..k {
        let denom = sigma[i - 1];
        if denom <= floor {
            break;
        }
        let penalty = sigma[0] * (i as f64 * mn_root / e_size).sqrt();
        let cost = (sigma[i] + penalty) / denom;
        if cost < best_cost {
            best_cost = cost;
            best_i = i;
        }
    }
    Ok(best_i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{
        apply_noise, gen_gaussian_lowrank, realize_instance, sample_uniform, MatrixModel,
        NoiseKind, NoiseSpec,
    };
    use crate::matrix::DenseMatrix;
    use crate::svd::truncated_svd;
    use approx::assert_relative_eq;

    #[test]
    fn trim_keeps_uniform_observations() {
        // Diagonal pattern: every row/col count is 1, thresholds are 2.
        let obs = SparseObservations::from_triples(4, 4, (0..4).map(|i| (i, i, 1.0 + i as f64)))
            .unwrap();
        let report = trim(&obs);
        assert_eq!(report.trimmed.len(), 4);
        assert!(report.zeroed_rows.is_empty());
        assert!(report.zeroed_cols.is_empty());
    }

    #[test]
    fn trim_drops_concentrated_column() {
        // |E| = 3 all in column 0: threshold 2|E|/n = 2, count 3 > 2.
        let obs = SparseObservations::from_triples(3, 3, (0..3).map(|i| (i, 0, 1.0))).unwrap();
        let report = trim(&obs);
        assert!(report.trimmed.is_empty());
        assert_eq!(report.zeroed_cols, vec![0]);
        assert!(report.zeroed_rows.is_empty());
    }

    #[test]
    fn trim_empty_is_empty() {
        let obs = SparseObservations::from_triples(3, 3, []).unwrap();
        let report = trim(&obs);
        assert!(report.trimmed.is_empty());
        assert!(report.zeroed_rows.is_empty());
        assert!(report.zeroed_cols.is_empty());
    }

    #[test]
    fn trim_enforces_thresholds_and_never_increases_counts() {
        // Row 0 heavy and column 0 heavy on a 6x6 grid.
        let mut triples = vec![];
        for j in 0..6 {
            triples.push((0, j, 1.0)); // row 0: 6 entries
        }
        for i in 1..5 {
            triples.push((i, 0, 1.0)); // col 0: 5 entries
        }
        triples.push((3, 3, 1.0));
        let obs = SparseObservations::from_triples(6, 6, triples).unwrap();
        let e = obs.len() as f64;
        let report = trim(&obs);
        let row_t = 2.0 * e / 6.0;
        let col_t = 2.0 * e / 6.0;
        for (i, c) in report.trimmed.row_counts().iter().enumerate() {
            assert!(
                *c as f64 <= row_t,
                "row {i} count {c} exceeds threshold {row_t}"
            );
        }
        for (j, c) in report.trimmed.col_counts().iter().enumerate() {
            assert!(
                *c as f64 <= col_t,
                "col {j} count {c} exceeds threshold {col_t}"
            );
        }
        let before = obs.row_counts();
        let after = report.trimmed.row_counts();
        for i in 0..6 {
            assert!(after[i] <= before[i]);
        }
    }

    #[test]
    fn trim_is_idempotent_on_uniform_instances() {
        for seed in 0..5 {
            let inst = realize_instance(
                MatrixModel::Standard,
                60,
                60,
                3,
                12.0,
                NoiseSpec::new(NoiseKind::StandardGaussian, 4.0).unwrap(),
                900 + seed,
            )
            .unwrap();
            let once = trim(&inst.observations);
            let twice = trim(&once.trimmed);
            assert_eq!(once.trimmed.len(), twice.trimmed.len());
            for (a, b) in once.trimmed.iter().zip(twice.trimmed.iter()) {
                assert!(a.row == b.row && a.col == b.col && a.value == b.value);
            }
        }
    }

    #[test]
    fn projection_with_full_observation_is_best_rank_r() {
        // Scale mn/|E| = 1, so the projection is plain truncated SVD.
        let (truth, _) = gen_gaussian_lowrank(10, 8, 5, 42).unwrap();
        let idx = sample_uniform(10, 8, 8.0, 0).unwrap();
        let (obs, _) = apply_noise(&truth, &idx, NoiseSpec::none(), 5, 0).unwrap();
        let proj = rank_r_projection(&obs, 2).unwrap();
        let direct = truncated_svd(&truth, 2).unwrap();
        let a = proj.to_dense();
        let b = direct.to_dense();
        for i in 0..10 {
            for j in 0..8 {
                assert_relative_eq!(a.get(i, j), b[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn projection_recovers_rank1_exactly() {
        let (truth, _) = gen_gaussian_lowrank(12, 12, 1, 7).unwrap();
        let idx = sample_uniform(12, 12, 12.0, 0).unwrap();
        let (obs, _) = apply_noise(&truth, &idx, NoiseSpec::none(), 1, 0).unwrap();
        let proj = rank_r_projection(&obs, 1).unwrap();
        let recon = proj.to_dense();
        let mut err = 0.0;
        for i in 0..12 {
            for j in 0..12 {
                err += (recon.get(i, j) - truth.get(i, j)).powi(2);
            }
        }
        let rmse = err.sqrt() / 12.0;
        assert!(rmse < 1e-10, "rmse {rmse}");
    }

    #[test]
    fn projection_at_full_rank_reproduces_input() {
        let vals: Vec<f64> = (0..48).map(|k| ((k * 13 % 31) as f64) - 15.0).collect();
        let dense = DenseMatrix::from_row_major(8, 6, &vals).unwrap();
        let obs = SparseObservations::from_triples(
            8,
            6,
            (0..8).flat_map(|i| (0..6).map(move |j| (i, j, 0.0))),
        )
        .unwrap();
        let obs = crate::matrix::project_observed(&dense, &obs).unwrap();
        let proj = rank_r_projection(&obs, 6).unwrap();
        let recon = proj.to_dense();
        let mut err = 0.0;
        for i in 0..8 {
            for j in 0..6 {
                err += (recon.get(i, j) - dense.get(i, j)).powi(2);
            }
        }
        assert!(err.sqrt() / dense.frobenius_norm() < 1e-8);
    }

    #[test]
    fn projection_error_paths() {
        let empty = SparseObservations::from_triples(4, 4, []).unwrap();
        assert!(matches!(
            rank_r_projection(&empty, 1),
            Err(Error::EmptyObservations)
        ));
        let one = SparseObservations::from_triples(4, 4, [(0, 0, 1.0)]).unwrap();
        assert!(matches!(
            rank_r_projection(&one, 5),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn rank_estimate_exact_rank4_full_observation() {
        let (truth, _) = gen_gaussian_lowrank(30, 30, 4, 3).unwrap();
        let idx = sample_uniform(30, 30, 30.0, 0).unwrap();
        let (obs, _) = apply_noise(&truth, &idx, NoiseSpec::none(), 4, 0).unwrap();
        assert_eq!(estimate_rank(&obs).unwrap(), 4);
    }

    #[test]
    fn rank_estimate_rank1_returns_lower_bound() {
        let (truth, _) = gen_gaussian_lowrank(20, 20, 1, 5).unwrap();
        let idx = sample_uniform(20, 20, 20.0, 0).unwrap();
        let (obs, _) = apply_noise(&truth, &idx, NoiseSpec::none(), 1, 0).unwrap();
        assert_eq!(estimate_rank(&obs).unwrap(), 1);
    }

    #[test]
    fn rank_estimate_is_scale_invariant() {
        let inst = realize_instance(
            MatrixModel::Standard,
            80,
            80,
            3,
            30.0,
            NoiseSpec::new(NoiseKind::StandardGaussian, 4.0).unwrap(),
            17,
        )
        .unwrap();
        let obs = &inst.observations;
        let scaled_values: Vec<f64> = obs.iter().map(|e| 2.7 * e.value).collect();
        let scaled = obs.with_values(&scaled_values).unwrap();
        assert_eq!(estimate_rank(obs).unwrap(), estimate_rank(&scaled).unwrap());
    }

    #[test]
    fn rank_estimate_paper_scale() {
        // n = 500, r = 4, standard SNR = 4: correct rank at the low end of
        // the paper's epsilon range.
        let inst = realize_instance(
            MatrixModel::Standard,
            500,
            500,
            4,
            80.0,
            NoiseSpec::new(NoiseKind::StandardGaussian, 4.0).unwrap(),
            2024,
        )
        .unwrap();
        assert_eq!(estimate_rank(&inst.observations).unwrap(), 4);
    }

    #[test]
    fn rank_estimate_error_paths() {
        let empty = SparseObservations::from_triples(5, 5, []).unwrap();
        assert!(estimate_rank(&empty).is_err());
        let zeros = SparseObservations::from_triples(5, 5, (0..5).map(|i| (i, i, 0.0))).unwrap();
        assert!(matches!(estimate_rank(&zeros), Err(Error::EmptySpectrum)));
    }
}
