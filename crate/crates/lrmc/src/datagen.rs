//! Synthetic problem generation: Gaussian low-rank ground truths, uniform
//! entry sampling, and four noise models calibrated to a target SNR.
//!
//! SNR is `E[||M||_F^2] / E[||Z||_F^2]`. For the Gaussian factor model the
//! expected signal power per entry is exactly the rank `r`, which makes the
//! per-kind calibrations:
//!
//! * standard:       `Z_ij ~ N(0, sigma^2)` with `sigma^2 = r / SNR`
//! * multiplicative: `Z_ij = xi_ij M_ij` with `Var(xi) = 1 / SNR`
//! * outlier:        `Z_ij in {+a, -a, 0}` w.p. `{1/200, 1/200, 99/100}`,
//!                   `a = sqrt(100 r / SNR)`
//! * quantization:   `Z_ij = q(M_ij) - M_ij` on the grid `{(k + 1/2) a}`,
//!                   `a` found by per-instance bisection on the realized SNR
//!
//! All draws are `ChaCha8` sub-streams derived from the instance seed, so
//! instances are reproducible and independent across parallel trials.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{orthonormalize, DenseMatrix, FactoredMatrix, SparseObservations};
use crate::rng;

use nalgebra::DMatrix;

/// Ground-truth matrix model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixModel {
    /// `M = U V^T` with i.i.d. standard Gaussian factors.
    Standard,
    /// Rank-4 with singular spectrum `(1, 4, 7, 10)` scaled to match the
    /// standard model's expected energy; condition number 10.
    IllConditioned,
}

/// Noise family applied to the observed entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    StandardGaussian,
    Multiplicative,
    Outlier,
    Quantization,
}

/// Declarative noise description; parameters are resolved at realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Target SNR; `inf` means noiseless (mandatory for `kind = none`).
    pub target_snr: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, target_snr: f64) -> Result<Self> {
        let spec = Self { kind, target_snr };
        spec.validate()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            target_snr: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_snr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "target_snr must be positive, got {}",
                self.target_snr
            )));
        }
        if self.kind == NoiseKind::None && self.target_snr.is_finite() {
            return Err(Error::InvalidArgument(
                "kind = none requires target_snr = infinity".into(),
            ));
        }
        if self.kind == NoiseKind::Quantization && !self.target_snr.is_finite() {
            return Err(Error::InvalidArgument(
                "quantization always injects noise; target_snr must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Noise parameters as actually used for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedNoise {
    pub kind: NoiseKind,
    pub target_snr: f64,
    /// Gaussian std (standard kind).
    pub sigma: Option<f64>,
    /// Multiplier std (multiplicative kind).
    pub xi_std: Option<f64>,
    /// Spike magnitude `a` (outlier kind).
    pub outlier_magnitude: Option<f64>,
    /// Calibrated grid step `a` (quantization kind).
    pub quantization_step: Option<f64>,
}

impl RealizedNoise {
    fn bare(spec: NoiseSpec) -> Self {
        Self {
            kind: spec.kind,
            target_snr: spec.target_snr,
            sigma: None,
            xi_std: None,
            outlier_magnitude: None,
            quantization_step: None,
        }
    }

    /// Effective per-entry noise std `sqrt(r / SNR)`; what the FPCA `mu`
    /// rule consumes.
    pub fn effective_sigma(&self, rank: usize) -> f64 {
        if self.target_snr.is_finite() {
            (rank as f64 / self.target_snr).sqrt()
        } else {
            0.0
        }
    }
}

/// A fully realized benchmark instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub truth: DenseMatrix,
    /// Orthonormalized factorization of the truth (for the oracle).
    pub truth_factors: FactoredMatrix,
    pub rank: usize,
    /// Observed set with noise-corrupted values.
    pub observations: SparseObservations,
    pub noise: RealizedNoise,
    pub seed: u64,
    /// Average revealed entries per row.
    pub epsilon: f64,
}

/// `M = U V^T` with i.i.d. N(0,1) factor entries, drawn row-major `U` first.
/// Also returns the orthonormalized factorization.
pub fn gen_gaussian_lowrank(
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
) -> Result<(DenseMatrix, FactoredMatrix)> {
    if r == 0 || r > m.min(n) {
        return Err(Error::RankOutOfRange {
            k: r,
            rows: m,
            cols: n,
        });
    }
    let mut rng = rng::stream(seed, "gaussian-factors", 0);
    let u = draw_gaussian_rows(m, r, &mut rng);
    let v = draw_gaussian_rows(n, r, &mut rng);
    factor_pair(u, v, None)
}

/// Construction spectrum of the ill-conditioned model.
pub const ILL_CONDITIONED_SPECTRUM: [f64; 4] = [1.0, 4.0, 7.0, 10.0];

/// Energy normalization for the ill-conditioned model: `sum(d_i^2)` over the
/// spectrum is 166, so scaling by `sqrt(4/166)` matches the expected
/// Frobenius energy of the standard rank-4 model.
pub fn ill_conditioned_scale() -> f64 {
    let energy: f64 = ILL_CONDITIONED_SPECTRUM.iter().map(|d| d * d).sum();
    (4.0 / energy).sqrt()
}

/// `M = sqrt(4/166) U diag(1, 4, 7, 10) V^T` with Gaussian `U`, `V`;
/// condition number 10, same expected energy as the standard rank-4 model.
pub fn gen_ill_conditioned(n: usize, seed: u64) -> Result<(DenseMatrix, FactoredMatrix)> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "ill-conditioned model needs n >= 4, got {n}"
        )));
    }
    let r = ILL_CONDITIONED_SPECTRUM.len();
    let mut rng = rng::stream(seed, "gaussian-factors", 0);
    let u = draw_gaussian_rows(n, r, &mut rng);
    let v = draw_gaussian_rows(n, r, &mut rng);
    let scale = ill_conditioned_scale();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        r,
        ILL_CONDITIONED_SPECTRUM.iter().map(|&x| scale * x),
    ));
    factor_pair(u, v, Some(d))
}

fn draw_gaussian_rows(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = StandardNormal.sample(rng);
        }
    }
    out
}

fn factor_pair(
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    diag: Option<DMatrix<f64>>,
) -> Result<(DenseMatrix, FactoredMatrix)> {
    let product = match &diag {
        Some(d) => &u * d * v.transpose(),
        None => &u * v.transpose(),
    };
    let qu = orthonormalize(&u);
    let qv = orthonormalize(&v);
    // core = R_u D R_v^T, recovered by projection since Q is orthonormal.
    let core = qu.tr_mul(&product) * &qv;
    let truth = DenseMatrix::from_dmatrix(product)?;
    let factors = FactoredMatrix::new(qu, core, qv)?;
    Ok((truth, factors))
}

/// Each index included independently with probability `epsilon / n`.
/// Returned sorted by `(row, col)`.
pub fn sample_uniform(m: usize, n: usize, epsilon: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=n as f64).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [0, n] = [0, {n}], got {epsilon}"
        )));
    }
    let p = epsilon / n as f64;
    let mut rng = rng::stream(seed, "sample-uniform", 0);
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random::<f64>() < p {
                out.push((i, j));
            }
        }
    }
    Ok(out)
}

/// Corrupt `M` at `indices` according to `spec`; `rank` supplies the signal
/// power `E[M_ij^2] = r` that the calibrations are relative to.
pub fn apply_noise(
    truth: &DenseMatrix,
    indices: &[(usize, usize)],
    spec: NoiseSpec,
    rank: usize,
    seed: u64,
) -> Result<(SparseObservations, RealizedNoise)> {
    spec.validate()?;
    let mut realized = RealizedNoise::bare(spec);
    let mut rng = rng::stream(seed, "noise", 0);
    let snr = spec.target_snr;
    let r = rank as f64;

    let mut triples = Vec::with_capacity(indices.len());
    match spec.kind {
        NoiseKind::None => {
            for &(i, j) in indices {
                triples.push((i, j, truth.get(i, j)));
            }
        }
        NoiseKind::StandardGaussian => {
            let sigma = if snr.is_finite() { (r / snr).sqrt() } else { 0.0 };
            realized.sigma = Some(sigma);
            for &(i, j) in indices {
                let z: f64 = StandardNormal.sample(&mut rng);
                triples.push((i, j, truth.get(i, j) + sigma * z));
            }
        }
        NoiseKind::Multiplicative => {
            let xi_std = if snr.is_finite() {
                (1.0 / snr).sqrt()
            } else {
                0.0
            };
            realized.xi_std = Some(xi_std);
            for &(i, j) in indices {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let m_ij = truth.get(i, j);
                triples.push((i, j, m_ij + xi_std * xi * m_ij));
            }
        }
        NoiseKind::Outlier => {
            if !snr.is_finite() {
                return Err(Error::InvalidArgument(
                    "outlier noise requires a finite target_snr".into(),
                ));
            }
            let a = (100.0 * r / snr).sqrt();
            realized.outlier_magnitude = Some(a);
            for &(i, j) in indices {
                let u: f64 = rng.random();
                let z = if u < 1.0 / 200.0 {
                    a
                } else if u < 2.0 / 200.0 {
                    -a
                } else {
                    0.0
                };
                triples.push((i, j, truth.get(i, j) + z));
            }
        }
        NoiseKind::Quantization => {
            let a = calibrate_quantization_step(truth, indices, snr)?;
            realized.quantization_step = Some(a);
            for &(i, j) in indices {
                triples.push((i, j, quantize(truth.get(i, j), a)));
            }
        }
    }
    let obs = SparseObservations::from_triples(truth.rows(), truth.cols(), triples)?;
    Ok((obs, realized))
}

/// Nearest element of `{(k + 1/2) a : k integer}`; exact midpoints round
/// toward +infinity.
fn quantize(x: f64, a: f64) -> f64 {
    ((x / a).floor() + 0.5) * a
}

fn quantization_snr(truth: &DenseMatrix, indices: &[(usize, usize)], a: f64) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for &(i, j) in indices {
        let m = truth.get(i, j);
        let z = quantize(m, a) - m;
        signal += m * m;
        noise += z * z;
    }
    if noise == 0.0 {
        f64::INFINITY
    } else {
        signal / noise
    }
}

/// Find the grid step `a` whose realized noise ratio over `E` is within 2%
/// of `1 / target_snr`, by bisection over `[1e-6 s, 10 s]`, `s = max |M_ij|`
/// on `E`.
pub fn calibrate_quantization_step(
    truth: &DenseMatrix,
    indices: &[(usize, usize)],
    target_snr: f64,
) -> Result<f64> {
    if !target_snr.is_finite() || target_snr <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "quantization calibration requires a finite positive target SNR, got {target_snr}"
        )));
    }
    if indices.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let s = indices
        .iter()
        .map(|&(i, j)| truth.get(i, j).abs())
        .fold(0.0, f64::max);
    if s == 0.0 {
        return Err(Error::InvalidArgument(
            "cannot calibrate quantization on an all-zero observation set".into(),
        ));
    }
    let mut lo = 1e-6 * s; // small step: tiny noise, huge SNR
    let mut hi = 10.0 * s; // large step: coarse grid, low SNR
    let snr_lo = quantization_snr(truth, indices, lo);
    let snr_hi = quantization_snr(truth, indices, hi);
    if snr_lo < target_snr || snr_hi > target_snr {
        return Err(Error::CalibrationBracket {
            target: target_snr,
            achievable_low: snr_hi,
            achievable_high: snr_lo,
        });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if quantization_snr(truth, indices, mid) >= target_snr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    let achieved = quantization_snr(truth, indices, a);
    // 2% tolerance on the noise ratio 1/SNR.
    if (1.0 / achieved - 1.0 / target_snr).abs() > 0.02 / target_snr {
        return Err(Error::CalibrationBracket {
            target: target_snr,
            achievable_low: achieved,
            achievable_high: achieved,
        });
    }
    Ok(a)
}

/// Empirical `sum_E M^2 / sum_E (N - M)^2`; infinity when the observations
/// are exact.
pub fn measure_snr(truth: &DenseMatrix, observations: &SparseObservations) -> Result<f64> {
    if truth.rows() != observations.rows() || truth.cols() != observations.cols() {
        return Err(Error::DimensionMismatch(format!(
            "truth is {}x{}, observations are {}x{}",
            truth.rows(),
            truth.cols(),
            observations.rows(),
            observations.cols()
        )));
    }
    if observations.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let mut signal = 0.0;
    let mut noise = 0.0;
    for e in observations.iter() {
        let m = truth.get(e.row, e.col);
        signal += m * m;
        let z = e.value - m;
        noise += z * z;
    }
    Ok(if noise == 0.0 {
        f64::INFINITY
    } else {
        signal / noise
    })
}

/// Generate a full instance: truth (sub-stream "matrix"), sampled index set
/// (sub-stream "sample"), and noisy values (sub-stream "noise").
pub fn realize_instance(
    model: MatrixModel,
    m: usize,
    n: usize,
    r: usize,
    epsilon: f64,
    spec: NoiseSpec,
    seed: u64,
) -> Result<ProblemInstance> {
    let (truth, truth_factors) = match model {
        MatrixModel::Standard => {
            gen_gaussian_lowrank(m, n, r, rng::derive_seed(seed, "matrix", 0))?
        }
        MatrixModel::IllConditioned => {
            if m != n {
                return Err(Error::InvalidArgument(
                    "ill-conditioned model is square; m must equal n".into(),
                ));
            }
            if r != 4 {
                return Err(Error::InvalidArgument(
                    "ill-conditioned model has fixed rank 4".into(),
                ));
            }
            gen_ill_conditioned(n, rng::derive_seed(seed, "matrix", 0))?
        }
    };
    let indices = sample_uniform(m, n, epsilon, rng::derive_seed(seed, "sample", 0))?;
    let (observations, noise) =
        apply_noise(&truth, &indices, spec, r, rng::derive_seed(seed, "noise", 0))?;
    Ok(ProblemInstance {
        truth,
        truth_factors,
        rank: r,
        observations,
        noise,
        seed,
        epsilon,
    })
}
