//! Low-rank matrix completion from sparse, noise-corrupted observations.
//!
//! Three solver families over one observation substrate:
//!
//! * [`optspace`] — spectral initialization (trimming + scaled rank-r
//!   projection) followed by gradient descent on orthonormal factors, plus
//!   an incremental variant for ill-conditioned matrices.
//! * [`admira`] — greedy atomic decomposition for rank-constrained observed
//!   least squares.
//! * [`fpca`] — nuclear-norm-regularized least squares by fixed-point
//!   iteration with singular-value shrinkage and continuation.
//!
//! [`datagen`] builds synthetic problem instances under five noise models
//! with SNR calibration, [`metrics`] scores estimates (RMSE, MAE/NMAE,
//! oracle and theoretical reference curves), and [`sweep`]/[`datasets`]
//! drive benchmark grids and real rating-data evaluations that the `lrmc`
//! CLI exposes.

pub mod error;
pub mod rng;

pub mod matrix;
pub mod svd;

pub mod datagen;
pub mod spectral;

pub mod solver;

pub mod admira;
pub mod fpca;
pub mod optspace;

pub mod metrics;

pub mod datasets;
pub mod sweep;

pub use error::{Error, Result};
pub use matrix::{project_observed, DenseMatrix, FactoredMatrix, Observation, SparseObservations};
pub use solver::SolveResult;
pub use svd::{spectral_norm, truncated_svd, truncated_svd_sparse, SvdTriplets};
