//! Output container shared by all solvers.

use crate::matrix::FactoredMatrix;

/// What a solver hands back to the harness.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Rank-`rank_used` estimate of the completed matrix.
    pub estimate: FactoredMatrix,
    /// Outer iterations actually performed.
    pub iterations: usize,
    /// Observed-entry residual per iteration, starting at the initial point.
    /// Nonincreasing after initialization.
    pub objective_trace: Vec<f64>,
    /// Wall-clock seconds spent inside the solve.
    pub seconds: f64,
    /// Numerical rank of the estimate (may exceed the requested rank for
    /// FPCA, which is free to overestimate).
    pub rank_used: usize,
}
