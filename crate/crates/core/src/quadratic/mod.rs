//! Ill-conditioned finite-sum quadratics and the incremental quasi-Newton
//! solver built from greedy rank-k surrogate updates.

mod instance;
mod solver;
mod updates;

pub use instance::{generate_instance, QuadraticInstance};
pub use solver::{
    iterations_to_tolerance, lisr_solve, lisr_solve_timed, LisrOptions, SolveOutcome, SolverState,
    SolverVariant, TracePoint,
};
pub use updates::{
    gradient_correction_step, greedy_select, selection_matrix, selection_scores, srk_update, top_k,
    woodbury_inverse_update, Variant, CORRECTION_COEFFICIENT,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuadError {
    #[error("dimension {0} is odd; the generator needs two equal halves")]
    OddDimension(usize),
    #[error("shape mismatch")]
    ShapeMismatch,
    #[error("diagonal entries must be positive and finite")]
    NonPositiveDiagonal,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("rank k = {k} must satisfy 1 <= k <= d = {d}")]
    InvalidRank { k: usize, d: usize },
    #[error("gradient sum has zero norm")]
    ZeroGradSum,
    #[error("objective became non-finite at iteration {iteration}")]
    NumericalBreakdown { iteration: usize },
}
