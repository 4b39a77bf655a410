//! Block-structured precision matrices for functional scores.

mod admm;
mod block;
mod fit;
mod likelihood;
mod permutation;
mod ridge;

pub use admm::{
    adaptive_fglasso, adaptive_fglasso_warm, constrained_mle, constrained_mle_warm, fglasso_objective,
    group_soft_threshold, spectral_apply, step_theta, AdmmConfig, AdmmReport, AdmmSolution, AdmmState,
    FAST_PATH_TOLERANCE,
};
pub use block::{pair_at, pair_count, pair_index, BlockMatrix, PairSet};
pub use fit::{default_gamma_grid, fit_precision, lasso_grid, sigma_from_scores, PrecisionConfig, PrecisionFit};
pub use likelihood::{block_frobenius, clip_to_pd, desparsify, log_likelihood, PD_FLOOR};
pub use permutation::{Direction, PermutationSpec};
pub use ridge::{ridge_precision, ridge_stationarity_residual};
