//! Functional data: profile samples, spline smoothing, multichannel FPCA.

mod mfpca;
mod sample;
mod smoothing;

pub use mfpca::{fit_mfpca, project_scores, score_covariance, MfpcaModel, ScoreSet};
pub use sample::{uniform_grid, ProfileSample};
pub use smoothing::{smooth_profiles, smooth_to_uniform, BSplineBasis, CurveFit, Smoother, SmoothingConfig};
