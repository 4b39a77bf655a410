//! Phase I calibration and Phase II monitoring.

mod calibrate;
mod chart;
mod config;
mod stats;

pub use calibrate::{
    censored_arl, control_limit_search, phase1_calibrate, run_lengths, CalibrationReport, LimitChoice,
};
pub use chart::{
    Chart, Deviation, MonitorSession, Preprocessor, ReferenceDistributions, SparsityStats, StatEngine, StepResult,
};
pub use config::{default_sparsity_grid, MonitorConfig};
pub use stats::{
    empirical_pvalue, fisher_combine, gamma_from_curve, gamma_nll_curve, gamma_subsamples, lower_triangle,
    lrt_statistic, mewmc_update, ranked_pairs, select_gamma, select_index_set,
};
