//! Synthetic multichannel profiles from known precision structures.

mod arl;
mod generate;
mod models;
mod scenarios;

pub use arl::{evaluate_arl, ArlReport, ArlSettings, RunRecord};
pub use generate::{fourier_basis, generate_profiles, ProfileGenerator};
pub use models::{base_matrix, build_theta0, ModelId, SimModelSpec};
pub use scenarios::{apply_scenario, Scenario, ScenarioOutcome, ScenarioSpec, LOGDET_MARGIN};
