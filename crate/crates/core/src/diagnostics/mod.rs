//! Post-signal diagnosis: which relationships shifted, and when.

mod bh;
mod changepoint;

pub use bh::{bh_reject, bh_select};
pub use changepoint::{estimate_change_point, ChangePoint, MIN_POST_SEGMENT};

use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::fda::ScoreSet;
use crate::graphmodel::pair_index;
use crate::monitor::{Chart, StepResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub change_point: usize,
    pub shifted_pairs: Vec<(usize, usize)>,
    pub fdr: f64,
    pub signal_step: usize,
    pub profile: Vec<(usize, f64)>,
}

/// Diagnoses an alarm from the monitored steps `1..=m`, the last of which
/// raised it.
pub fn diagnose(chart: &Chart, history: &[StepResult], fdr: f64) -> Result<DiagnosisResult> {
    let last = history
        .last()
        .ok_or_else(|| MpcError::InvalidInput("empty monitoring history".into()))?;
    let (p, k) = (chart.n_channels(), chart.n_components());
    let obs: Vec<Vec<f64>> = history.iter().map(|r| r.scores.clone()).collect();
    let scores = ScoreSet::from_observations(k, p, &obs)?;
    let engine = chart.engine();
    let cp = estimate_change_point(&scores, &engine.theta0, &engine.theta0_star, engine.gamma)?;
    let mut pv = vec![0.0; p * (p + 1) / 2];
    for j in 0..p {
        for l in 0..=j {
            pv[pair_index(j, l)] = last.d_pvalues[(j, l)];
        }
    }
    Ok(DiagnosisResult {
        change_point: cp.tau,
        shifted_pairs: bh_select(&pv, fdr)?,
        fdr,
        signal_step: last.step_index,
        profile: cp.profile,
    })
}
