use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::fda::SmoothingConfig;
use crate::graphmodel::{default_gamma_grid, pair_count, AdmmConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    /// MEWMC weight ρ in (0, 1].
    pub ewma_weight: f64,
    /// Sparsity levels `s`; `None` uses [`default_sparsity_grid`].
    pub sparsity_grid: Option<Vec<usize>>,
    pub fve_target: f64,
    pub arl0: f64,
    pub n_seq_ic: usize,
    pub l_seq_ic: usize,
    pub ridge_gamma_grid: Vec<f64>,
    pub gamma_rate_threshold: f64,
    /// Number of random subsample fits for γ selection.
    pub gamma_subsamples: usize,
    /// In-sample share of each γ-selection subsample.
    pub gamma_in_fraction: f64,
    /// Share of the in-control sample used for training.
    pub training_fraction: f64,
    pub cv_folds: usize,
    pub rng_seed: u64,
    /// Smooth raw profiles before projection.
    pub smooth: bool,
    pub smoothing: SmoothingConfig,
    /// `None` picks [`AdmmConfig::for_dimension`].
    pub admm: Option<AdmmConfig>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            ewma_weight: 0.1,
            sparsity_grid: None,
            fve_target: 0.95,
            arl0: 100.0,
            n_seq_ic: 200,
            l_seq_ic: 200,
            ridge_gamma_grid: default_gamma_grid(),
            gamma_rate_threshold: 1e-3,
            gamma_subsamples: 20,
            gamma_in_fraction: 0.7,
            training_fraction: 0.25,
            cv_folds: 5,
            rng_seed: 0,
            smooth: true,
            smoothing: SmoothingConfig::default(),
            admm: None,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MpcError::InvalidInput(m));
        if !(self.ewma_weight > 0.0 && self.ewma_weight <= 1.0) {
            return bad(format!("ewma_weight must lie in (0, 1], got {}", self.ewma_weight));
        }
        if !(self.fve_target > 0.0 && self.fve_target < 1.0) {
            return bad(format!("fve_target must lie in (0, 1), got {}", self.fve_target));
        }
        if !(self.arl0 > 1.0) {
            return bad(format!("arl0 must exceed 1, got {}", self.arl0));
        }
        if self.n_seq_ic == 0 || self.l_seq_ic == 0 {
            return bad("calibration needs at least one sequence of positive length".into());
        }
        if self.ridge_gamma_grid.len() < 3
            || self.ridge_gamma_grid.iter().any(|g| !(*g > 0.0) || !g.is_finite())
            || self.ridge_gamma_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return bad("ridge_gamma_grid needs at least 3 positive, strictly increasing values".into());
        }
        if self.gamma_rate_threshold.is_nan() || self.gamma_rate_threshold < 0.0 {
            return bad("gamma_rate_threshold must be >= 0".into());
        }
        if self.gamma_subsamples == 0 || !(self.gamma_in_fraction > 0.0 && self.gamma_in_fraction < 1.0) {
            return bad("invalid gamma subsampling settings".into());
        }
        if !(self.training_fraction > 0.0 && self.training_fraction < 1.0) {
            return bad(format!("training_fraction must lie in (0, 1), got {}", self.training_fraction));
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if let Some(g) = &self.sparsity_grid {
            if g.is_empty() || g.contains(&0) || g.windows(2).any(|w| w[0] >= w[1]) {
                return bad("sparsity_grid must be non-empty, positive and strictly increasing".into());
            }
        }
        self.smoothing.validate()?;
        if let Some(a) = &self.admm {
            a.validate()?;
        }
        Ok(())
    }

    /// Sparsity levels for `p` channels, checked against the pair count.
    pub fn sparsity_levels(&self, p: usize) -> Result<Vec<usize>> {
        match &self.sparsity_grid {
            None => Ok(default_sparsity_grid(p, 10)),
            Some(g) => {
                let max = pair_count(p);
                if let Some(&s) = g.iter().find(|&&s| s == 0 || s > max) {
                    return Err(MpcError::InvalidInput(format!(
                        "sparsity level {s} outside 1..={max} for p = {p}"
                    )));
                }
                Ok(g.clone())
            }
        }
    }
}

/// `count` integers evenly spaced from 1 to `⌈p(p+1)/4⌉`, rounded and
/// deduplicated.
pub fn default_sparsity_grid(p: usize, count: usize) -> Vec<usize> {
    let top = (pair_count(p) as f64 / 2.0).ceil().max(1.0);
    let mut out: Vec<usize> = if count <= 1 {
        vec![1]
    } else {
        (0..count)
            .map(|i| (1.0 + (top - 1.0) * i as f64 / (count - 1) as f64).round() as usize)
            .collect()
    };
    out.dedup();
    out
}
