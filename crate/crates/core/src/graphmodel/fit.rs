use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::admm::{adaptive_fglasso_warm, AdmmConfig, AdmmState};
use super::block::BlockMatrix;
use super::likelihood::{clip_to_pd, desparsify, log_likelihood, PD_FLOOR};
use super::ridge::ridge_precision;
use crate::error::{MpcError, Result};
use crate::fda::{score_covariance, ScoreSet};

/// Tuning for the in-control precision fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    /// Candidate penalties for the ridge initializer.
    pub ridge_grid: Vec<f64>,
    /// Number of points on the logarithmic lasso grid.
    pub lasso_grid_len: usize,
    /// Smallest lasso penalty as a fraction of the one that empties every
    /// off-diagonal block.
    pub lasso_grid_ratio: f64,
    pub cv_folds: usize,
    pub seed: u64,
    /// `None` picks [`AdmmConfig::for_dimension`].
    pub admm: Option<AdmmConfig>,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            ridge_grid: default_gamma_grid(),
            lasso_grid_len: 20,
            lasso_grid_ratio: 1e-3,
            cv_folds: 5,
            seed: 0,
            admm: None,
        }
    }
}

/// `10^-3, 10^-2.5, …, 10^2`.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=10).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

/// In-control graphical model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionFit {
    pub theta0: BlockMatrix,
    pub theta0_ridge: BlockMatrix,
    pub theta0_desparse: BlockMatrix,
    pub sigma0: BlockMatrix,
    pub lasso_penalty: f64,
    pub ridge_penalty: f64,
}

impl PrecisionFit {
    /// Adaptive weights `w_jl = ‖Θ̃₀_jl‖_F`.
    pub fn weights(&self) -> DMatrix<f64> {
        self.theta0_ridge.block_norms()
    }

    /// `Θ̂₀*` with eigenvalues raised to a small positive floor when needed.
    pub fn desparse_pd(&self) -> BlockMatrix {
        let (m, n) = clip_to_pd(&self.theta0_desparse, PD_FLOOR);
        if n > 0 {
            warn!("de-sparsified precision had {n} eigenvalue(s) below {PD_FLOOR:e}; clipped");
        }
        m
    }

    /// Channels `j ≠ l` linked by a nonzero block of `Θ̂₀`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let p = self.theta0.p();
        let mut out = Vec::new();
        for j in 0..p {
            for l in 0..j {
                if self.theta0.block_norm(j, l) > 0.0 {
                    out.push((j, l));
                }
            }
        }
        out
    }
}

/// `PΩ̂P ᵀ` from per-component second-moment matrices.
pub fn sigma_from_scores(scores: &ScoreSet) -> Result<BlockMatrix> {
    BlockMatrix::from_components(&score_covariance(scores))
}

/// Fits the ridge initializer, the adaptive functional graphical lasso and
/// its de-sparsified version, with penalties chosen by cross-validated
/// held-out Gaussian log-likelihood.
pub fn fit_precision(scores: &ScoreSet, cfg: &PrecisionConfig) -> Result<PrecisionFit> {
    let n = scores.n_obs();
    if cfg.cv_folds < 2 || n < cfg.cv_folds {
        return Err(MpcError::InvalidInput(format!(
            "{n} training observations cannot be split into {} folds",
            cfg.cv_folds
        )));
    }
    if cfg.ridge_grid.is_empty() || cfg.ridge_grid.iter().any(|g| !(*g > 0.0)) {
        return Err(MpcError::InvalidInput("ridge grid must be non-empty and positive".into()));
    }
    if cfg.lasso_grid_len == 0 || !(cfg.lasso_grid_ratio > 0.0 && cfg.lasso_grid_ratio < 1.0) {
        return Err(MpcError::InvalidInput("invalid lasso grid".into()));
    }
    let sigma0 = sigma_from_scores(scores)?;
    let (p, k) = (sigma0.p(), sigma0.k());
    let admm = cfg.admm.unwrap_or_else(|| AdmmConfig::for_dimension(p * k));
    let zero = BlockMatrix::zeros(p, k);

    let folds = cv_folds(scores, cfg.cv_folds, cfg.seed)?;

    let mut best_gamma = (f64::NEG_INFINITY, cfg.ridge_grid[0]);
    for &gamma in &cfg.ridge_grid {
        let mut total = 0.0;
        for f in &folds {
            let th = ridge_precision(&f.train, &zero, gamma)?;
            total += log_likelihood(&th, f.test.data())?;
        }
        let score = total / folds.len() as f64;
        if score > best_gamma.0 {
            best_gamma = (score, gamma);
        }
    }
    let gamma0 = best_gamma.1;
    let theta0_ridge = ridge_precision(&sigma0, &zero, gamma0)?;
    let weights = theta0_ridge.block_norms();

    let lambda_grid = lasso_grid(&sigma0, &weights, cfg.lasso_grid_len, cfg.lasso_grid_ratio);
    let mut totals = vec![0.0; lambda_grid.len()];
    for f in &folds {
        let ridge_f = ridge_precision(&f.train, &zero, gamma0)?;
        let w_f = ridge_f.block_norms();
        let mut warm = AdmmState::at(ridge_f.data().clone());
        // Largest penalty first so each solve starts near the next one.
        for (i, &lambda) in lambda_grid.iter().enumerate().rev() {
            match adaptive_fglasso_warm(&f.train, &w_f, lambda, &admm, Some(&warm)) {
                Ok(sol) => {
                    totals[i] += log_likelihood(&sol.theta, f.test.data())?;
                    warm = sol.state;
                }
                Err(MpcError::NotConverged { .. }) => {
                    warn!("lasso penalty {lambda:e} did not converge on a fold; excluded");
                    totals[i] = f64::NEG_INFINITY;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let (best_idx, best_total) = totals
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, t)| if t > acc.1 { (i, t) } else { acc });
    if best_total == f64::NEG_INFINITY {
        return Err(MpcError::Infeasible("no lasso penalty converged in cross-validation".into()));
    }
    let lambda = lambda_grid[best_idx];
    let warm = AdmmState::at(theta0_ridge.data().clone());
    let theta0 = adaptive_fglasso_warm(&sigma0, &weights, lambda, &admm, Some(&warm))?.theta;
    if theta0.data().clone().cholesky().is_none() {
        return Err(MpcError::NotPositiveDefinite("sparse in-control precision".into()));
    }
    let theta0_desparse = desparsify(&theta0, &sigma0)?;
    Ok(PrecisionFit {
        theta0,
        theta0_ridge,
        theta0_desparse,
        sigma0,
        lasso_penalty: lambda,
        ridge_penalty: gamma0,
    })
}

/// Ascending grid from `ratio · λ_max` to `λ_max`, where `λ_max` is the
/// smallest penalty that zeroes every off-diagonal block at the optimum.
pub fn lasso_grid(sigma0: &BlockMatrix, weights: &DMatrix<f64>, len: usize, ratio: f64) -> Vec<f64> {
    let p = sigma0.p();
    let mut lmax: f64 = 0.0;
    for j in 0..p {
        for l in 0..j {
            lmax = lmax.max(weights[(j, l)] * sigma0.block_norm(j, l));
        }
    }
    if !(lmax > 0.0) {
        lmax = 1.0;
    }
    if len == 1 {
        return vec![lmax];
    }
    let lo = ratio.log10();
    (0..len)
        .map(|i| lmax * 10f64.powf(lo * (1.0 - i as f64 / (len - 1) as f64)))
        .collect()
}

struct Fold {
    train: BlockMatrix,
    test: BlockMatrix,
}

fn cv_folds(scores: &ScoreSet, folds: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = scores.n_obs();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| i % folds == f);
            let test: Vec<usize> = test.into_iter().map(|i| idx[i]).collect();
            let train: Vec<usize> = train.into_iter().map(|i| idx[i]).collect();
            Ok(Fold {
                train: sigma_from_scores(&scores.select(&train))?,
                test: sigma_from_scores(&scores.select(&test))?,
            })
        })
        .collect()
}
