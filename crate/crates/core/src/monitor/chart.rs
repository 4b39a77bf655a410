use std::borrow::Cow;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::MonitorConfig;
use super::stats::{empirical_pvalue, fisher_combine, lower_triangle, mewmc_update, ranked_pairs};
use crate::error::{MpcError, Result};
use crate::fda::{MfpcaModel, Smoother};
use crate::graphmodel::{
    block_frobenius, constrained_mle_warm, log_likelihood, pair_count, pair_index, ridge_precision, AdmmConfig,
    AdmmState, BlockMatrix, PairSet, PrecisionFit,
};
use crate::linalg::serde_matrix;

/// Sorted in-control samples of `D_jl` and `Λ_s`, and the control limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDistributions {
    /// One ascending sample per pair, in lower-triangular pair order.
    pub d_refs: Vec<Vec<f64>>,
    /// One ascending sample per sparsity level.
    pub lambda_refs: Vec<Vec<f64>>,
    pub control_limit: f64,
}

impl ReferenceDistributions {
    pub fn validate(&self, pairs: usize, levels: usize) -> Result<()> {
        let sorted_finite = |v: &Vec<f64>| !v.is_empty() && v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] <= w[1]);
        if self.d_refs.len() != pairs || self.lambda_refs.len() != levels {
            return Err(MpcError::Format("reference distributions do not match the model".into()));
        }
        if !self.d_refs.iter().chain(&self.lambda_refs).all(sorted_finite) {
            return Err(MpcError::Format("reference samples must be non-empty, finite and sorted".into()));
        }
        if !(self.control_limit > 0.0) || !self.control_limit.is_finite() {
            return Err(MpcError::Format("control limit must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Everything Phase II needs, as produced by calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub config: MonitorConfig,
    /// Grid on which raw observations arrive.
    pub raw_grid: Vec<f64>,
    pub mfpca: MfpcaModel,
    pub precision: PrecisionFit,
    pub refs: ReferenceDistributions,
    /// Ridge penalty of the Phase II estimate.
    pub gamma: f64,
    /// Factor applied to projected scores before any precision estimate.
    pub score_scale: f64,
    pub sparsity_levels: Vec<usize>,
}

impl Chart {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let p = self.mfpca.n_channels();
        let k = self.mfpca.n_components();
        if self.precision.theta0.p() != p || self.precision.theta0.k() != k {
            return Err(MpcError::Format("precision fit does not match the MFPCA model".into()));
        }
        if !(self.gamma > 0.0) || !(self.score_scale > 0.0) || !self.score_scale.is_finite() {
            return Err(MpcError::Format("invalid gamma or score scale".into()));
        }
        if self.sparsity_levels.is_empty() || self.sparsity_levels.iter().any(|&s| s == 0 || s > pair_count(p)) {
            return Err(MpcError::Format("invalid sparsity levels".into()));
        }
        self.refs.validate(pair_count(p), self.sparsity_levels.len())
    }

    pub fn n_channels(&self) -> usize {
        self.mfpca.n_channels()
    }

    pub fn n_components(&self) -> usize {
        self.mfpca.n_components()
    }

    pub fn admm_config(&self) -> AdmmConfig {
        admm_or_default(&self.config, self.n_channels() * self.n_components())
    }

    pub fn engine(&self) -> StatEngine {
        StatEngine::new(&self.precision, self.gamma, self.sparsity_levels.clone(), self.admm_config())
    }

    pub fn preprocessor(&self) -> Result<Preprocessor> {
        Preprocessor::new(&self.config, &self.raw_grid, &self.mfpca, self.score_scale)
    }

    /// Starts a Phase II session at `S₀ = Ω̂₀`.
    pub fn session(&self) -> Result<MonitorSession<'_>> {
        MonitorSession::start(Cow::Borrowed(self))
    }

    /// Same as [`Chart::session`], owning the chart.
    pub fn into_session(self) -> Result<MonitorSession<'static>> {
        MonitorSession::start(Cow::Owned(self))
    }

    /// Per-component in-control second moments `Ω̂₀ₖ`.
    pub fn initial_state(&self) -> Vec<DMatrix<f64>> {
        (0..self.n_components()).map(|c| self.precision.sigma0.component(c)).collect()
    }
}

pub(crate) fn admm_or_default(cfg: &MonitorConfig, dim: usize) -> AdmmConfig {
    cfg.admm.unwrap_or_else(|| AdmmConfig::for_dimension(dim))
}

/// Turns a raw `p × n_raw` observation into scaled scores.
pub struct Preprocessor {
    smoother: Option<Smoother>,
    target: Option<DMatrix<f64>>,
    p: usize,
    n_raw: usize,
    scale: f64,
    mfpca: MfpcaModel,
}

impl Preprocessor {
    pub fn new(cfg: &MonitorConfig, raw_grid: &[f64], mfpca: &MfpcaModel, scale: f64) -> Result<Self> {
        let same_grid = raw_grid.len() == mfpca.grid.len()
            && raw_grid.iter().zip(&mfpca.grid).all(|(a, b)| (a - b).abs() <= 1e-12);
        let (smoother, target) = if cfg.smooth {
            let sm = Smoother::new(raw_grid, &cfg.smoothing)?;
            let target = if same_grid { None } else { Some(sm.basis().design(&mfpca.grid)) };
            (Some(sm), target)
        } else {
            if !same_grid {
                return Err(MpcError::InvalidInput("raw grid differs from the model grid and smoothing is off".into()));
            }
            (None, None)
        };
        Ok(Self {
            smoother,
            target,
            p: mfpca.n_channels(),
            n_raw: raw_grid.len(),
            scale,
            mfpca: mfpca.clone(),
        })
    }

    /// Scaled scores, `K × p` row-major.
    pub fn scores(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.p * self.n_raw {
            return Err(MpcError::DimensionMismatch(format!(
                "observation has {} values, expected {} channels x {} points",
                raw.len(),
                self.p,
                self.n_raw
            )));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::InvalidInput("observation contains non-finite values".into()));
        }
        let mut xi = match &self.smoother {
            None => self.mfpca.project_observation(raw)?,
            Some(sm) => {
                let mut smooth = Vec::with_capacity(self.p * self.mfpca.n_points());
                for j in 0..self.p {
                    let fit = sm.fit(&raw[j * self.n_raw..(j + 1) * self.n_raw])?;
                    match &self.target {
                        None => smooth.extend(sm.evaluate(&fit.coefficients)),
                        Some(d) => smooth.extend((d * &fit.coefficients).iter()),
                    }
                }
                self.mfpca.project_observation(&smooth)?
            }
        };
        for v in &mut xi {
            *v *= self.scale;
        }
        Ok(xi)
    }
}

/// Statistics shared by calibration and monitoring.
#[derive(Debug, Clone)]
pub struct StatEngine {
    pub p: usize,
    pub k: usize,
    pub theta0: BlockMatrix,
    /// De-sparsified estimate, clipped to be positive definite.
    pub theta0_star: BlockMatrix,
    pub gamma: f64,
    pub levels: Vec<usize>,
    pub admm: AdmmConfig,
}

/// Per-step quantities computed before any `Λ` reference is available.
#[derive(Debug, Clone)]
pub struct Deviation {
    pub sn: BlockMatrix,
    pub d: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SparsityStats {
    pub d_pvalues: DMatrix<f64>,
    pub index_sets: Vec<Vec<(usize, usize)>>,
    pub lambda_s: Vec<f64>,
}

impl StatEngine {
    pub fn new(fit: &PrecisionFit, gamma: f64, levels: Vec<usize>, admm: AdmmConfig) -> Self {
        Self {
            p: fit.theta0.p(),
            k: fit.theta0.k(),
            theta0: fit.theta0.clone(),
            theta0_star: fit.desparse_pd(),
            gamma,
            levels,
            admm,
        }
    }

    /// `PSₙPᵀ`, the `Θ̂₀`-targeted ridge estimate and its block distances.
    pub fn deviation(&self, state: &[DMatrix<f64>]) -> Result<Deviation> {
        let sn = BlockMatrix::from_components(state)?;
        let ridge = ridge_precision(&sn, &self.theta0, self.gamma)?;
        let d = block_frobenius(&ridge, &self.theta0)?;
        Ok(Deviation { sn, d })
    }

    /// Shift p-values, index sets and constrained LRTs for every sparsity
    /// level. `warm` carries solver state between calls.
    pub fn sparsity_stats(
        &self,
        dev: &Deviation,
        d_refs: &[Vec<f64>],
        warm: &mut [Option<AdmmState>],
    ) -> Result<SparsityStats> {
        let p = self.p;
        let d_low = lower_triangle(&dev.d);
        let pv_low: Vec<f64> = d_low.iter().zip(d_refs).map(|(&d, r)| empirical_pvalue(r, d)).collect();
        let mut d_pvalues = DMatrix::zeros(p, p);
        for j in 0..p {
            for l in 0..=j {
                let v = pv_low[pair_index(j, l)];
                d_pvalues[(j, l)] = v;
                d_pvalues[(l, j)] = v;
            }
        }
        let max_s = *self.levels.iter().max().unwrap_or(&1);
        let ranked = ranked_pairs(&pv_low, &d_low, max_s)?;
        let base = log_likelihood(&self.theta0_star, dev.sn.data())?;
        let mut index_sets = Vec::with_capacity(self.levels.len());
        let mut lambda_s = Vec::with_capacity(self.levels.len());
        for (i, &s) in self.levels.iter().enumerate() {
            let pairs: Vec<(usize, usize)> = ranked[..s].to_vec();
            let free: PairSet = pairs.iter().copied().collect();
            let sol = constrained_mle_warm(dev.sn.data(), &self.theta0, &free, &self.admm, warm[i].as_ref())?;
            lambda_s.push(log_likelihood(&sol.theta, dev.sn.data())? - base);
            warm[i] = Some(sol.state);
            index_sets.push(pairs);
        }
        Ok(SparsityStats {
            d_pvalues,
            index_sets,
            lambda_s,
        })
    }

    /// `p̂ₛ` and the combined statistic.
    pub fn combine(&self, lambda_s: &[f64], lambda_refs: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
        let pv: Vec<f64> = lambda_s.iter().zip(lambda_refs).map(|(&l, r)| empirical_pvalue(r, l)).collect();
        let lambda = fisher_combine(&pv)?;
        Ok((pv, lambda))
    }
}

/// One Phase II step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step_index: usize,
    /// Scaled scores, `K × p` row-major.
    pub scores: Vec<f64>,
    #[serde(with = "serde_matrix")]
    pub d: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub d_pvalues: DMatrix<f64>,
    pub sparsity_levels: Vec<usize>,
    pub index_sets: Vec<Vec<(usize, usize)>>,
    pub lambda_s: Vec<f64>,
    pub s_pvalues: Vec<f64>,
    pub lambda: f64,
    pub control_limit: f64,
    pub signal: bool,
}

/// A running Phase II chart.
pub struct MonitorSession<'a> {
    chart: Cow<'a, Chart>,
    engine: StatEngine,
    pre: Preprocessor,
    state: Vec<DMatrix<f64>>,
    step: usize,
    warm: Vec<Option<AdmmState>>,
}

impl<'a> MonitorSession<'a> {
    fn start(chart: Cow<'a, Chart>) -> Result<Self> {
        chart.validate()?;
        Ok(Self {
            engine: chart.engine(),
            pre: chart.preprocessor()?,
            state: chart.initial_state(),
            step: 0,
            warm: vec![None; chart.sparsity_levels.len()],
            chart,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn state(&self) -> &[DMatrix<f64>] {
        &self.state
    }

    /// Processes a raw `p × n` observation on the calibration grid.
    pub fn step_raw(&mut self, raw: &[f64]) -> Result<StepResult> {
        let xi = self.pre.scores(raw)?;
        self.step_scores(&xi)
    }

    /// Processes already-projected, scaled scores (`K × p` row-major). On
    /// error the session is left unchanged.
    pub fn step_scores(&mut self, xi: &[f64]) -> Result<StepResult> {
        let mut next = self.state.clone();
        mewmc_update(&mut next, xi, self.chart.config.ewma_weight)?;
        let dev = self.engine.deviation(&next)?;
        let mut warm = self.warm.clone();
        let stats = self.engine.sparsity_stats(&dev, &self.chart.refs.d_refs, &mut warm)?;
        let (s_pvalues, lambda) = self.engine.combine(&stats.lambda_s, &self.chart.refs.lambda_refs)?;
        self.state = next;
        self.warm = warm;
        self.step += 1;
        let h = self.chart.refs.control_limit;
        Ok(StepResult {
            step_index: self.step,
            scores: xi.to_vec(),
            d: dev.d,
            d_pvalues: stats.d_pvalues,
            sparsity_levels: self.engine.levels.clone(),
            index_sets: stats.index_sets,
            lambda_s: stats.lambda_s,
            s_pvalues,
            lambda,
            control_limit: h,
            signal: lambda > h,
        })
    }
}
