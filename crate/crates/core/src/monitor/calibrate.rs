use log::info;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chart::{admm_or_default, Chart, ReferenceDistributions, StatEngine};
use super::config::MonitorConfig;
use super::stats::{lower_triangle, mewmc_update, select_gamma};
use crate::error::{MpcError, Result};
use crate::fda::{fit_mfpca, project_scores, smooth_to_uniform, ProfileSample, ScoreSet};
use crate::graphmodel::{fit_precision, pair_count, sigma_from_scores, AdmmState, PrecisionConfig};
use crate::seeding::{derive_rng, derive_seed, tag};

/// Summary of a Phase I run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_training: usize,
    pub n_tuning: usize,
    pub n_components: usize,
    pub fve: f64,
    pub score_scale: f64,
    pub ridge_penalty: f64,
    pub lasso_penalty: f64,
    pub gamma: f64,
    pub sparsity_levels: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub control_limit: f64,
    /// Censored-run ARL estimate at the chosen limit.
    pub arl_estimate: f64,
    /// Estimate at the next-smaller candidate limit, if any.
    pub arl_below: Option<f64>,
    pub uncensored_runs: usize,
    pub reference_size: usize,
}

/// `(Σ run lengths) / #uncensored`; `None` when every run is censored.
pub fn censored_arl(runs: &[(usize, bool)]) -> Option<f64> {
    let total: usize = runs.iter().map(|r| r.0).sum();
    let events = runs.iter().filter(|r| !r.1).count();
    (events > 0).then(|| total as f64 / events as f64)
}

/// Run length of each sequence under limit `h`: the first step whose
/// statistic exceeds `h`, or the sequence length with the censoring flag.
pub fn run_lengths(sequences: &[Vec<f64>], h: f64) -> Vec<(usize, bool)> {
    sequences
        .iter()
        .map(|seq| match seq.iter().position(|&l| l > h) {
            Some(i) => (i + 1, false),
            None => (seq.len(), true),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitChoice {
    pub h: f64,
    pub arl: f64,
    pub arl_below: Option<f64>,
    pub uncensored: usize,
}

/// Smallest observed statistic whose censored ARL estimate reaches `arl0`.
pub fn control_limit_search(sequences: &[Vec<f64>], arl0: f64) -> Result<LimitChoice> {
    let mut candidates: Vec<f64> = sequences.iter().flatten().copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let ok = |h: f64| censored_arl(&run_lengths(sequences, h)).is_some_and(|a| a >= arl0);
    // The estimate is nondecreasing in h until every run is censored.
    let idx = candidates.partition_point(|&h| !ok(h) && censored_arl(&run_lengths(sequences, h)).is_some());
    if idx >= candidates.len() || !ok(candidates[idx]) {
        return Err(MpcError::ArlUnreachable);
    }
    let h = candidates[idx];
    let runs = run_lengths(sequences, h);
    Ok(LimitChoice {
        h,
        arl: censored_arl(&runs).unwrap_or(f64::INFINITY),
        arl_below: idx.checked_sub(1).and_then(|i| censored_arl(&run_lengths(sequences, candidates[i]))),
        uncensored: runs.iter().filter(|r| !r.1).count(),
    })
}

fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = (n as f64 * fraction).round() as usize;
    if n_train < 2 || n - n_train < 2 {
        return Err(MpcError::InvalidInput(format!(
            "{n} in-control observations cannot be split with training fraction {fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut derive_rng(seed, tag::SPLIT, 0));
    let tuning = idx.split_off(n_train);
    Ok((idx, tuning))
}

/// Scale making the mean diagonal of the pooled score second moment one.
fn score_scale(scores: &ScoreSet) -> Result<f64> {
    let sigma = sigma_from_scores(scores)?;
    let mean_diag = sigma.data().diagonal().mean();
    if !(mean_diag > 0.0) || !mean_diag.is_finite() {
        return Err(MpcError::DegenerateSample);
    }
    Ok(1.0 / mean_diag.sqrt())
}

/// Phase I: fits the in-control model and calibrates the control limit.
pub fn phase1_calibrate(ic: &ProfileSample, cfg: &MonitorConfig) -> Result<(Chart, CalibrationReport)> {
    cfg.validate()?;
    let sample = if cfg.smooth {
        smooth_to_uniform(ic, &cfg.smoothing)?
    } else {
        ic.clone()
    };
    let (train_idx, tune_idx) = split_indices(sample.n_obs(), cfg.training_fraction, cfg.rng_seed)?;
    let train = sample.select(&train_idx)?;
    let tune = sample.select(&tune_idx)?;

    let mfpca = fit_mfpca(&train, cfg.fve_target)?;
    let raw_train = project_scores(&mfpca, &train)?;
    let scale = score_scale(&raw_train)?;
    let train_scores = raw_train.scaled(scale);
    let tune_scores = project_scores(&mfpca, &tune)?.scaled(scale);
    let (p, k) = (mfpca.n_channels(), mfpca.n_components());
    info!("MFPCA retained {k} components (fve {:.4})", mfpca.fve);

    let admm = admm_or_default(cfg, p * k);
    let pcfg = PrecisionConfig {
        ridge_grid: cfg.ridge_gamma_grid.clone(),
        cv_folds: cfg.cv_folds,
        seed: derive_seed(cfg.rng_seed, tag::PRECISION_CV, 0),
        admm: Some(admm),
        ..PrecisionConfig::default()
    };
    let precision = fit_precision(&train_scores, &pcfg)?;
    info!(
        "in-control graph: {} edges, lasso penalty {:e}",
        precision.edges().len(),
        precision.lasso_penalty
    );
    let gamma = select_gamma(
        &tune_scores,
        &precision.theta0,
        &cfg.ridge_gamma_grid,
        cfg.gamma_rate_threshold,
        cfg.gamma_subsamples,
        cfg.gamma_in_fraction,
        derive_seed(cfg.rng_seed, tag::GAMMA, 0),
    )?;
    info!("phase II ridge penalty {gamma:e}");

    let levels = cfg.sparsity_levels(p)?;
    let engine = StatEngine::new(&precision, gamma, levels.clone(), admm);
    let init: Vec<DMatrix<f64>> = (0..k).map(|c| precision.sigma0.component(c)).collect();
    let sequences: Vec<Vec<usize>> = (0..cfg.n_seq_ic)
        .map(|i| {
            let mut rng = derive_rng(cfg.rng_seed, tag::CALIBRATION, i as u64);
            (0..cfg.l_seq_ic).map(|_| rng.random_range(0..tune_scores.n_obs())).collect()
        })
        .collect();
    let refs = reference_distributions(&engine, &init, &tune_scores, &sequences, cfg)?;
    let chart = Chart {
        config: cfg.clone(),
        raw_grid: ic.grid().to_vec(),
        mfpca,
        precision,
        refs: refs.0,
        gamma,
        score_scale: scale,
        sparsity_levels: levels.clone(),
    };
    let choice = refs.1;
    let report = CalibrationReport {
        n_training: train_idx.len(),
        n_tuning: tune_idx.len(),
        n_components: k,
        fve: chart.mfpca.fve,
        score_scale: scale,
        ridge_penalty: chart.precision.ridge_penalty,
        lasso_penalty: chart.precision.lasso_penalty,
        gamma,
        sparsity_levels: levels,
        edges: chart.precision.edges(),
        control_limit: choice.h,
        arl_estimate: choice.arl,
        arl_below: choice.arl_below,
        uncensored_runs: choice.uncensored,
        reference_size: cfg.n_seq_ic * cfg.l_seq_ic,
    };
    Ok((chart, report))
}

/// Runs the calibration sequences: `D` references first, then the `Λₛ`
/// references, then the limit search on the combined statistic.
fn reference_distributions(
    engine: &StatEngine,
    init: &[DMatrix<f64>],
    scores: &ScoreSet,
    sequences: &[Vec<usize>],
    cfg: &MonitorConfig,
) -> Result<(ReferenceDistributions, LimitChoice)> {
    let rho = cfg.ewma_weight;
    let n_pairs = pair_count(engine.p);
    let n_levels = engine.levels.len();

    let d_runs: Vec<Vec<Vec<f64>>> = sequences
        .par_iter()
        .map(|seq| {
            let mut state = init.to_vec();
            seq.iter()
                .map(|&i| {
                    mewmc_update(&mut state, scores.observation(i), rho)?;
                    Ok(lower_triangle(&engine.deviation(&state)?.d))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut d_refs = vec![Vec::with_capacity(sequences.len() * cfg.l_seq_ic); n_pairs];
    for step in d_runs.iter().flatten() {
        for (r, &v) in d_refs.iter_mut().zip(step) {
            r.push(v);
        }
    }
    for r in &mut d_refs {
        r.sort_by(f64::total_cmp);
    }
    info!("D references collected");

    let lambda_runs: Vec<Vec<Vec<f64>>> = sequences
        .par_iter()
        .map(|seq| {
            let mut state = init.to_vec();
            let mut warm: Vec<Option<AdmmState>> = vec![None; n_levels];
            seq.iter()
                .map(|&i| {
                    mewmc_update(&mut state, scores.observation(i), rho)?;
                    let dev = engine.deviation(&state)?;
                    Ok(engine.sparsity_stats(&dev, &d_refs, &mut warm)?.lambda_s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut lambda_refs = vec![Vec::with_capacity(sequences.len() * cfg.l_seq_ic); n_levels];
    for step in lambda_runs.iter().flatten() {
        for (r, &v) in lambda_refs.iter_mut().zip(step) {
            r.push(v);
        }
    }
    for r in &mut lambda_refs {
        r.sort_by(f64::total_cmp);
    }
    info!("Lambda references collected");

    let combined: Vec<Vec<f64>> = lambda_runs
        .iter()
        .map(|seq| {
            seq.iter()
                .map(|ls| engine.combine(ls, &lambda_refs).map(|c| c.1))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let choice = control_limit_search(&combined, cfg.arl0)?;
    info!("control limit {:.6} (censored ARL {:.2})", choice.h, choice.arl);
    Ok((
        ReferenceDistributions {
            d_refs,
            lambda_refs,
            control_limit: choice.h,
        },
        choice,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn censored_estimator_basics() {
        assert_eq!(censored_arl(&[(5, true), (5, true)]), None);
        assert_eq!(censored_arl(&[(3, false), (7, true)]), Some(10.0));
        assert_eq!(censored_arl(&[(2, false), (4, false)]), Some(3.0));
    }

    #[test]
    fn censored_estimator_recovers_geometric_mean() {
        let q = 0.02;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut estimates = Vec::new();
        for _ in 0..500 {
            let runs: Vec<(usize, bool)> = (0..50)
                .map(|_| {
                    for t in 1..=60 {
                        if rng.random::<f64>() < q {
                            return (t, false);
                        }
                    }
                    (60, true)
                })
                .collect();
            if let Some(a) = censored_arl(&runs) {
                estimates.push(a);
            }
        }
        let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
        assert!((mean - 1.0 / q).abs() / (1.0 / q) < 0.1, "mean {mean}");
    }

    #[test]
    fn limit_search_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let seqs: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..50).map(|_| rng.random::<f64>().powi(3) * 10.0).collect())
            .collect();
        let arl0 = 20.0;
        let c = control_limit_search(&seqs, arl0).unwrap();
        assert!(c.arl >= arl0);
        assert!(c.arl_below.unwrap() < arl0);
        // Exhaustive oracle over all candidates.
        let mut cands: Vec<f64> = seqs.iter().flatten().copied().collect();
        cands.sort_by(f64::total_cmp);
        let first = cands
            .iter()
            .copied()
            .find(|&h| censored_arl(&run_lengths(&seqs, h)).is_some_and(|a| a >= arl0))
            .unwrap();
        assert_eq!(c.h, first);
    }

    #[test]
    fn limit_search_reports_unreachable_target() {
        let seqs = vec![vec![1.0, 2.0, 3.0]; 4];
        assert!(matches!(control_limit_search(&seqs, 1e6), Err(MpcError::ArlUnreachable)));
    }
}
