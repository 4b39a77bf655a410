use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graphmodel::BlockMatrix;
use crate::monitor::{censored_arl, Chart};
use crate::seeding::{derive_rng, tag};

use super::generate::ProfileGenerator;
use super::models::SimModelSpec;
use super::scenarios::ScenarioOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seq_id: usize,
    pub rl: usize,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlSettings {
    pub model: SimModelSpec,
    pub scenario: Option<ScenarioOutcome>,
    pub n_seq: usize,
    pub l_seq: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlReport {
    pub settings: ArlSettings,
    /// Total run length over uncensored runs; `l_seq` when every run is
    /// censored, in which case `arl_lower_bound` is set.
    pub arl: f64,
    pub arl_lower_bound: bool,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sd_rl: f64,
    pub uncensored: usize,
    pub runs: Vec<RunRecord>,
}

impl ArlReport {
    pub fn from_runs(settings: ArlSettings, runs: Vec<RunRecord>) -> Self {
        let pairs: Vec<(usize, bool)> = runs.iter().map(|r| (r.rl, r.censored)).collect();
        let uncensored = runs.iter().filter(|r| !r.censored).count();
        let (arl, lower) = match censored_arl(&pairs) {
            Some(a) => (a, false),
            None => (settings.l_seq as f64, true),
        };
        let n = runs.len().max(1) as f64;
        let mean = runs.iter().map(|r| r.rl as f64).sum::<f64>() / n;
        let var = if runs.len() > 1 {
            runs.iter().map(|r| (r.rl as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let sd = var.sqrt();
        let half = 1.96 * sd / n.sqrt();
        Self {
            settings,
            arl,
            arl_lower_bound: lower,
            ci_low: arl - half,
            ci_high: arl + half,
            sd_rl: sd,
            uncensored,
            runs,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::MpcError::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| crate::MpcError::Format(e.to_string()))
    }
}

/// Runs `n_seq` Phase II sequences drawn from `theta1` and records when the
/// chart first signals.
pub fn evaluate_arl(
    chart: &Chart,
    theta1: &BlockMatrix,
    model: &SimModelSpec,
    n_seq: usize,
    l_seq: usize,
    seed: u64,
) -> Result<ArlReport> {
    let gen = ProfileGenerator::new(theta1, model)?;
    let runs = (0..n_seq)
        .into_par_iter()
        .map(|i| -> Result<RunRecord> {
            let mut rng = derive_rng(seed, tag::ARL, i as u64);
            let mut session = chart.session()?;
            for t in 1..=l_seq {
                let obs = gen.observation(&mut rng);
                if session.step_raw(&obs)?.signal {
                    return Ok(RunRecord {
                        seq_id: i,
                        rl: t,
                        censored: false,
                    });
                }
            }
            Ok(RunRecord {
                seq_id: i,
                rl: l_seq,
                censored: true,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let settings = ArlSettings {
        model: model.clone(),
        scenario: None,
        n_seq,
        l_seq,
        seed,
    };
    Ok(ArlReport::from_runs(settings, runs))
}
