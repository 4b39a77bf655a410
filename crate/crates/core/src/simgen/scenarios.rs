use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::graphmodel::BlockMatrix;
use crate::linalg::logdet_pd;
use crate::seeding::{derive_rng, tag};

/// How far the log-determinant may fall below the in-control one when the
/// largest feasible shift is searched.
pub const LOGDET_MARGIN: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// New edges: zero off-diagonal blocks set to `δ′A`.
    I,
    /// Weakened edges: nonzero off-diagonal blocks scaled by `1 − δ″`.
    II,
    /// Diagonal blocks scaled by `1 + δ″`.
    III,
    /// Diagonal blocks scaled by `1 − δ‴`.
    IV,
}

impl std::str::FromStr for Scenario {
    type Err = MpcError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            "IV" | "4" => Ok(Self::IV),
            _ => Err(MpcError::InvalidInput(format!("unknown scenario '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_el: usize,
    /// Severity level 0..=4.
    pub severity: u8,
    pub seed: u64,
    /// Blocks to shift; drawn at random when empty.
    #[serde(default)]
    pub selected_blocks: Vec<(usize, usize)>,
}

/// A shifted precision matrix with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub theta1: BlockMatrix,
    pub spec: ScenarioSpec,
    pub delta: f64,
    pub delta_max: f64,
}

fn eligible(theta0: &BlockMatrix, scenario: Scenario) -> Vec<(usize, usize)> {
    let p = theta0.p();
    let mut out = Vec::new();
    match scenario {
        Scenario::I | Scenario::II => {
            for j in 0..p {
                for l in 0..j {
                    let zero = theta0.block_norm(j, l) == 0.0;
                    if zero == (scenario == Scenario::I) {
                        out.push((j, l));
                    }
                }
            }
        }
        Scenario::III | Scenario::IV => out.extend((0..p).map(|j| (j, j))),
    }
    out
}

fn shifted(theta0: &BlockMatrix, scenario: Scenario, blocks: &[(usize, usize)], base: &DMatrix<f64>, delta: f64) -> BlockMatrix {
    let mut out = theta0.clone();
    for &(j, l) in blocks {
        let b = match scenario {
            Scenario::I => base * delta,
            Scenario::II => theta0.block(j, l) * (1.0 - delta),
            Scenario::III => theta0.block(j, l) * (1.0 + delta),
            Scenario::IV => theta0.block(j, l) * (1.0 - delta),
        };
        out.set_block(j, l, &b);
    }
    out
}

/// Largest `δ` keeping the shifted matrix PD with log-determinant at least
/// `log|Θ₀| − LOGDET_MARGIN`.
fn delta_max(theta0: &BlockMatrix, scenario: Scenario, blocks: &[(usize, usize)], base: &DMatrix<f64>) -> Result<f64> {
    let floor = logdet_pd(theta0.data())
        .ok_or_else(|| MpcError::NotPositiveDefinite("in-control precision".into()))?
        - LOGDET_MARGIN;
    let feasible = |d: f64| {
        logdet_pd(shifted(theta0, scenario, blocks, base, d).data()).is_some_and(|v| v >= floor)
    };
    let mut hi = 1.0;
    while feasible(hi) {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(MpcError::Infeasible("shift stays feasible for every magnitude".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Out-of-control precision for a scenario and severity.
pub fn apply_scenario(theta0: &BlockMatrix, spec: &ScenarioSpec, base: &DMatrix<f64>) -> Result<ScenarioOutcome> {
    if spec.severity > 4 {
        return Err(MpcError::InvalidInput(format!("severity must be 0..=4, got {}", spec.severity)));
    }
    if base.nrows() != theta0.k() || base.ncols() != theta0.k() {
        return Err(MpcError::DimensionMismatch("base matrix does not match the block size".into()));
    }
    let pool = eligible(theta0, spec.scenario);
    let blocks: Vec<(usize, usize)> = if spec.selected_blocks.is_empty() {
        if spec.n_el == 0 || spec.n_el > pool.len() {
            return Err(MpcError::Infeasible(format!(
                "scenario {:?} needs {} eligible blocks, only {} available",
                spec.scenario,
                spec.n_el,
                pool.len()
            )));
        }
        let mut pool = pool;
        pool.shuffle(&mut derive_rng(spec.seed, tag::SCENARIO, 0));
        let mut chosen = pool[..spec.n_el].to_vec();
        chosen.sort_unstable();
        chosen
    } else {
        let norm: Vec<(usize, usize)> = spec
            .selected_blocks
            .iter()
            .map(|&(j, l)| if l <= j { (j, l) } else { (l, j) })
            .collect();
        if let Some(b) = norm.iter().find(|b| !pool.contains(b)) {
            return Err(MpcError::Infeasible(format!("block {b:?} is not eligible for scenario {:?}", spec.scenario)));
        }
        norm
    };
    let dmax = match spec.scenario {
        Scenario::II | Scenario::III => 1.0,
        Scenario::I | Scenario::IV => delta_max(theta0, spec.scenario, &blocks, base)?,
    };
    let delta = dmax * spec.severity as f64 / 4.0;
    let theta1 = if spec.severity == 0 {
        theta0.clone()
    } else {
        shifted(theta0, spec.scenario, &blocks, base, delta)
    };
    if theta1.data().clone().cholesky().is_none() {
        return Err(MpcError::NotPositiveDefinite(format!(
            "scenario {:?} at severity {} yields an indefinite precision",
            spec.scenario, spec.severity
        )));
    }
    Ok(ScenarioOutcome {
        theta1,
        spec: ScenarioSpec {
            n_el: blocks.len(),
            selected_blocks: blocks,
            ..spec.clone()
        },
        delta,
        delta_max: dmax,
    })
}
