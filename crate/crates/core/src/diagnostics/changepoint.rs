use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::fda::ScoreSet;
use crate::graphmodel::{log_likelihood, ridge_precision, BlockMatrix};

/// Shortest post-change segment whose ridge fit is scored.
pub const MIN_POST_SEGMENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePoint {
    /// Last step of the pre-change segment.
    pub tau: usize,
    /// `(u, ℓᶜᵖ(u))` for every scored candidate.
    pub profile: Vec<(usize, f64)>,
}

fn outer_components(scores: &ScoreSet, obs: usize) -> Vec<DMatrix<f64>> {
    let p = scores.n_channels();
    (0..scores.n_components())
        .map(|c| {
            let v = scores.vector(obs, c);
            DMatrix::from_fn(p, p, |a, b| v[a] * v[b])
        })
        .collect()
}

/// Penalized-likelihood change point for steps `1..=m` of `scores`. The
/// pre-change term uses `theta0_star`, the post-change term a ridge fit of
/// the segment's second moments toward `theta0`.
pub fn estimate_change_point(
    scores: &ScoreSet,
    theta0: &BlockMatrix,
    theta0_star: &BlockMatrix,
    gamma: f64,
) -> Result<ChangePoint> {
    let m = scores.n_obs();
    if m < 2 {
        return Err(MpcError::InvalidInput(format!("change point needs at least 2 steps, got {m}")));
    }
    theta0.same_shape(theta0_star)?;
    if scores.n_channels() != theta0.p() || scores.n_components() != theta0.k() {
        return Err(MpcError::DimensionMismatch("scores and precision estimates disagree in shape".into()));
    }
    let (p, k) = (theta0.p(), theta0.k());
    // prefix[u] = Σ_{i<u} ξξᵀ per component
    let mut prefix: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(m + 1);
    prefix.push(vec![DMatrix::zeros(p, p); k]);
    for i in 0..m {
        let next: Vec<DMatrix<f64>> = prefix[i].iter().zip(outer_components(scores, i)).map(|(a, b)| a + b).collect();
        prefix.push(next);
    }
    let total = &prefix[m];
    let eligible: Vec<usize> = (1..m).filter(|&u| m - u >= MIN_POST_SEGMENT).collect();
    let candidates = if eligible.is_empty() { (1..m).collect() } else { eligible };
    let mut profile = Vec::with_capacity(candidates.len());
    for u in candidates {
        let (nb, na) = (u as f64, (m - u) as f64);
        let before: Vec<DMatrix<f64>> = prefix[u].iter().map(|s| s / nb).collect();
        let after: Vec<DMatrix<f64>> = total.iter().zip(&prefix[u]).map(|(t, s)| (t - s) / na).collect();
        let sb = BlockMatrix::from_components(&before)?;
        let sa = BlockMatrix::from_components(&after)?;
        let theta_u = ridge_precision(&sa, theta0, gamma)?;
        let ll = nb * log_likelihood(theta0_star, sb.data())? + na * log_likelihood(&theta_u, sa.data())?;
        profile.push((u, ll));
    }
    let tau = profile
        .iter()
        .fold(None::<(usize, f64)>, |best, &(u, ll)| match best {
            Some((_, b)) if ll <= b => best,
            _ => Some((u, ll)),
        })
        .map(|(u, _)| u)
        .expect("at least one candidate");
    Ok(ChangePoint { tau, profile })
}
