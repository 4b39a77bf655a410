use crate::error::{MpcError, Result};
use crate::graphmodel::pair_at;

/// Benjamini–Hochberg step-up rule: with `p₍₁₎ ≤ … ≤ p₍ₘ₎`, find the largest
/// `k` with `p₍ₖ₎ ≤ k·q/m` and reject every hypothesis with `p ≤ p₍ₖ₎`.
pub fn bh_reject(pvalues: &[f64], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(MpcError::InvalidInput(format!("FDR level must lie in (0, 1), got {q}")));
    }
    if pvalues.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(MpcError::InvalidInput("p-values must lie in [0, 1]".into()));
    }
    let m = pvalues.len();
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cutoff = (1..=m)
        .rev()
        .find(|&k| sorted[k - 1] <= k as f64 * q / m as f64)
        .map(|k| sorted[k - 1]);
    Ok(match cutoff {
        Some(c) => pvalues.iter().map(|&p| p <= c).collect(),
        None => vec![false; m],
    })
}

/// Pairs `(j, l)`, `l ≤ j`, declared shifted; `pvalues` is indexed by
/// `pair_index`.
pub fn bh_select(pvalues: &[f64], q: f64) -> Result<Vec<(usize, usize)>> {
    Ok(bh_reject(pvalues, q)?
        .into_iter()
        .enumerate()
        .filter(|&(_, r)| r)
        .map(|(i, _)| pair_at(i))
        .collect())
}
