use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use crate::error::{MpcError, Result};
use crate::fda::ScoreSet;
use crate::graphmodel::{
    log_likelihood, pair_at, pair_count, pair_index, ridge_precision, sigma_from_scores, BlockMatrix, PairSet,
};
use crate::seeding::{derive_rng, tag};

/// `S ← (1 − ρ) S + ρ ξ ξᵀ` for each component; `scores` is `K × p` row-major.
pub fn mewmc_update(state: &mut [DMatrix<f64>], scores: &[f64], rho: f64) -> Result<()> {
    let k = state.len();
    let p = state.first().map_or(0, |m| m.nrows());
    if scores.len() != k * p {
        return Err(MpcError::DimensionMismatch(format!(
            "expected {k} x {p} scores, got {}",
            scores.len()
        )));
    }
    for (c, s) in state.iter_mut().enumerate() {
        let x = &scores[c * p..(c + 1) * p];
        for a in 0..p {
            for b in 0..=a {
                let v = (1.0 - rho) * s[(a, b)] + rho * x[a] * x[b];
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
    }
    Ok(())
}

/// `(1 + #{refs ≥ observed}) / (1 + n)` for ascending `sorted_refs`.
pub fn empirical_pvalue(sorted_refs: &[f64], observed: f64) -> f64 {
    let below = sorted_refs.partition_point(|&r| r < observed);
    let at_or_above = sorted_refs.len() - below;
    (1 + at_or_above) as f64 / (1 + sorted_refs.len()) as f64
}

/// The `s` pairs with the smallest p-values. Ties go to the larger `D`, then
/// to the lexicographically smaller `(j, l)`.
///
/// `pvalues` and `d` are indexed by [`pair_index`].
pub fn select_index_set(pvalues: &[f64], d: &[f64], s: usize) -> Result<PairSet> {
    Ok(ranked_pairs(pvalues, d, s)?.into_iter().collect())
}

/// Pair ordering used by [`select_index_set`]; the first `s` entries.
pub fn ranked_pairs(pvalues: &[f64], d: &[f64], s: usize) -> Result<Vec<(usize, usize)>> {
    let m = pvalues.len();
    if d.len() != m {
        return Err(MpcError::DimensionMismatch("p-values and D differ in length".into()));
    }
    if s == 0 || s > m {
        return Err(MpcError::InvalidInput(format!("sparsity level {s} outside 1..={m}")));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        pvalues[a]
            .total_cmp(&pvalues[b])
            .then(d[b].total_cmp(&d[a]))
            .then(pair_at(a).cmp(&pair_at(b)))
    });
    Ok(order.into_iter().take(s).map(pair_at).collect())
}

/// `ℓ(Θ̂₁ₛ) − ℓ(Θ̂₀*)`.
pub fn lrt_statistic(theta1s: &BlockMatrix, theta0_star: &BlockMatrix, sn_perm: &DMatrix<f64>) -> Result<f64> {
    Ok(log_likelihood(theta1s, sn_perm)? - log_likelihood(theta0_star, sn_perm)?)
}

/// `−2 Σ log p`.
pub fn fisher_combine(pvalues: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &p in pvalues {
        if !(p > 0.0 && p <= 1.0) {
            return Err(MpcError::InvalidInput(format!("p-value {p} outside (0, 1]")));
        }
        acc += p.ln();
    }
    Ok(-2.0 * acc)
}

/// Lower-triangle `D` values in [`pair_index`] order.
pub fn lower_triangle(m: &DMatrix<f64>) -> Vec<f64> {
    let p = m.nrows();
    let mut out = vec![0.0; pair_count(p)];
    for j in 0..p {
        for l in 0..=j {
            out[pair_index(j, l)] = m[(j, l)];
        }
    }
    out
}

/// Random in/out splits used by [`select_gamma`].
pub fn gamma_subsamples(n: usize, count: usize, in_fraction: f64, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n_in = ((n as f64 * in_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    (0..count)
        .map(|b| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut derive_rng(seed, tag::GAMMA, b as u64));
            let out = idx.split_off(n_in);
            (idx, out)
        })
        .collect()
}

/// Mean held-out negative log-likelihood of the `Θ̂₀`-targeted ridge for
/// each grid value.
pub fn gamma_nll_curve(
    tuning: &ScoreSet,
    theta0: &BlockMatrix,
    grid: &[f64],
    subsamples: &[(Vec<usize>, Vec<usize>)],
) -> Result<Vec<f64>> {
    let splits: Vec<(BlockMatrix, BlockMatrix)> = subsamples
        .iter()
        .map(|(i, o)| Ok((sigma_from_scores(&tuning.select(i))?, sigma_from_scores(&tuning.select(o))?)))
        .collect::<Result<_>>()?;
    grid.iter()
        .map(|&g| {
            let mut total = 0.0;
            for (s_in, s_out) in &splits {
                let th = ridge_precision(s_in, theta0, g)?;
                total -= log_likelihood(&th, s_out.data())?;
            }
            Ok(total / splits.len() as f64)
        })
        .collect()
}

/// Smallest grid value at which the per-unit-γ improvement of the curve
/// falls below `threshold`; the grid maximum when none does.
pub fn gamma_from_curve(grid: &[f64], nll: &[f64], threshold: f64) -> Result<f64> {
    if grid.is_empty() || grid.len() != nll.len() {
        return Err(MpcError::InvalidInput("empty or mismatched gamma grid".into()));
    }
    for i in 0..grid.len() - 1 {
        let rate = (nll[i] - nll[i + 1]) / (grid[i + 1] - grid[i]);
        if rate < threshold {
            return Ok(grid[i]);
        }
    }
    warn!("no ridge penalty met the improvement threshold; using the grid maximum");
    Ok(grid[grid.len() - 1])
}

/// Ridge penalty for Phase II, chosen on the tuning scores.
pub fn select_gamma(
    tuning: &ScoreSet,
    theta0: &BlockMatrix,
    grid: &[f64],
    threshold: f64,
    count: usize,
    in_fraction: f64,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(MpcError::InvalidInput("empty gamma grid".into()));
    }
    let subs = gamma_subsamples(tuning.n_obs(), count, in_fraction, seed);
    let curve = gamma_nll_curve(tuning, theta0, grid, &subs)?;
    gamma_from_curve(grid, &curve, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mewmc_examples() {
        let omega = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut s = vec![omega.clone()];
        mewmc_update(&mut s, &[1.0, -2.0], 1.0).unwrap();
        assert_eq!(s[0], DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 4.0]));
        let mut s = vec![omega.clone()];
        for _ in 0..7 {
            mewmc_update(&mut s, &[0.0, 0.0], 0.1).unwrap();
        }
        assert!((&s[0] - &omega * 0.9f64.powi(7)).abs().max() < 1e-15);
        assert!(mewmc_update(&mut s, &[0.0], 0.1).is_err());
    }

    #[test]
    fn pvalue_examples() {
        let refs = [1.0, 2.0, 3.0];
        assert_eq!(empirical_pvalue(&refs, 2.0), 0.75);
        assert_eq!(empirical_pvalue(&refs, 10.0), 0.25);
        assert_eq!(empirical_pvalue(&refs, -1.0), 1.0);
    }

    #[test]
    fn index_set_examples() {
        // p = 2: pairs (0,0), (1,0), (1,1)
        let pv = [0.5, 0.01, 0.3];
        let d = [0.0; 3];
        let s1 = select_index_set(&pv, &d, 1).unwrap();
        assert_eq!(s1.iter().collect::<Vec<_>>(), vec![(1, 0)]);
        assert_eq!(select_index_set(&pv, &d, 3).unwrap(), PairSet::all(2));
        assert!(select_index_set(&pv, &d, 4).is_err());
        // ties broken by larger D
        let pv = [0.2, 0.2, 0.2];
        let d = [0.1, 0.3, 0.2];
        assert_eq!(ranked_pairs(&pv, &d, 3).unwrap(), vec![(1, 0), (1, 1), (0, 0)]);
        // then by pair order
        let d = [0.0; 3];
        assert_eq!(ranked_pairs(&pv, &d, 3).unwrap(), vec![(0, 0), (1, 0), (1, 1)]);
    }

    #[test]
    fn index_set_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = 6;
        let m = pair_count(p);
        for _ in 0..50 {
            let pv: Vec<f64> = (0..m).map(|_| (rng.random_range(1..20) as f64) / 20.0).collect();
            let d: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut all: Vec<(f64, f64, usize, usize)> = Vec::new();
            for j in 0..p {
                for l in 0..=j {
                    let i = pair_index(j, l);
                    all.push((pv[i], -d[i], j, l));
                }
            }
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<(usize, usize)> = all.iter().take(3).map(|t| (t.2, t.3)).collect();
            assert_eq!(ranked_pairs(&pv, &d, 3).unwrap(), expected);
            // nested across s
            for s in 1..m {
                assert!(select_index_set(&pv, &d, s)
                    .unwrap()
                    .is_subset(&select_index_set(&pv, &d, s + 1).unwrap()));
            }
        }
    }

    #[test]
    fn fisher_examples() {
        assert_eq!(fisher_combine(&[1.0, 1.0]).unwrap(), 0.0);
        assert!((fisher_combine(&[0.5, 0.1]).unwrap() - 5.991_464_547_107_98).abs() < 1e-12);
        assert!((fisher_combine(&[(-1f64).exp()]).unwrap() - 2.0).abs() < 1e-15);
        assert!(fisher_combine(&[0.0]).is_err());
    }

    #[test]
    fn lrt_zero_for_identical_inputs() {
        let th = BlockMatrix::identity(2, 2);
        let s = DMatrix::identity(4, 4) * 0.7;
        assert_eq!(lrt_statistic(&th, &th, &s).unwrap(), 0.0);
    }

    #[test]
    fn lrt_matches_determinant_oracle() {
        let s = DMatrix::from_row_slice(2, 2, &[1.1, 0.3, 0.3, 0.8]);
        let a = BlockMatrix::new(2, 1, DMatrix::from_row_slice(2, 2, &[1.0, -0.2, -0.2, 1.4])).unwrap();
        let b = BlockMatrix::new(2, 1, DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 1.2])).unwrap();
        let ll = |t: &DMatrix<f64>| t.determinant().ln() - (&s * t).trace();
        let expected = ll(a.data()) - ll(b.data());
        assert!((lrt_statistic(&a, &b, &s).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gamma_rule_edge_cases() {
        let grid = [0.01, 0.1, 1.0, 10.0];
        assert_eq!(gamma_from_curve(&grid, &[1.0; 4], 1e-3).unwrap(), 0.01);
        assert_eq!(gamma_from_curve(&grid, &[4.0, 3.0, 2.0, 1.0], f64::INFINITY).unwrap(), 0.01);
        // steep then flat
        let nll = [5.0, 4.0, 3.99999, 3.99998];
        assert_eq!(gamma_from_curve(&grid, &nll, 1e-3).unwrap(), 0.1);
        // always improving fast
        let nll = [100.0, 90.0, 50.0, 0.0];
        assert_eq!(gamma_from_curve(&grid, &nll, 1e-3).unwrap(), 10.0);
    }
}
