//! Multichannel functional PCA on a shared grid.
//!
//! All inner products are plain sums over grid points, so eigenfunctions are
//! unit vectors in the Euclidean sense and scores are `Σ_h (x − μ)(t_h) v(t_h)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::sample::ProfileSample;
use crate::error::{MpcError, Result};
use crate::linalg::{serde_matrix, sorted_eigen};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfpcaModel {
    pub grid: Vec<f64>,
    /// `p × n` per-channel mean functions.
    #[serde(with = "serde_matrix")]
    pub mean: DMatrix<f64>,
    /// `K × n`, one retained eigenfunction per row.
    #[serde(with = "serde_matrix")]
    pub eigenfunctions: DMatrix<f64>,
    /// Retained eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Fraction of total variance explained by the retained components.
    pub fve: f64,
    /// Sum of all eigenvalues, equal to the trace of the pooled covariance.
    pub total_variance: f64,
    /// `n × n` pooled covariance.
    #[serde(with = "serde_matrix")]
    pub pooled_cov: DMatrix<f64>,
}

impl MfpcaModel {
    pub fn n_components(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_channels(&self) -> usize {
        self.mean.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    /// Scores of a single observation given as a `p × n` row-major slice;
    /// the result is `K × p` row-major.
    pub fn project_observation(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (p, n, k) = (self.n_channels(), self.n_points(), self.n_components());
        if obs.len() != p * n {
            return Err(MpcError::DimensionMismatch(format!(
                "observation has {} values, model expects {p} channels x {n} points",
                obs.len()
            )));
        }
        let mut out = vec![0.0; k * p];
        for j in 0..p {
            let curve = &obs[j * n..(j + 1) * n];
            for c in 0..k {
                let mut acc = 0.0;
                for h in 0..n {
                    acc += (curve[h] - self.mean[(j, h)]) * self.eigenfunctions[(c, h)];
                }
                out[c * p + j] = acc;
            }
        }
        Ok(out)
    }
}

/// Scores `ξ[i, k, j]` for observation `i`, component `k`, channel `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    n_obs: usize,
    n_components: usize,
    n_channels: usize,
    values: Vec<f64>,
}

impl ScoreSet {
    pub fn new(n_obs: usize, n_components: usize, n_channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_obs * n_components * n_channels {
            return Err(MpcError::DimensionMismatch(format!(
                "score tensor {n_obs}x{n_components}x{n_channels} needs {} values, got {}",
                n_obs * n_components * n_channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::InvalidInput("scores must be finite".into()));
        }
        Ok(Self {
            n_obs,
            n_components,
            n_channels,
            values,
        })
    }

    /// Stacks per-observation `K × p` row-major score blocks.
    pub fn from_observations(n_components: usize, n_channels: usize, obs: &[Vec<f64>]) -> Result<Self> {
        let values: Vec<f64> = obs.iter().flatten().copied().collect();
        Self::new(obs.len(), n_components, n_channels, values)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn get(&self, obs: usize, component: usize, channel: usize) -> f64 {
        self.values[(obs * self.n_components + component) * self.n_channels + channel]
    }

    /// The `p`-vector `ξ_{i,k}`.
    pub fn vector(&self, obs: usize, component: usize) -> &[f64] {
        let start = (obs * self.n_components + component) * self.n_channels;
        &self.values[start..start + self.n_channels]
    }

    /// `K × p` row-major block of one observation.
    pub fn observation(&self, obs: usize) -> &[f64] {
        let len = self.n_components * self.n_channels;
        &self.values[obs * len..(obs + 1) * len]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let len = self.n_components * self.n_channels;
        let mut values = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            values.extend_from_slice(self.observation(i));
        }
        Self {
            n_obs: indices.len(),
            n_components: self.n_components,
            n_channels: self.n_channels,
            values,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Fits the multichannel FPCA, retaining the fewest components whose
/// cumulative share of the eigenvalue sum reaches `fve_target`.
pub fn fit_mfpca(sample: &ProfileSample, fve_target: f64) -> Result<MfpcaModel> {
    if !(fve_target > 0.0 && fve_target < 1.0) {
        return Err(MpcError::InvalidInput(format!(
            "fve_target must lie in (0, 1), got {fve_target}"
        )));
    }
    let (big_n, p, n) = (sample.n_obs(), sample.n_channels(), sample.n_points());
    if big_n < 2 {
        return Err(MpcError::InvalidInput("MFPCA needs at least two observations".into()));
    }
    let mut mean = DMatrix::zeros(p, n);
    for i in 0..big_n {
        for j in 0..p {
            for (h, v) in sample.curve(i, j).iter().enumerate() {
                mean[(j, h)] += v;
            }
        }
    }
    mean /= big_n as f64;

    // Centered curves as columns of an n × (N p) matrix; Ĉ = X Xᵀ / N.
    let mut centered = DMatrix::zeros(n, big_n * p);
    for i in 0..big_n {
        for j in 0..p {
            let col = i * p + j;
            for (h, v) in sample.curve(i, j).iter().enumerate() {
                centered[(h, col)] = v - mean[(j, h)];
            }
        }
    }
    let mut pooled_cov = &centered * centered.transpose() / big_n as f64;
    crate::linalg::symmetrize(&mut pooled_cov);

    let trace = pooled_cov.trace();
    let scale = pooled_cov.abs().max();
    if !(trace > 1e-12 * scale.max(1e-300)) || trace <= f64::MIN_POSITIVE {
        return Err(MpcError::DegenerateSample);
    }
    let (values, vectors) = sorted_eigen(&pooled_cov);
    let total: f64 = values.iter().sum();
    let positive_total: f64 = values.iter().map(|v| v.max(0.0)).sum();

    let mut cumulative = 0.0;
    let mut k = 0;
    for (idx, &v) in values.iter().enumerate() {
        cumulative += v.max(0.0);
        k = idx + 1;
        if cumulative / positive_total >= fve_target {
            break;
        }
    }
    let floor = 1e-12 * values[0];
    if values[k - 1] <= floor {
        // Tail of numerically-zero eigenvalues; keep only positive ones.
        k = values.iter().take_while(|&&v| v > floor).count();
        if k == 0 {
            return Err(MpcError::DegenerateSample);
        }
    }

    let mut eigenfunctions = DMatrix::zeros(k, n);
    for c in 0..k {
        let col = vectors.column(c);
        let mut pivot = 0;
        for h in 1..n {
            if col[h].abs() > col[pivot].abs() {
                pivot = h;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for h in 0..n {
            eigenfunctions[(c, h)] = sign * col[h];
        }
    }
    let retained: Vec<f64> = values.iter().take(k).copied().collect();
    let fve = retained.iter().sum::<f64>() / positive_total;

    Ok(MfpcaModel {
        grid: sample.grid().to_vec(),
        mean,
        eigenfunctions,
        eigenvalues: retained,
        fve,
        total_variance: total,
        pooled_cov,
    })
}

/// Projects every observation of `sample` onto the retained eigenfunctions.
pub fn project_scores(model: &MfpcaModel, sample: &ProfileSample) -> Result<ScoreSet> {
    check_grid(model, sample.grid())?;
    if sample.n_channels() != model.n_channels() {
        return Err(MpcError::DimensionMismatch(format!(
            "sample has {} channels, model has {}",
            sample.n_channels(),
            model.n_channels()
        )));
    }
    let mut values = Vec::with_capacity(sample.n_obs() * model.n_components() * model.n_channels());
    for i in 0..sample.n_obs() {
        values.extend(model.project_observation(sample.observation(i))?);
    }
    ScoreSet::new(sample.n_obs(), model.n_components(), model.n_channels(), values)
}

pub(crate) fn check_grid(model: &MfpcaModel, grid: &[f64]) -> Result<()> {
    let same = grid.len() == model.grid.len()
        && grid.iter().zip(&model.grid).all(|(a, b)| (a - b).abs() <= 1e-12);
    if same {
        Ok(())
    } else {
        Err(MpcError::DimensionMismatch(
            "sample grid differs from the grid used to fit the MFPCA".into(),
        ))
    }
}

/// Uncentered second moments `Ω̂_k = (1/N) Σ_i ξ_{i,k} ξ_{i,k}ᵀ`.
pub fn score_covariance(scores: &ScoreSet) -> Vec<DMatrix<f64>> {
    let (big_n, k, p) = (scores.n_obs(), scores.n_components(), scores.n_channels());
    let mut out = vec![DMatrix::zeros(p, p); k];
    if big_n == 0 {
        return out;
    }
    for i in 0..big_n {
        for (c, omega) in out.iter_mut().enumerate() {
            let x = scores.vector(i, c);
            for a in 0..p {
                for b in 0..=a {
                    omega[(a, b)] += x[a] * x[b];
                }
            }
        }
    }
    for omega in &mut out {
        for a in 0..p {
            for b in 0..=a {
                let v = omega[(a, b)] / big_n as f64;
                omega[(a, b)] = v;
                omega[(b, a)] = v;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::sample::uniform_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_sample(n_obs: usize, p: usize, n: usize, seed: u64) -> ProfileSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = uniform_grid(n);
        let mut values = Vec::new();
        for _ in 0..n_obs {
            for j in 0..p {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                for &t in &grid {
                    let e: f64 = rng.sample(StandardNormal);
                    values.push(a * (t * 6.0).sin() + b * t + 0.1 * e + j as f64);
                }
            }
        }
        ProfileSample::new(n_obs, p, grid, values).unwrap()
    }

    #[test]
    fn eigenfunctions_orthonormal_and_variance_decomposes() {
        let sample = random_sample(60, 3, 25, 1);
        let model = fit_mfpca(&sample, 0.999).unwrap();
        let gram = &model.eigenfunctions * model.eigenfunctions.transpose();
        let k = model.n_components();
        assert!((gram - DMatrix::identity(k, k)).abs().max() < 1e-10);
        assert!((model.total_variance - model.pooled_cov.trace()).abs() < 1e-8);
        assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!(model.fve >= 0.999);
        assert!(crate::linalg::max_asymmetry(&model.pooled_cov) < 1e-10);
        assert!(crate::linalg::min_eigenvalue(&model.pooled_cov) > -1e-10);
    }

    #[test]
    fn known_factor_is_recovered() {
        let n = 30;
        let grid = uniform_grid(n);
        let raw: Vec<f64> = grid.iter().map(|t| (3.0 * t).cos() + t).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let v: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n_obs, p) = (4000, 2);
        let mut values = Vec::new();
        for _ in 0..n_obs {
            for _ in 0..p {
                let xi: f64 = rng.sample(StandardNormal);
                values.extend(v.iter().map(|vh| 2.0 * xi * vh));
            }
        }
        let sample = ProfileSample::new(n_obs, p, grid, values).unwrap();
        let model = fit_mfpca(&sample, 0.5).unwrap();
        assert_eq!(model.n_components(), 1);
        let dot: f64 = model.eigenfunctions.row(0).iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-10);
        // p · Var(2ξ) = 2 · 4
        assert!((model.eigenvalues[0] - 8.0).abs() < 0.5, "{}", model.eigenvalues[0]);
    }

    #[test]
    fn single_channel_reduces_to_plain_fpca() {
        let sample = random_sample(40, 1, 20, 9);
        let model = fit_mfpca(&sample, 0.9).unwrap();
        // Independent route: covariance of the single channel via its own loop.
        let n = 20;
        let mut mean = vec![0.0; n];
        for i in 0..40 {
            for h in 0..n {
                mean[h] += sample.curve(i, 0)[h] / 40.0;
            }
        }
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..40 {
            let c = sample.curve(i, 0);
            for a in 0..n {
                for b in 0..n {
                    cov[(a, b)] += (c[a] - mean[a]) * (c[b] - mean[b]) / 40.0;
                }
            }
        }
        assert!((cov - &model.pooled_cov).abs().max() < 1e-12);
    }

    #[test]
    fn projection_properties() {
        let sample = random_sample(30, 2, 15, 5);
        let model = fit_mfpca(&sample, 0.95).unwrap();
        let (p, n, k) = (2, 15, model.n_components());

        let mut at_mean = Vec::new();
        for j in 0..p {
            at_mean.extend(model.mean.row(j).iter());
        }
        let s = model.project_observation(&at_mean).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-12));

        let mut bumped = at_mean.clone();
        for h in 0..n {
            bumped[h] += model.eigenfunctions[(0, h)];
        }
        let s = model.project_observation(&bumped).unwrap();
        for c in 0..k {
            for j in 0..p {
                let expected = if c == 0 && j == 0 { 1.0 } else { 0.0 };
                assert!((s[c * p + j] - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn score_covariance_matches_double_loop() {
        let sample = random_sample(25, 3, 12, 11);
        let model = fit_mfpca(&sample, 0.95).unwrap();
        let scores = project_scores(&model, &sample).unwrap();
        let omegas = score_covariance(&scores);
        let (p, n) = (3, 12);
        for (k, omega) in omegas.iter().enumerate() {
            for j in 0..p {
                for q in 0..p {
                    let mut acc = 0.0;
                    for i in 0..25 {
                        let mut sj = 0.0;
                        let mut sq = 0.0;
                        for h in 0..n {
                            sj += (sample.curve(i, j)[h] - model.mean[(j, h)]) * model.eigenfunctions[(k, h)];
                            sq += (sample.curve(i, q)[h] - model.mean[(q, h)]) * model.eigenfunctions[(k, h)];
                        }
                        acc += sj * sq;
                    }
                    assert!((omega[(j, q)] - acc / 25.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn reconstruction_in_span_is_exact() {
        let n = 20;
        let grid = uniform_grid(n);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f1: Vec<f64> = grid.iter().map(|t| (2.0 * t).sin()).collect();
        let f2: Vec<f64> = grid.iter().map(|t| t * t - 0.3).collect();
        let mut values = Vec::new();
        for _ in 0..50 {
            for _ in 0..2 {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                values.extend((0..n).map(|h| a * f1[h] + b * f2[h]));
            }
        }
        let sample = ProfileSample::new(50, 2, grid, values).unwrap();
        let model = fit_mfpca(&sample, 0.999999).unwrap();
        assert_eq!(model.n_components(), 2);
        let scores = project_scores(&model, &sample).unwrap();
        for i in 0..50 {
            for j in 0..2 {
                for h in 0..n {
                    let mut rec = model.mean[(j, h)];
                    for c in 0..2 {
                        rec += scores.get(i, c, j) * model.eigenfunctions[(c, h)];
                    }
                    assert!((rec - sample.curve(i, j)[h]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn score_covariance_edge_cases() {
        let one = ScoreSet::new(1, 1, 2, vec![2.0, -1.0]).unwrap();
        let om = score_covariance(&one);
        assert_eq!(om[0], DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 1.0]));
        let zeros = ScoreSet::new(3, 2, 2, vec![0.0; 12]).unwrap();
        assert!(score_covariance(&zeros).iter().all(|m| m.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn errors_on_degenerate_input() {
        let flat = ProfileSample::new(3, 1, uniform_grid(4), vec![1.0; 12]).unwrap();
        assert!(matches!(fit_mfpca(&flat, 0.9), Err(MpcError::DegenerateSample)));
        let sample = random_sample(5, 1, 6, 1);
        assert!(fit_mfpca(&sample, 1.0).is_err());
        let model = fit_mfpca(&sample, 0.9).unwrap();
        let other = ProfileSample::new(1, 1, uniform_grid(7), vec![0.0; 7]).unwrap();
        assert!(project_scores(&model, &other).is_err());
    }
}
