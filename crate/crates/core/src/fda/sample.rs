use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};

/// `N` observations of `p`-channel profiles on a shared grid in `[0, 1]`.
///
/// Values are stored observation-major, then channel, then grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    n_obs: usize,
    n_channels: usize,
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl ProfileSample {
    pub fn new(n_obs: usize, n_channels: usize, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if n_obs == 0 || n_channels == 0 {
            return Err(MpcError::InvalidInput(
                "a sample needs at least one observation and one channel".into(),
            ));
        }
        validate_grid(&grid)?;
        let expected = n_obs * n_channels * grid.len();
        if values.len() != expected {
            return Err(MpcError::DimensionMismatch(format!(
                "expected {expected} values for {n_obs}x{n_channels}x{} sample, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let n = grid.len();
            return Err(MpcError::InvalidInput(format!(
                "non-finite value at observation {}, channel {}, grid point {}",
                pos / (n_channels * n),
                (pos / n) % n_channels,
                pos % n
            )));
        }
        Ok(Self {
            n_obs,
            n_channels,
            grid,
            values,
        })
    }

    /// Builds a sample from per-observation `p × n` row-major blocks.
    pub fn from_observations(grid: Vec<f64>, observations: &[Vec<f64>], n_channels: usize) -> Result<Self> {
        let values: Vec<f64> = observations.iter().flatten().copied().collect();
        Self::new(observations.len(), n_channels, grid, values)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_points(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn curve(&self, obs: usize, channel: usize) -> &[f64] {
        let n = self.grid.len();
        let start = (obs * self.n_channels + channel) * n;
        &self.values[start..start + n]
    }

    pub fn curve_mut(&mut self, obs: usize, channel: usize) -> &mut [f64] {
        let n = self.grid.len();
        let start = (obs * self.n_channels + channel) * n;
        &mut self.values[start..start + n]
    }

    /// All channels of one observation as a `p × n` row-major slice.
    pub fn observation(&self, obs: usize) -> &[f64] {
        let len = self.n_channels * self.grid.len();
        &self.values[obs * len..(obs + 1) * len]
    }

    /// Subset of observations, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let len = self.n_channels * self.grid.len();
        let mut values = Vec::with_capacity(indices.len() * len);
        for &i in indices {
            if i >= self.n_obs {
                return Err(MpcError::InvalidInput(format!("observation index {i} out of range")));
            }
            values.extend_from_slice(self.observation(i));
        }
        Self::new(indices.len(), self.n_channels, self.grid.clone(), values)
    }

    /// Whether the grid is equally spaced within a relative tolerance.
    pub fn has_uniform_grid(&self) -> bool {
        is_uniform(&self.grid)
    }
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(MpcError::InvalidInput("a grid needs at least two points".into()));
    }
    for (h, &t) in grid.iter().enumerate() {
        if !t.is_finite() || !(0.0..=1.0).contains(&t) {
            return Err(MpcError::InvalidInput(format!("grid point {h} = {t} is outside [0, 1]")));
        }
        if h > 0 && t <= grid[h - 1] {
            return Err(MpcError::InvalidInput(format!(
                "grid is not strictly increasing at point {h}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn is_uniform(grid: &[f64]) -> bool {
    if grid.len() < 3 {
        return true;
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    grid.windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= 1e-9 * step.abs().max(1e-300))
}

/// `n` equally spaced points covering `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|h| h as f64 / (n - 1) as f64).collect()
}
