use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::graphmodel::BlockMatrix;
use crate::linalg::min_eigenvalue;
use crate::seeding::{derive_rng, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelId {
    I,
    II,
    III,
}

impl std::str::FromStr for ModelId {
    type Err = MpcError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Self::I),
            "II" | "2" => Ok(Self::II),
            "III" | "3" => Ok(Self::III),
            _ => Err(MpcError::InvalidInput(format!("unknown model '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimModelSpec {
    pub model: ModelId,
    pub p: usize,
    /// Number of Fourier basis functions (block size).
    pub basis_size: usize,
    pub noise_sd: f64,
    pub n_grid: usize,
    /// Edge probability for Model III.
    pub edge_probability: f64,
    /// Eigenvalue floor for Model III's diagonal scale.
    pub min_eigenvalue: f64,
    pub seed: u64,
}

impl Default for SimModelSpec {
    fn default() -> Self {
        Self {
            model: ModelId::I,
            p: 10,
            basis_size: 5,
            noise_sd: 0.5,
            n_grid: 100,
            edge_probability: 0.2,
            min_eigenvalue: 0.05,
            seed: 0,
        }
    }
}

impl SimModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.basis_size == 0 || self.n_grid < 2 {
            return Err(MpcError::InvalidInput("p, basis_size must be positive and n_grid >= 2".into()));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(MpcError::InvalidInput("noise_sd must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) || !(self.min_eigenvalue > 0.0) {
            return Err(MpcError::InvalidInput("invalid Model III settings".into()));
        }
        Ok(())
    }
}

/// Banded `M × M` matrix with 1 on the diagonal, 0.6 and 0.3 on the first
/// and second off-diagonals.
pub fn base_matrix(m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |a, b| match a.abs_diff(b) {
        0 => 1.0,
        1 => 0.6,
        2 => 0.3,
        _ => 0.0,
    })
}

fn band_weight(distance: usize) -> f64 {
    match distance {
        0 => 1.0,
        1 => 0.6,
        2 => 0.3,
        _ => 0.0,
    }
}

fn kron_blocks(p: usize, a: &DMatrix<f64>, weight: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let m = a.nrows();
    let mut out = DMatrix::zeros(p * m, p * m);
    for j in 0..p {
        for l in 0..p {
            let w = weight(j, l);
            if w != 0.0 {
                out.view_mut((j * m, l * m), (m, m)).copy_from(&(a * w));
            }
        }
    }
    out
}

/// In-control precision matrix of the chosen model, in channel-major order
/// with `M × M` blocks.
pub fn build_theta0(spec: &SimModelSpec) -> Result<BlockMatrix> {
    spec.validate()?;
    let (p, m) = (spec.p, spec.basis_size);
    let a = base_matrix(m);
    let data = match spec.model {
        ModelId::I => kron_blocks(p, &a, |j, l| band_weight(j.abs_diff(l))),
        ModelId::II => kron_blocks(p, &a, |j, l| {
            let full = (p / 3) * 3;
            if j / 3 == l / 3 && j < full && l < full {
                band_weight(j.abs_diff(l))
            } else if j == l {
                1.0
            } else {
                0.0
            }
        }),
        ModelId::III => {
            let mut rng = derive_rng(spec.seed, tag::MODEL, 0);
            let mut edges = DMatrix::<f64>::zeros(p, p);
            for j in 0..p {
                for l in 0..j {
                    if rng.random::<f64>() < spec.edge_probability {
                        edges[(j, l)] = 0.5;
                        edges[(l, j)] = 0.5;
                    }
                }
            }
            let off = kron_blocks(p, &a, |j, l| edges[(j, l)]);
            let diag = kron_blocks(p, &a, |j, l| (j == l) as u8 as f64);
            let target = spec.min_eigenvalue;
            let ok = |d: f64| min_eigenvalue(&(&off + &diag * d)) >= target;
            let mut hi = 1.0;
            while !ok(hi) {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(MpcError::Infeasible("Model III diagonal scale diverged".into()));
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-13 * hi {
                    break;
                }
            }
            off + diag * hi
        }
    };
    if data.clone().cholesky().is_none() {
        return Err(MpcError::NotPositiveDefinite("generated in-control precision".into()));
    }
    BlockMatrix::new(p, m, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_blocks_follow_band() {
        let spec = SimModelSpec {
            p: 3,
            ..Default::default()
        };
        let th = build_theta0(&spec).unwrap();
        let a = base_matrix(5);
        assert_eq!(a[(0, 0)], 1.0);
        assert_eq!(a[(0, 1)], 0.6);
        assert_eq!(a[(0, 2)], 0.3);
        assert_eq!(a[(0, 3)], 0.0);
        assert_eq!(th.block(0, 0), a);
        assert_eq!(th.block(0, 1), &a * 0.6);
        assert_eq!(th.block(0, 2), &a * 0.3);
        assert!(min_eigenvalue(th.data()) > 0.0);
    }

    #[test]
    fn model_one_ten_channels_is_pd_and_banded() {
        let th = build_theta0(&SimModelSpec::default()).unwrap();
        assert_eq!(th.block_norm(5, 2), 0.0);
        assert!(th.block_norm(4, 2) > 0.0);
        assert!(min_eigenvalue(th.data()) > 0.0);
    }

    #[test]
    fn model_two_leftover_channel_is_isolated() {
        let spec = SimModelSpec {
            model: ModelId::II,
            p: 4,
            ..Default::default()
        };
        let th = build_theta0(&spec).unwrap();
        for l in 0..3 {
            assert_eq!(th.block_norm(3, l), 0.0);
        }
        assert_eq!(th.block(3, 3), base_matrix(5));
        assert_eq!(th.block(1, 0), base_matrix(5) * 0.6);
    }

    #[test]
    fn model_three_meets_eigenvalue_floor() {
        let mut counts = 0;
        for seed in 0..20 {
            let spec = SimModelSpec {
                model: ModelId::III,
                seed,
                ..Default::default()
            };
            let th = build_theta0(&spec).unwrap();
            let lmin = min_eigenvalue(th.data());
            assert!((0.05..0.0501).contains(&lmin), "min eigenvalue {lmin}");
            for j in 0..10 {
                for l in 0..j {
                    counts += (th.block_norm(j, l) > 0.0) as usize;
                }
            }
        }
        let mean = counts as f64 / 20.0;
        assert!((mean - 9.0).abs() < 2.5, "mean edge count {mean}");
    }
}
