use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{MpcError, Result};
use crate::fda::{uniform_grid, ProfileSample};
use crate::graphmodel::BlockMatrix;
use crate::seeding::{derive_rng, tag};

use super::models::SimModelSpec;

/// `n × m` Fourier design: `1, √2 sin(2πlt), √2 cos(2πlt), …`.
pub fn fourier_basis(m: usize, grid: &[f64]) -> DMatrix<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    DMatrix::from_fn(grid.len(), m, |h, b| {
        let t = grid[h];
        if b == 0 {
            1.0
        } else {
            let l = b.div_ceil(2) as f64;
            if b % 2 == 1 {
                std::f64::consts::SQRT_2 * (tau * l * t).sin()
            } else {
                std::f64::consts::SQRT_2 * (tau * l * t).cos()
            }
        }
    })
}

/// Draws profiles whose basis coefficients are Gaussian with precision `Θ`.
#[derive(Debug, Clone)]
pub struct ProfileGenerator {
    upper: DMatrix<f64>,
    basis: DMatrix<f64>,
    p: usize,
    m: usize,
    noise_sd: f64,
    grid: Vec<f64>,
}

impl ProfileGenerator {
    pub fn new(theta: &BlockMatrix, spec: &SimModelSpec) -> Result<Self> {
        spec.validate()?;
        if theta.p() != spec.p || theta.k() != spec.basis_size {
            return Err(MpcError::DimensionMismatch(format!(
                "precision is {}x{} blocks of size {}, model expects p={} and M={}",
                theta.p(),
                theta.p(),
                theta.k(),
                spec.p,
                spec.basis_size
            )));
        }
        let chol = theta
            .data()
            .clone()
            .cholesky()
            .ok_or_else(|| MpcError::NotPositiveDefinite("generating precision".into()))?;
        let grid = uniform_grid(spec.n_grid);
        Ok(Self {
            upper: chol.l().transpose(),
            basis: fourier_basis(spec.basis_size, &grid),
            p: spec.p,
            m: spec.basis_size,
            noise_sd: spec.noise_sd,
            grid,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_channels(&self) -> usize {
        self.p
    }

    /// Coefficients `c = L⁻ᵀz` in channel-major order, so `Cov(c) = Θ⁻¹`.
    pub fn coefficients<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.p * self.m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let c = self
            .upper
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        c.as_slice().to_vec()
    }

    /// One `p × n` row-major observation.
    pub fn observation<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c = self.coefficients(rng);
        let n = self.grid.len();
        let mut out = Vec::with_capacity(self.p * n);
        for j in 0..self.p {
            let cj = &c[j * self.m..(j + 1) * self.m];
            for h in 0..n {
                let mut v = 0.0;
                for (b, cb) in cj.iter().enumerate() {
                    v += self.basis[(h, b)] * cb;
                }
                let e: f64 = rng.sample(StandardNormal);
                out.push(v + self.noise_sd * e);
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, n_obs: usize, rng: &mut R) -> Result<ProfileSample> {
        let obs: Vec<Vec<f64>> = (0..n_obs).map(|_| self.observation(rng)).collect();
        ProfileSample::from_observations(self.grid.clone(), &obs, self.p)
    }
}

/// `n_obs` profiles drawn with the model seed.
pub fn generate_profiles(theta: &BlockMatrix, n_obs: usize, spec: &SimModelSpec) -> Result<ProfileSample> {
    let gen = ProfileGenerator::new(theta, spec)?;
    gen.sample(n_obs, &mut derive_rng(spec.seed, tag::PHASE1_DATA, 0))
}
