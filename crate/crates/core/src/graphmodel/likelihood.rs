use nalgebra::DMatrix;

use super::admm::spectral_apply;
use super::block::BlockMatrix;
use crate::error::{MpcError, Result};
use crate::linalg::{logdet_pd, trace_product};

/// Eigenvalue floor applied where a positive definite de-sparsified estimate
/// is required.
pub const PD_FLOOR: f64 = 1e-8;

/// `log|Θ| − tr(SΘ)`.
pub fn log_likelihood(theta: &BlockMatrix, sn_perm: &DMatrix<f64>) -> Result<f64> {
    let d = theta.dim();
    if sn_perm.nrows() != d || sn_perm.ncols() != d {
        return Err(MpcError::DimensionMismatch(format!(
            "sample covariance is {}x{}, expected {d}x{d}",
            sn_perm.nrows(),
            sn_perm.ncols()
        )));
    }
    let logdet = logdet_pd(theta.data())
        .ok_or_else(|| MpcError::NotPositiveDefinite("log-likelihood precision".into()))?;
    Ok(logdet - trace_product(sn_perm, theta.data()))
}

/// `p × p` matrix of block Frobenius distances `‖A_jl − B_jl‖_F`.
pub fn block_frobenius(a: &BlockMatrix, b: &BlockMatrix) -> Result<DMatrix<f64>> {
    a.same_shape(b)?;
    let (p, k) = (a.p(), a.k());
    let diff = a.data() - b.data();
    let mut out = DMatrix::zeros(p, p);
    for j in 0..p {
        for l in 0..=j {
            let v = diff.view((j * k, l * k), (k, k)).norm();
            out[(j, l)] = v;
            out[(l, j)] = v;
        }
    }
    Ok(out)
}

/// `2Θ − ΘΣΘ`.
pub fn desparsify(theta: &BlockMatrix, sigma: &BlockMatrix) -> Result<BlockMatrix> {
    theta.same_shape(sigma)?;
    let t = theta.data();
    let m = t * 2.0 - t * sigma.data() * t;
    Ok(BlockMatrix::from_symmetrized(theta.p(), theta.k(), m))
}

/// Raises eigenvalues below `floor` to `floor`; returns the number raised.
pub fn clip_to_pd(m: &BlockMatrix, floor: f64) -> (BlockMatrix, usize) {
    let (p, k) = (m.p(), m.k());
    let count = nalgebra::SymmetricEigen::new(m.data().clone())
        .eigenvalues
        .iter()
        .filter(|&&d| d < floor)
        .count();
    if count == 0 {
        return (m.clone(), 0);
    }
    let (out, _) = spectral_apply(m.data(), p, k, true, |d| d.max(floor));
    (BlockMatrix::from_symmetrized(p, k, out), count)
}
