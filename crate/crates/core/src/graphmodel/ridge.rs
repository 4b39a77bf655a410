use super::admm::spectral_apply;
use super::block::BlockMatrix;
use crate::error::{MpcError, Result};
use crate::linalg::positive_quadratic_root;

/// Maximizer of `log|Θ| − tr(SΘ) − (γ/2)‖Θ − T‖²_F`.
///
/// Stationarity gives `γΘ² + EΘ − I = 0` with `E = S − γT`, solved per
/// eigenvalue of `E`.
pub fn ridge_precision(s: &BlockMatrix, target: &BlockMatrix, gamma: f64) -> Result<BlockMatrix> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(MpcError::InvalidInput(format!("ridge penalty must be > 0, got {gamma}")));
    }
    s.same_shape(target)?;
    let e = s.data() - target.data() * gamma;
    let (theta, _) = spectral_apply(&e, s.p(), s.k(), true, |d| positive_quadratic_root(d, gamma));
    Ok(BlockMatrix::from_symmetrized(s.p(), s.k(), theta))
}

/// `‖Θ⁻¹ − S − γ(Θ − T)‖_F`.
pub fn ridge_stationarity_residual(
    theta: &BlockMatrix,
    s: &BlockMatrix,
    target: &BlockMatrix,
    gamma: f64,
) -> Option<f64> {
    let inv = theta.data().clone().try_inverse()?;
    Some((inv - s.data() - (theta.data() - target.data()) * gamma).norm())
}
