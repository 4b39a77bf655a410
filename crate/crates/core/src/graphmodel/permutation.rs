use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};

/// Ordering of a `pK` score vector.
///
/// `Eta` is component-major, `η = (ξ_1ᵀ, …, ξ_Kᵀ)ᵀ` with `ξ_k` the `p` channel
/// scores of component `k`. `Xi` is channel-major: the `K` scores of channel 1,
/// then channel 2, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Conjugate an η-ordered matrix into ξ order (`P M Pᵀ`).
    ToXi,
    /// Conjugate a ξ-ordered matrix into η order (`Pᵀ M P`).
    ToEta,
}

/// The `pK × pK` permutation `P` with `ξ = P η`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSpec {
    p: usize,
    k: usize,
    xi_to_eta: Vec<usize>,
}

impl PermutationSpec {
    pub fn new(p: usize, k: usize) -> Result<Self> {
        if p == 0 || k == 0 {
            return Err(MpcError::InvalidInput("p and K must be positive".into()));
        }
        let mut xi_to_eta = vec![0; p * k];
        for j in 0..p {
            for c in 0..k {
                xi_to_eta[j * k + c] = c * p + j;
            }
        }
        Ok(Self { p, k, xi_to_eta })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.p * self.k
    }

    /// η position of ξ position `xi`.
    pub fn eta_of(&self, xi: usize) -> usize {
        self.xi_to_eta[xi]
    }

    /// ξ position of η position `eta`.
    pub fn xi_of(&self, eta: usize) -> usize {
        let (c, j) = (eta / self.p, eta % self.p);
        j * self.k + c
    }

    /// Dense `P`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for a in 0..d {
            m[(a, self.xi_to_eta[a])] = 1.0;
        }
        m
    }

    pub fn permute_vector(&self, v: &[f64], direction: Direction) -> Result<Vec<f64>> {
        self.check(v.len(), 1)?;
        let d = self.dim();
        let mut out = vec![0.0; d];
        for a in 0..d {
            match direction {
                Direction::ToXi => out[a] = v[self.xi_to_eta[a]],
                Direction::ToEta => out[self.xi_to_eta[a]] = v[a],
            }
        }
        Ok(out)
    }

    pub fn permute(&self, m: &DMatrix<f64>, direction: Direction) -> Result<DMatrix<f64>> {
        self.check(m.nrows(), m.ncols())?;
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for a in 0..d {
            let ea = self.xi_to_eta[a];
            for b in 0..d {
                let eb = self.xi_to_eta[b];
                match direction {
                    Direction::ToXi => out[(a, b)] = m[(ea, eb)],
                    Direction::ToEta => out[(ea, eb)] = m[(a, b)],
                }
            }
        }
        Ok(out)
    }

    fn check(&self, rows: usize, cols: usize) -> Result<()> {
        let d = self.dim();
        let ok = rows == d && (cols == d || cols == 1);
        if ok {
            Ok(())
        } else {
            Err(MpcError::DimensionMismatch(format!(
                "expected a {d}x{d} matrix (p={}, K={}), got {rows}x{cols}",
                self.p, self.k
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_the_three_by_two_example() {
        let spec = PermutationSpec::new(3, 2).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(6, 6, &[
            1., 0., 0., 0., 0., 0.,
            0., 0., 0., 1., 0., 0.,
            0., 1., 0., 0., 0., 0.,
            0., 0., 0., 0., 1., 0.,
            0., 0., 1., 0., 0., 0.,
            0., 0., 0., 0., 0., 1.,
        ]);
        assert_eq!(spec.matrix(), expected);
        // η = (ξ11, ξ12, ξ13, ξ21, ξ22, ξ23) encoded as 10k + j
        let eta = [11.0, 12.0, 13.0, 21.0, 22.0, 23.0];
        let xi = spec.permute_vector(&eta, Direction::ToXi).unwrap();
        assert_eq!(xi, vec![11.0, 21.0, 12.0, 22.0, 13.0, 23.0]);
        assert_eq!(spec.permute_vector(&xi, Direction::ToEta).unwrap(), eta.to_vec());
    }

    #[test]
    fn single_component_is_identity() {
        let spec = PermutationSpec::new(4, 1).unwrap();
        assert_eq!(spec.matrix(), DMatrix::identity(4, 4));
    }

    #[test]
    fn conjugation_matches_dense_product_and_inverts() {
        let spec = PermutationSpec::new(3, 2).unwrap();
        let m = DMatrix::from_fn(6, 6, |i, j| (i * 7 + j * 3) as f64 + 0.5 * (i == j) as u8 as f64);
        let p = spec.matrix();
        let to_xi = spec.permute(&m, Direction::ToXi).unwrap();
        assert_eq!(to_xi, &p * &m * p.transpose());
        let back = spec.permute(&to_xi, Direction::ToEta).unwrap();
        assert_eq!(back, m);
        assert!(spec.permute(&DMatrix::zeros(5, 5), Direction::ToXi).is_err());
    }

    #[test]
    fn index_maps_are_inverse() {
        let spec = PermutationSpec::new(5, 3).unwrap();
        for xi in 0..15 {
            assert_eq!(spec.xi_of(spec.eta_of(xi)), xi);
        }
    }
}
