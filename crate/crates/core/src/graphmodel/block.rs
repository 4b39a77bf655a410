use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MpcError, Result};
use crate::linalg::{max_asymmetry, serde_matrix, symmetrize};

/// Symmetric `pK × pK` matrix in channel-major (ξ) order, viewed as a `p × p`
/// grid of `K × K` blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockMatrix {
    p: usize,
    k: usize,
    #[serde(with = "serde_matrix")]
    data: DMatrix<f64>,
}

impl BlockMatrix {
    /// Wraps `data`, which must be symmetric up to `1e-12` relative to its
    /// largest entry; the stored matrix is exactly symmetric.
    pub fn new(p: usize, k: usize, mut data: DMatrix<f64>) -> Result<Self> {
        let d = p * k;
        if p == 0 || k == 0 || data.nrows() != d || data.ncols() != d {
            return Err(MpcError::DimensionMismatch(format!(
                "block matrix with p={p}, K={k} must be {d}x{d}, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let scale = data.abs().max().max(1.0);
        if max_asymmetry(&data) > 1e-12 * scale {
            return Err(MpcError::InvalidInput("block matrix is not symmetric".into()));
        }
        symmetrize(&mut data);
        Ok(Self { p, k, data })
    }

    /// Symmetrizes `data` unconditionally.
    pub(crate) fn from_symmetrized(p: usize, k: usize, mut data: DMatrix<f64>) -> Self {
        symmetrize(&mut data);
        Self { p, k, data }
    }

    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            p,
            k,
            data: DMatrix::zeros(p * k, p * k),
        }
    }

    pub fn identity(p: usize, k: usize) -> Self {
        Self {
            p,
            k,
            data: DMatrix::identity(p * k, p * k),
        }
    }

    /// ξ-ordered matrix whose η-order conjugate is block diagonal with the
    /// given `p × p` component blocks.
    pub fn from_components(components: &[DMatrix<f64>]) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(MpcError::InvalidInput("need at least one component".into()));
        }
        let p = components[0].nrows();
        let mut data = DMatrix::zeros(p * k, p * k);
        for (c, m) in components.iter().enumerate() {
            if m.nrows() != p || m.ncols() != p {
                return Err(MpcError::DimensionMismatch(format!(
                    "component {c} is {}x{}, expected {p}x{p}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for j in 0..p {
                for l in 0..p {
                    data[(j * k + c, l * k + c)] = m[(j, l)];
                }
            }
        }
        Self::new(p, k, data)
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

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    /// Copy of block `(j, l)`.
    pub fn block(&self, j: usize, l: usize) -> DMatrix<f64> {
        self.data
            .view((j * self.k, l * self.k), (self.k, self.k))
            .into_owned()
    }

    pub fn block_norm(&self, j: usize, l: usize) -> f64 {
        self.data
            .view((j * self.k, l * self.k), (self.k, self.k))
            .norm()
    }

    /// `p × p` matrix of block Frobenius norms.
    pub fn block_norms(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |j, l| self.block_norm(j, l))
    }

    /// Sets block `(j, l)` and its mirror `(l, j)`.
    pub fn set_block(&mut self, j: usize, l: usize, block: &DMatrix<f64>) {
        let k = self.k;
        for a in 0..k {
            for b in 0..k {
                self.data[(j * k + a, l * k + b)] = block[(a, b)];
                self.data[(l * k + b, j * k + a)] = block[(a, b)];
            }
        }
    }

    /// The `p × p` matrix of component `c` in η order.
    pub fn component(&self, c: usize) -> DMatrix<f64> {
        component_of(&self.data, self.p, self.k, c)
    }

    /// Largest entry linking different components; zero when the η-order
    /// conjugate is block diagonal.
    pub fn cross_component_max(&self) -> f64 {
        cross_component_max(&self.data, self.p, self.k)
    }

    pub fn same_shape(&self, other: &BlockMatrix) -> Result<()> {
        if self.p == other.p && self.k == other.k {
            Ok(())
        } else {
            Err(MpcError::DimensionMismatch(format!(
                "block grids differ: (p={}, K={}) vs (p={}, K={})",
                self.p, self.k, other.p, other.k
            )))
        }
    }
}

pub(crate) fn component_of(data: &DMatrix<f64>, p: usize, k: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |j, l| data[(j * k + c, l * k + c)])
}

pub(crate) fn cross_component_max(data: &DMatrix<f64>, p: usize, k: usize) -> f64 {
    let d = p * k;
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            if a % k != b % k {
                worst = worst.max(data[(a, b)].abs());
            }
        }
    }
    worst
}

/// Unordered channel pairs `(j, l)` with `l ≤ j`, stored normalized.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet(BTreeSet<(usize, usize)>);

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// All `p(p+1)/2` pairs.
    pub fn all(p: usize) -> Self {
        let mut s = Self::new();
        for j in 0..p {
            for l in 0..=j {
                s.insert(j, l);
            }
        }
        s
    }

    pub fn insert(&mut self, j: usize, l: usize) {
        self.0.insert(normalize(j, l));
    }

    pub fn contains(&self, j: usize, l: usize) -> bool {
        self.0.contains(&normalize(j, l))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.0.is_subset(&other.0)
    }

    /// `p × p` symmetric membership mask.
    pub fn mask(&self, p: usize) -> Vec<bool> {
        let mut m = vec![false; p * p];
        for (j, l) in self.iter() {
            m[j * p + l] = true;
            m[l * p + j] = true;
        }
        m
    }
}

impl FromIterator<(usize, usize)> for PairSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        let mut s = Self::new();
        for (j, l) in iter {
            s.insert(j, l);
        }
        s
    }
}

fn normalize(j: usize, l: usize) -> (usize, usize) {
    if l <= j {
        (j, l)
    } else {
        (l, j)
    }
}

/// Number of unordered pairs for `p` channels.
pub fn pair_count(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Position of `(j, l)`, `l ≤ j`, in the lower-triangular row-major listing
/// `(0,0), (1,0), (1,1), (2,0), …`.
pub fn pair_index(j: usize, l: usize) -> usize {
    let (j, l) = normalize(j, l);
    j * (j + 1) / 2 + l
}

/// Inverse of [`pair_index`].
pub fn pair_at(index: usize) -> (usize, usize) {
    let mut j = 0;
    while (j + 1) * (j + 2) / 2 <= index {
        j += 1;
    }
    (j, index - j * (j + 1) / 2)
}
