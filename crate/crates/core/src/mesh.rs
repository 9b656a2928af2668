//! Finite-volume meshes, subdomain decompositions and the aggregation
//! matrix `C` with `Cᵀu` = subdomain averages of `u`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Periodic 1D mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    cell_volumes: Vec<f64>,
    periodic: bool,
}

impl Mesh1D {
    pub fn new(cell_volumes: Vec<f64>) -> Result<Self> {
        if cell_volumes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a mesh needs at least 2 cells, got {}",
                cell_volumes.len()
            )));
        }
        if let Some(j) = cell_volumes.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cell {j} has nonpositive volume {}",
                cell_volumes[j]
            )));
        }
        Ok(Self {
            cell_volumes,
            periodic: true,
        })
    }

    /// `n` equal cells covering `[0, length)`.
    pub fn uniform(n: usize, length: f64) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidArgument(format!("domain length {length}")));
        }
        Self::new(vec![length / n.max(1) as f64; n])
    }

    pub fn n_cells(&self) -> usize {
        self.cell_volumes.len()
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    /// Cell centers, with the first cell starting at `x = 0`.
    pub fn cell_centers(&self) -> Vec<f64> {
        let mut x = 0.0;
        self.cell_volumes
            .iter()
            .map(|h| {
                let c = x + 0.5 * h;
                x += h;
                c
            })
            .collect()
    }
}

/// Index sets `S_k` of the cells forming each subdomain. Subdomains may
/// overlap and need not be connected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdomainDecomposition {
    subdomains: Vec<Vec<usize>>,
}

impl SubdomainDecomposition {
    /// Validates every index against `n_unknowns` and rejects empty
    /// subdomains and repeated indices within one subdomain.
    pub fn new(subdomains: Vec<Vec<usize>>, n_unknowns: usize) -> Result<Self> {
        for (k, s) in subdomains.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::EmptySubdomain(k));
            }
            let mut seen = vec![false; n_unknowns];
            for &j in s {
                if j >= n_unknowns {
                    return Err(Error::IndexOutOfRange {
                        subdomain: k,
                        index: j,
                        len: n_unknowns,
                    });
                }
                if seen[j] {
                    return Err(Error::DuplicateIndex {
                        subdomain: k,
                        index: j,
                    });
                }
                seen[j] = true;
            }
        }
        Ok(Self { subdomains })
    }

    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn subdomains(&self) -> &[Vec<usize>] {
        &self.subdomains
    }

    /// The single subdomain covering all `n` unknowns.
    pub fn whole_domain(n: usize) -> Self {
        Self {
            subdomains: vec![(0..n).collect()],
        }
    }
}

/// `C ∈ R^{N x K}` with `C[j, k] = |Ω_j| / |Ω̄_k|` for `j ∈ S_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregationMatrix {
    c: DenseMatrix,
}

impl AggregationMatrix {
    pub fn matrix(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.c
    }

    pub fn n_unknowns(&self) -> usize {
        self.c.rows()
    }

    pub fn n_subdomains(&self) -> usize {
        self.c.cols()
    }

    /// Wraps an existing matrix (used when reloading artifacts).
    pub fn from_matrix(c: DenseMatrix) -> Self {
        Self { c }
    }
}

/// Builds `C` from per-unknown volumes (cell volumes, or face-cell volumes
/// of one staggered velocity component).
pub fn build_aggregation_matrix(
    volumes: &[f64],
    decomp: &SubdomainDecomposition,
) -> Result<AggregationMatrix> {
    let n = volumes.len();
    let mut c = DenseMatrix::zeros(n, decomp.n_subdomains());
    for (k, s) in decomp.subdomains().iter().enumerate() {
        if s.is_empty() {
            return Err(Error::EmptySubdomain(k));
        }
        let mut total = 0.0;
        for &j in s {
            if j >= n {
                return Err(Error::IndexOutOfRange {
                    subdomain: k,
                    index: j,
                    len: n,
                });
            }
            total += volumes[j];
        }
        for &j in s {
            c[(j, k)] = volumes[j] / total;
        }
    }
    Ok(AggregationMatrix { c })
}

pub fn mesh_aggregation_matrix(
    mesh: &Mesh1D,
    decomp: &SubdomainDecomposition,
) -> Result<AggregationMatrix> {
    build_aggregation_matrix(mesh.cell_volumes(), decomp)
}

/// Subdomain averages `Cᵀu`.
pub fn subdomain_average(c: &AggregationMatrix, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != c.n_unknowns() {
        return Err(Error::dim("subdomain_average", c.n_unknowns(), u.len()));
    }
    c.matrix().tr_matvec(u)
}
