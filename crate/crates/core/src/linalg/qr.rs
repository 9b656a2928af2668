//! Householder QR with optional column pivoting.

use crate::error::{Error, Result};
use crate::linalg::dense::{dot, DenseMatrix};
use crate::par::{self, Exec};

/// Default relative tolerance for rank detection.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// `A P = Q R` with `Q` orthogonal and `R` upper triangular (trapezoidal).
///
/// `perm[j]` is the column of `A` that ended up in position `j`. The
/// diagonal of `R` is nonnegative and, with pivoting, non-increasing in
/// magnitude, so `Q[:, ..rank]` spans the numerical range of `A`.
#[derive(Clone, Debug)]
pub struct QrFactorization {
    q: DenseMatrix,
    r: DenseMatrix,
    perm: Vec<usize>,
    rank: usize,
}

struct Reflector {
    start: usize,
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    fn apply(&self, x: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let tail = &mut x[self.start..];
        let s = self.beta * dot(&self.v, tail);
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

/// Full QR: `Q` is `m x m`, `R` is `m x n`.
pub fn qr_full(a: &DenseMatrix, tol: f64) -> Result<QrFactorization> {
    factorize(a, tol, true, true)
}

/// Thin QR: `Q` is `m x k`, `R` is `k x n` with `k = min(m, n)`.
pub fn qr_thin(a: &DenseMatrix, tol: f64) -> Result<QrFactorization> {
    factorize(a, tol, true, false)
}

/// Thin QR without column pivoting (`perm` is the identity).
pub fn qr_thin_unpivoted(a: &DenseMatrix, tol: f64) -> Result<QrFactorization> {
    factorize(a, tol, false, false)
}

fn factorize(a: &DenseMatrix, tol: f64, pivot: bool, full: bool) -> Result<QrFactorization> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("QR of an empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("qr"));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance {tol}")));
    }
    let (m, n) = a.shape();
    let kmax = m.min(n);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut reflectors = Vec::with_capacity(kmax);

    for k in 0..kmax {
        if pivot {
            let mut best = k;
            let mut best_norm = -1.0;
            for (j, c) in cols.iter().enumerate().skip(k) {
                let nrm = dot(&c[k..], &c[k..]);
                if nrm > best_norm {
                    best_norm = nrm;
                    best = j;
                }
            }
            cols.swap(k, best);
            perm.swap(k, best);
        }
        let x = &cols[k][k..];
        let alpha = dot(x, x).sqrt();
        let refl = if alpha == 0.0 {
            Reflector {
                start: k,
                v: Vec::new(),
                beta: 0.0,
            }
        } else {
            let mut v = x.to_vec();
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vtv = dot(&v, &v);
            Reflector {
                start: k,
                v,
                beta: 2.0 / vtv,
            }
        };
        for c in cols.iter_mut().skip(k) {
            refl.apply(c);
        }
        for v in cols[k][k + 1..].iter_mut() {
            *v = 0.0;
        }
        reflectors.push(refl);
    }

    let r_rows = if full { m } else { kmax };
    let mut r = DenseMatrix::from_fn(r_rows, n, |i, j| if i <= j { cols[j][i] } else { 0.0 });

    let q_cols = if full { m } else { kmax };
    let q_columns = par::map_range(Exec::default(), q_cols, |j| {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        for refl in reflectors.iter().rev() {
            refl.apply(&mut e);
        }
        e
    });
    let mut q = DenseMatrix::from_fn(m, q_cols, |i, j| q_columns[j][i]);

    for i in 0..kmax {
        if r[(i, i)] < 0.0 {
            for j in 0..n {
                r[(i, j)] = -r[(i, j)];
            }
            for row in 0..m {
                q[(row, i)] = -q[(row, i)];
            }
        }
    }

    let dmax = (0..kmax).fold(0.0_f64, |acc, i| acc.max(r[(i, i)].abs()));
    let rank = if dmax == 0.0 {
        0
    } else {
        (0..kmax).filter(|&i| r[(i, i)].abs() > tol * dmax).count()
    };

    Ok(QrFactorization { q, r, perm, rank })
}

impl QrFactorization {
    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Columns of `Q` spanning the numerical range of `A`.
    pub fn q1(&self) -> DenseMatrix {
        self.q.columns_range(0, self.rank)
    }

    /// Orthogonal complement of `range(A)`; only meaningful for full QR.
    pub fn q2(&self) -> DenseMatrix {
        self.q.columns_range(self.rank, self.q.cols())
    }

    /// Leading `rank` rows of `R` with the pivoting undone, so that
    /// `A ≈ Q1 * r1_unpermuted()`.
    pub fn r1_unpermuted(&self) -> DenseMatrix {
        let n = self.r.cols();
        let mut out = DenseMatrix::zeros(self.rank, n);
        for i in 0..self.rank {
            for j in 0..n {
                out[(i, self.perm[j])] = self.r[(i, j)];
            }
        }
        out
    }

    /// `Q R Pᵀ`, i.e. the reconstruction of `A`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let k = self.r.rows().min(self.q.cols());
        let qr = self
            .q
            .columns_range(0, k)
            .matmul(&DenseMatrix::from_fn(k, self.r.cols(), |i, j| self.r[(i, j)]))
            .expect("shapes agree");
        let mut out = DenseMatrix::zeros(qr.rows(), qr.cols());
        for i in 0..qr.rows() {
            for j in 0..qr.cols() {
                out[(i, self.perm[j])] = qr[(i, j)];
            }
        }
        out
    }
}

/// Solves `R x = b` for upper-triangular square `R`.
pub fn solve_upper(r: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.rows();
    if r.cols() < n || b.len() != n {
        return Err(Error::dim("solve_upper", n, b.len()));
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| r[(i, j)] * x[j]).sum();
        let d = r[(i, i)];
        if d == 0.0 {
            return Err(Error::InvalidArgument("singular triangular system".into()));
        }
        x[i] = (b[i] - s) / d;
    }
    Ok(x)
}

/// Solves `Rᵀ x = b` for upper-triangular square `R` (forward substitution).
pub fn solve_upper_transposed(r: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = r.rows();
    if r.cols() < n || b.len() != n {
        return Err(Error::dim("solve_upper_transposed", n, b.len()));
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|j| r[(j, i)] * x[j]).sum();
        let d = r[(i, i)];
        if d == 0.0 {
            return Err(Error::InvalidArgument("singular triangular system".into()));
        }
        x[i] = (b[i] - s) / d;
    }
    Ok(x)
}

/// Orthonormal basis of `range(A)` via pivoted QR.
pub fn orthonormal_range(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    Ok(qr_thin(a, tol)?.q1())
}
