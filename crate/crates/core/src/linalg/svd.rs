//! One-sided Jacobi SVD.
//!
//! Tall inputs are first reduced by an unpivoted QR so the Jacobi sweeps
//! run on a square triangular factor. Column pairs are visited in a
//! round-robin tournament; pairs within one round are disjoint and are
//! rotated independently, which makes the parallel path bit-identical to
//! the sequential one.

use crate::error::{Error, Result};
use crate::linalg::dense::{dot, DenseMatrix};
use crate::linalg::qr::qr_thin_unpivoted;
use crate::par::{self, Exec};

pub const MAX_SWEEPS: usize = 80;
const ORTHO_TOL: f64 = 1e-15;

/// Thin SVD `A = U diag(s) Vᵀ` with `k = min(m, n)` singular triplets.
#[derive(Clone, Debug)]
pub struct SvdFactorization {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactorization {
    /// Number of singular values above `tol * s[0]`.
    pub fn rank(&self, tol: f64) -> usize {
        numerical_rank(&self.s, tol)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(self.u.rows(), self.s.len(), |i, j| {
            self.u[(i, j)] * self.s[j]
        });
        us.matmul(&self.v.transpose()).expect("shapes agree")
    }
}

pub fn numerical_rank(s: &[f64], tol: f64) -> usize {
    match s.first() {
        Some(&s0) if s0 > 0.0 => s.iter().filter(|&&x| x > tol * s0).count(),
        _ => 0,
    }
}

pub fn svd(a: &DenseMatrix) -> Result<SvdFactorization> {
    svd_with(a, Exec::default())
}

pub fn svd_with(a: &DenseMatrix, exec: Exec) -> Result<SvdFactorization> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("SVD of an empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("svd"));
    }
    let (m, n) = a.shape();
    let mut f = if m < n {
        let t = tall_svd(&a.transpose(), exec)?;
        SvdFactorization {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    } else {
        tall_svd(a, exec)?
    };
    apply_sign_convention(&mut f);
    Ok(f)
}

fn tall_svd(a: &DenseMatrix, exec: Exec) -> Result<SvdFactorization> {
    let (m, n) = a.shape();
    if m > n {
        let qr = qr_thin_unpivoted(a, 0.0)?;
        let inner = jacobi(qr.r(), exec)?;
        let u = qr.q().matmul_with(&inner.u, exec)?;
        Ok(SvdFactorization {
            u,
            s: inner.s,
            v: inner.v,
        })
    } else {
        jacobi(a, exec)
    }
}

/// One-sided Jacobi on a square matrix.
fn jacobi(a: &DenseMatrix, exec: Exec) -> Result<SvdFactorization> {
    let n = a.cols();
    let p = a.rows();
    debug_assert_eq!(n, p);
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // Columns whose norm is at roundoff of ‖A‖ carry no direction; rotating
    // them against others never reduces their (meaningless) cosine.
    let frob2: f64 = w.iter().map(|c| dot(c, c)).sum();
    let negligible = (f64::EPSILON * n as f64).powi(2) * frob2;
    let rounds = round_robin(n);
    let mut converged = n < 2;
    let mut last_off = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        last_off = 0.0_f64;
        for pairs in &rounds {
            let updates = par::map_range(exec, pairs.len(), |k| {
                let (i, j) = pairs[k];
                rotate_pair(&w[i], &w[j], &v[i], &v[j], negligible)
            });
            for (k, upd) in updates.into_iter().enumerate() {
                if let Some((wi, wj, vi, vj, off)) = upd {
                    let (i, j) = pairs[k];
                    w[i] = wi;
                    w[j] = wj;
                    v[i] = vi;
                    v[j] = vj;
                    rotated = true;
                    last_off = last_off.max(off);
                }
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "one-sided Jacobi SVD",
            iterations: MAX_SWEEPS,
            residual: last_off,
        });
    }

    let sigma: Vec<f64> = w.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let s: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let mut ucols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&j| {
            if sigma[j] * sigma[j] > negligible {
                Some(w[j].iter().map(|x| x / sigma[j]).collect())
            } else {
                None
            }
        })
        .collect();
    complete_orthonormal(&mut ucols, p);
    let ucols: Vec<Vec<f64>> = ucols.into_iter().map(|c| c.expect("completed")).collect();
    let vcols: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();

    Ok(SvdFactorization {
        u: DenseMatrix::from_fn(p, n, |i, j| ucols[j][i]),
        s,
        v: DenseMatrix::from_fn(n, n, |i, j| vcols[j][i]),
    })
}

type Rotated = Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, f64)>;

fn rotate_pair(wi: &[f64], wj: &[f64], vi: &[f64], vj: &[f64], negligible: f64) -> Rotated {
    let alpha = dot(wi, wi);
    let beta = dot(wj, wj);
    let gamma = dot(wi, wj);
    let scale = (alpha * beta).sqrt();
    if gamma == 0.0 || gamma.abs() <= ORTHO_TOL * scale || alpha.min(beta) <= negligible {
        return None;
    }
    let zeta = (beta - alpha) / (2.0 * gamma);
    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = c * t;
    let rot = |x: &[f64], y: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let a = x.iter().zip(y).map(|(p, q)| c * p - s * q).collect();
        let b = x.iter().zip(y).map(|(p, q)| s * p + c * q).collect();
        (a, b)
    };
    let (nwi, nwj) = rot(wi, wj);
    let (nvi, nvj) = rot(vi, vj);
    Some((nwi, nwj, nvi, nvj, gamma.abs() / scale))
}

/// Round-robin schedule: every unordered pair appears exactly once, and
/// pairs within one round are disjoint.
fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let m = if n % 2 == 0 { n } else { n + 1 };
    let mut players: Vec<usize> = (0..m).collect();
    let mut rounds = Vec::with_capacity(m - 1);
    for _ in 0..m - 1 {
        let mut pairs = Vec::with_capacity(m / 2);
        for k in 0..m / 2 {
            let (a, b) = (players[k], players[m - 1 - k]);
            if a < n && b < n {
                pairs.push((a.min(b), a.max(b)));
            }
        }
        rounds.push(pairs);
        let last = players.pop().expect("nonempty");
        players.insert(1, last);
    }
    rounds
}

/// Fills `None` slots with unit vectors orthogonal to all other slots.
pub(crate) fn complete_orthonormal(cols: &mut [Option<Vec<f64>>], dim: usize) {
    let mut candidate = 0usize;
    for k in 0..cols.len() {
        if cols[k].is_some() {
            continue;
        }
        loop {
            assert!(candidate < dim, "cannot complete orthonormal set");
            let mut x = vec![0.0; dim];
            x[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().flatten() {
                    let d = dot(c, &x);
                    for (xi, ci) in x.iter_mut().zip(c) {
                        *xi -= d * ci;
                    }
                }
            }
            let nrm = dot(&x, &x).sqrt();
            if nrm > 0.5 {
                x.iter_mut().for_each(|v| *v /= nrm);
                cols[k] = Some(x);
                break;
            }
        }
    }
}

/// Largest-magnitude entry (first on ties) of each left singular vector is
/// made nonnegative; the matching right singular vector flips with it.
fn apply_sign_convention(f: &mut SvdFactorization) {
    for j in 0..f.s.len() {
        let col = f.u.column(j);
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..f.u.rows() {
                f.u[(i, j)] = -f.u[(i, j)];
            }
            for i in 0..f.v.rows() {
                f.v[(i, j)] = -f.v[(i, j)];
            }
        }
    }
}

/// Moore-Penrose pseudoinverse with singular values `<= tol * s[0]` dropped.
pub fn pseudoinverse(a: &DenseMatrix, tol: f64) -> Result<DenseMatrix> {
    let f = svd(a)?;
    let (m, n) = a.shape();
    let s0 = f.s.first().copied().unwrap_or(0.0);
    let inv: Vec<f64> = f
        .s
        .iter()
        .map(|&s| if s0 > 0.0 && s > tol * s0 { 1.0 / s } else { 0.0 })
        .collect();
    let mut out = DenseMatrix::zeros(n, m);
    for (k, &sk) in inv.iter().enumerate() {
        if sk == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = f.v[(i, k)] * sk;
            for j in 0..m {
                out[(i, j)] += vik * f.u[(j, k)];
            }
        }
    }
    Ok(out)
}
