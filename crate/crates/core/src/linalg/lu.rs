//! Dense LU (partial pivoting) and Cholesky factorizations.

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;

#[derive(Clone, Debug)]
pub struct LuFactorization {
    lu: DenseMatrix,
    piv: Vec<usize>,
}

impl LuFactorization {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dim("LuFactorization::new", n, a.cols()));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("lu"));
        }
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if lu[(i, k)].abs() > lu[(p, k)].abs() {
                    p = i;
                }
            }
            if lu[(p, k)] == 0.0 {
                return Err(Error::InvalidArgument("singular matrix in LU".into()));
            }
            if p != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = t;
                }
                piv.swap(k, p);
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let l = lu[(i, k)] / d;
                lu[(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..n {
                        lu[(i, j)] -= l * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(Error::dim("LuFactorization::solve", n, b.len()));
        }
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let s: f64 = (0..i).map(|j| row[j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let s: f64 = (i + 1..n).map(|j| row[j] * x[j]).sum();
            x[i] = (x[i] - s) / row[i];
        }
        Ok(x)
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DenseMatrix,
}

impl Cholesky {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dim("Cholesky::new", n, a.cols()));
        }
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let lj: Vec<f64> = l.row(j)[..j].to_vec();
            let d = a[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::InvalidArgument(
                    "matrix is not positive definite".into(),
                ));
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let li = &l.row(i)[..j];
                let s: f64 = li.iter().zip(&lj).map(|(x, y)| x * y).sum();
                l[(i, j)] = (a[(i, j)] - s) / d;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.l.rows();
        if b.len() != n {
            return Err(Error::dim("Cholesky::solve", n, b.len()));
        }
        let mut y = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s: f64 = (0..i).map(|j| row[j] * y[j]).sum();
            y[i] = (y[i] - s) / row[i];
        }
        for i in (0..n).rev() {
            let mut s = 0.0;
            for j in i + 1..n {
                s += self.l[(j, i)] * y[j];
            }
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        Ok(y)
    }
}
