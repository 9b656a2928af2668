//! Proper orthogonal decomposition, plain and weighted.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::dense::DenseMatrix;
use crate::linalg::svd::{numerical_rank, svd};

/// Leading left singular vectors of a (weighted) snapshot matrix.
#[derive(Clone, Debug)]
pub struct PodModes {
    /// `N x r` modes, `Wᵀ`-orthonormal: `modesᵀ W modes = I`.
    pub modes: DenseMatrix,
    /// All singular values of `W^{1/2} X`, non-increasing.
    pub singular_values: Vec<f64>,
    /// Numerical rank of `W^{1/2} X` at the tolerance used.
    pub rank: usize,
}

/// Plain POD: the `r` leading left singular vectors of `x`.
pub fn pod(x: &DenseMatrix, r: usize, tol: f64) -> Result<PodModes> {
    weighted_pod(x, None, r, tol)
}

/// POD in the inner product `<a, b> = aᵀ diag(w) b`.
///
/// Computes the SVD of `diag(w)^{1/2} X` and scales the left singular
/// vectors back by `diag(w)^{-1/2}`. When `r` exceeds the numerical rank
/// the basis is truncated to the rank with a warning.
pub fn weighted_pod(
    x: &DenseMatrix,
    weights: Option<&[f64]>,
    r: usize,
    tol: f64,
) -> Result<PodModes> {
    let n = x.rows();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::dim("weighted_pod weights", n, w.len()));
        }
        if let Some(bad) = w.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight {bad} is not strictly positive ({})",
                w[bad]
            )));
        }
    }
    if r > n.min(x.cols()) {
        return Err(Error::InvalidArgument(format!(
            "requested {r} modes from a {}x{} snapshot matrix",
            n,
            x.cols()
        )));
    }
    let sqrt_w: Option<Vec<f64>> = weights.map(|w| w.iter().map(|v| v.sqrt()).collect());
    let xhat = match &sqrt_w {
        Some(s) => x.scale_rows(s)?,
        None => x.clone(),
    };
    let f = svd(&xhat)?;
    let rank = numerical_rank(&f.s, tol);
    let keep = if r > rank {
        warn!("requested {r} POD modes but snapshot rank is {rank}; truncating");
        rank
    } else {
        r
    };
    let mut modes = f.u.columns_range(0, keep);
    if let Some(s) = &sqrt_w {
        for i in 0..modes.rows() {
            for j in 0..keep {
                modes[(i, j)] /= s[i];
            }
        }
    }
    Ok(PodModes {
        modes,
        singular_values: f.s,
        rank,
    })
}

/// Smallest `p` whose cumulative energy `Σ_{i<p} σᵢ² / Σ σᵢ²` reaches
/// `fraction`.
pub fn energy_truncation(singular_values: &[f64], fraction: f64) -> usize {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (i, s) in singular_values.iter().enumerate() {
        acc += s * s;
        if acc >= fraction * total {
            return i + 1;
        }
    }
    singular_values.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_snapshots_give_single_mode() {
        let x = DenseMatrix::from_rows(&[vec![1.0; 3], vec![0.0; 3]]).unwrap();
        let p = pod(&x, 2, 1e-10).unwrap();
        assert_eq!(p.rank, 1);
        assert_eq!(p.modes.cols(), 1);
        assert!((p.modes[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(p.modes[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn weighted_normalization_hand_solved() {
        // 4 m0² + m1² = 1 with m ∝ [1, 1] gives m = [1/√5, 1/√5].
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let p = weighted_pod(&x, Some(&[4.0, 1.0]), 1, 1e-10).unwrap();
        let e = 1.0 / 5f64.sqrt();
        assert!((p.modes[(0, 0)] - e).abs() < 1e-15);
        assert!((p.modes[(1, 0)] - e).abs() < 1e-15);
    }

    #[test]
    fn unit_weights_byte_identical_to_plain() {
        let x = DenseMatrix::from_fn(9, 5, |i, j| ((i * 5 + j) as f64 * 0.31).sin());
        let a = pod(&x, 3, 1e-10).unwrap();
        let b = weighted_pod(&x, Some(&[1.0; 9]), 3, 1e-10).unwrap();
        assert_eq!(a.modes, b.modes);
        assert_eq!(a.singular_values, b.singular_values);
    }

    #[test]
    fn rejects_nonpositive_weight() {
        let x = DenseMatrix::identity(2);
        assert!(weighted_pod(&x, Some(&[1.0, 0.0]), 1, 1e-10).is_err());
    }

    #[test]
    fn energy_criterion() {
        // cumulative σ²: 4/5 = 0.8, then 5/5 → two modes for 99%.
        assert_eq!(energy_truncation(&[2.0, 1.0, 1e-16], 0.99), 2);
        assert_eq!(energy_truncation(&[0.0, 0.0], 0.99), 0);
    }
}
