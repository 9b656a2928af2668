//! Dense linear-algebra kernel.

pub mod dense;
pub mod lu;
pub mod pod;
pub mod qr;
pub mod sparse;
pub mod svd;

pub use dense::{axpy, dot, norm2, norm_inf, sub_vec, DenseMatrix};
pub use lu::{Cholesky, LuFactorization};
pub use pod::{energy_truncation, pod, weighted_pod, PodModes};
pub use qr::{qr_full, qr_thin, QrFactorization, DEFAULT_RANK_TOL};
pub use sparse::CsrMatrix;
pub use svd::{numerical_rank, pseudoinverse, svd, svd_with, SvdFactorization};

/// Max-norm distance between the orthogonal projectors onto `span(a)` and
/// `span(b)` (both assumed orthonormal in the weighted inner product).
pub fn projector_distance(a: &DenseMatrix, b: &DenseMatrix, weights: Option<&[f64]>) -> f64 {
    let proj = |m: &DenseMatrix| {
        let wm = match weights {
            Some(w) => m.scale_rows(w).expect("weight length"),
            None => m.clone(),
        };
        m.matmul(&wm.transpose()).expect("shapes agree")
    };
    proj(a).sub(&proj(b)).expect("same size").max_abs()
}
