//! Freezing reduced coefficients of time-invariant subdomain quantities.
//!
//! If `cᵀ f(u, t) ≡ 0` for a constraint column `c` (for example the whole
//! domain of a periodic unforced conservation law), the quantity `cᵀu` is
//! constant. Rotating the basis so that these quantities are carried by the
//! leading coefficients lets those coefficients be pinned to their initial
//! values and moved into a constant offset `u⁰`.

use crate::error::{Error, Result};
use crate::linalg::{qr_full, DenseMatrix, LuFactorization, DEFAULT_RANK_TOL};
use crate::rom::basis::ReducedBasis;

const INCLUSION_TOL: f64 = 1e-10;

/// Per-constraint flags plus the invariant values `cᵀu(0)` for the flagged
/// columns.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantSpec {
    pub flags: Vec<bool>,
    pub pinned_values: Vec<f64>,
}

impl InvariantSpec {
    /// No frozen quantities.
    pub fn none(n_constraints: usize) -> Self {
        Self {
            flags: vec![false; n_constraints],
            pinned_values: Vec::new(),
        }
    }

    /// Pins the flagged subdomain averages of `u0`.
    pub fn from_initial_condition(flags: Vec<bool>, c: &DenseMatrix, u0: &[f64]) -> Result<Self> {
        if flags.len() != c.cols() {
            return Err(Error::dim("InvariantSpec flags", c.cols(), flags.len()));
        }
        let averages = c.tr_matvec(u0)?;
        let pinned_values = flags
            .iter()
            .zip(&averages)
            .filter(|(f, _)| **f)
            .map(|(_, v)| *v)
            .collect();
        Ok(Self { flags, pinned_values })
    }

    /// Builds flags from constraint indices, rejecting indices `>= n`.
    pub fn flags_from_indices(indices: &[usize], n_constraints: usize) -> Result<Vec<bool>> {
        let mut flags = vec![false; n_constraints];
        for &k in indices {
            if k >= n_constraints {
                return Err(Error::InvalidArgument(format!(
                    "invariant flag {k} out of range for {n_constraints} constraints"
                )));
            }
            flags[k] = true;
        }
        Ok(flags)
    }

    pub fn n_frozen(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

/// Basis split `u = u⁰ + Φ_active a_active` with `u⁰ = Φ_frozen c_frozen`.
#[derive(Clone, Debug)]
pub struct InvariantPartition {
    pub active: ReducedBasis,
    pub frozen: DenseMatrix,
    pub frozen_coeffs: Vec<f64>,
    pub offset: Vec<f64>,
    pub active_initial: Vec<f64>,
    /// Orthogonal `H x H` rotation: rotated coefficients are `rotationᵀ a`.
    pub rotation: DenseMatrix,
}

impl InvariantPartition {
    /// Recovers the unrotated coefficients `a` of the original basis.
    pub fn full_coefficients(&self, active: &[f64]) -> Result<Vec<f64>> {
        let mut rotated = self.frozen_coeffs.clone();
        rotated.extend_from_slice(active);
        self.rotation.matvec(&rotated)
    }
}

/// Splits `basis` into frozen and active parts for the flagged constraints.
///
/// The flagged columns `C_inv` must lie in `span(Φ)`. With
/// `Φᵀ C_inv = Q₁ R₁` the rotated basis `Φ [Q₁ Q₂]` carries `C_invᵀ u` in
/// its first `m` coefficients, which are fixed by `R₁ᵀ c = pinned_values`.
pub fn apply_invariant_offsets(
    basis: &ReducedBasis,
    c: &DenseMatrix,
    spec: &InvariantSpec,
    a0: &[f64],
) -> Result<InvariantPartition> {
    let h = basis.dim();
    if a0.len() != h {
        return Err(Error::dim("apply_invariant_offsets a0", h, a0.len()));
    }
    if spec.flags.len() != c.cols() {
        return Err(Error::InvalidArgument(format!(
            "invariant flags cover {} constraints but C has {}",
            spec.flags.len(),
            c.cols()
        )));
    }
    let m = spec.n_frozen();
    if spec.pinned_values.len() != m {
        return Err(Error::dim("InvariantSpec pinned values", m, spec.pinned_values.len()));
    }
    if m == 0 {
        return Ok(InvariantPartition {
            active: basis.clone(),
            frozen: DenseMatrix::zeros(basis.n_full(), 0),
            frozen_coeffs: Vec::new(),
            offset: vec![0.0; basis.n_full()],
            active_initial: a0.to_vec(),
            rotation: DenseMatrix::identity(h),
        });
    }
    if basis.weights().is_some() {
        return Err(Error::InvalidArgument(
            "invariant freezing requires a Euclidean-orthonormal basis".into(),
        ));
    }
    let idx: Vec<usize> = (0..c.cols()).filter(|&k| spec.flags[k]).collect();
    let c_inv = c.select_columns(&idx);
    let incl = basis.inclusion_residual(&c_inv)?;
    if incl > INCLUSION_TOL {
        return Err(Error::InvalidArgument(format!(
            "flagged constraints are not contained in the basis span (residual {incl:e})"
        )));
    }
    let phi = basis.matrix();
    let b = phi.tr_matmul(&c_inv)?;
    let qr = qr_full(&b, DEFAULT_RANK_TOL)?;
    if qr.rank() < m {
        return Err(Error::InvalidArgument(format!(
            "flagged constraints are linearly dependent (rank {} < {m})",
            qr.rank()
        )));
    }
    let rotation = qr.q().clone();
    let rotated = phi.matmul(&rotation)?;
    let frozen = rotated.columns_range(0, m);
    let active_matrix = rotated.columns_range(m, h);

    // C_invᵀ Φ a = R₁ᵀ (Q₁ᵀ a), with R₁ in original column order.
    let r1 = qr.r1_unpermuted();
    let frozen_coeffs = LuFactorization::new(&r1.transpose())?.solve(&spec.pinned_values)?;
    let offset = frozen.matvec(&frozen_coeffs)?;
    let rotated_a0 = rotation.tr_matvec(a0)?;
    let active = ReducedBasis::new(
        active_matrix,
        None,
        basis.kind(),
        basis.constraint_rank().saturating_sub(m),
    )?;
    Ok(InvariantPartition {
        active,
        frozen,
        frozen_coeffs,
        offset,
        active_initial: rotated_a0[m..].to_vec(),
        rotation,
    })
}
