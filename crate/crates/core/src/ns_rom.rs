//! Subdomain-conservative velocity ROM for incompressible flow.
//!
//! The velocity basis `φ` is `Ω`-orthonormal and contains `Ω⁻¹ C` in its
//! span. A QR factorization of `(M φ)ᵀ` splits it into a divergence-free
//! part `φ₀` and a complement `φ⊥`; evolving only the `φ₀` coefficients
//! satisfies the mass equation exactly and removes the pressure, since
//! `φ₀ᵀ G = -(M φ₀)ᵀ = 0`.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{
    qr_full, qr_thin, svd, weighted_pod, Cholesky, CsrMatrix, DenseMatrix, DEFAULT_RANK_TOL,
};
use crate::mesh::{build_aggregation_matrix, SubdomainDecomposition};
use crate::ns_fom::{BodyForce, NsOperators, StaggeredGrid2D};
use crate::rom::basis::normalize_column_signs;
use crate::rom::cop::{Perturbation, FEASIBILITY_TOL};

/// Cells of one subdomain, listed separately for the `u` and `v` faces
/// (indices `j * nx + i` within each component).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MomentumSubdomain {
    pub u: Vec<usize>,
    pub v: Vec<usize>,
}

/// Componentwise momentum aggregation matrix: one column per nonempty
/// component of each subdomain, weighted by the face-cell volumes.
pub fn momentum_aggregation_matrix(
    ops: &NsOperators,
    subdomains: &[MomentumSubdomain],
) -> Result<DenseMatrix> {
    let np = ops.grid().n_pressure();
    let mut sets = Vec::new();
    for s in subdomains {
        for (indices, shift) in [(&s.u, 0), (&s.v, np)] {
            if indices.is_empty() {
                continue;
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= np) {
                return Err(Error::IndexOutOfRange {
                    subdomain: sets.len(),
                    index: bad,
                    len: np,
                });
            }
            sets.push(indices.iter().map(|i| i + shift).collect());
        }
    }
    let decomp = SubdomainDecomposition::new(sets, ops.grid().n_velocity())?;
    Ok(build_aggregation_matrix(ops.omega(), &decomp)?.into_matrix())
}

/// Cells `(i, j)` with `i0 <= i < i1`, `j0 <= j < j1`.
pub fn rectangle_cells(grid: &StaggeredGrid2D, i: (usize, usize), j: (usize, usize)) -> Vec<usize> {
    let mut out = Vec::new();
    for jj in j.0..j.1.min(grid.ny) {
        for ii in i.0..i.1.min(grid.nx) {
            out.push(jj * grid.nx + ii);
        }
    }
    out
}

/// `φ = [Q̃₁ W]` with `φᵀ Ω φ = I`.
#[derive(Clone, Debug)]
pub struct WeightedBasis {
    pub phi: DenseMatrix,
    pub omega: Vec<f64>,
    /// `Ω^{-1/2} Q₁`, spanning `Ω⁻¹ C`.
    pub q1_tilde: DenseMatrix,
    /// Leading modes of the deflated snapshots.
    pub w: DenseMatrix,
    /// Singular values of the deflated, weighted snapshots `X̂`.
    pub singular_values: Vec<f64>,
}

impl WeightedBasis {
    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn constraint_rank(&self) -> usize {
        self.q1_tilde.cols()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        self.phi.orthonormality_residual(Some(&self.omega))
    }

    /// `‖Q̃₁ᵀ Ω W‖_max`.
    pub fn cross_orthogonality(&self) -> Result<f64> {
        if self.q1_tilde.cols() == 0 || self.w.cols() == 0 {
            return Ok(0.0);
        }
        Ok(self.q1_tilde.tr_matmul(&self.w.scale_rows(&self.omega)?)?.max_abs())
    }

    /// `‖C − Ω φ φᵀ C‖_max`.
    pub fn inclusion_residual(&self, c: &DenseMatrix) -> Result<f64> {
        let coeffs = self.phi.tr_matmul(c)?;
        let back = self.phi.matmul(&coeffs)?.scale_rows(&self.omega)?;
        Ok(c.sub(&back)?.max_abs())
    }
}

fn sqrt_weights(omega: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(k) = omega.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "volume weight {k} is not strictly positive ({})",
            omega[k]
        )));
    }
    let s: Vec<f64> = omega.iter().map(|w| w.sqrt()).collect();
    let inv = s.iter().map(|v| 1.0 / v).collect();
    Ok((s, inv))
}

/// Five-step `Ω`-weighted constrained POD:
/// `Q̃₁ = Ω^{-1/2} Q₁` from the QR of `Ω^{-1/2} C`, deflation
/// `X̃ = (I − Q̃₁ Q̃₁ᵀ Ω) X`, SVD of `X̂ = Ω^{1/2} X̃`, back-scaling
/// `Ũ = Ω^{-1/2} Û` and truncation to `R_V − rank(C)` modes.
pub fn weighted_constrained_basis(
    x: &DenseMatrix,
    c: &DenseMatrix,
    omega: &[f64],
    r_v: usize,
) -> Result<WeightedBasis> {
    let n = x.rows();
    if c.rows() != n {
        return Err(Error::dim("weighted_constrained_basis C", n, c.rows()));
    }
    if omega.len() != n {
        return Err(Error::dim("weighted_constrained_basis Ω", n, omega.len()));
    }
    let (sqrt_w, inv_sqrt_w) = sqrt_weights(omega)?;
    let q1_tilde = if c.cols() == 0 {
        DenseMatrix::zeros(n, 0)
    } else {
        qr_thin(&c.scale_rows(&inv_sqrt_w)?, DEFAULT_RANK_TOL)?
            .q1()
            .scale_rows(&inv_sqrt_w)?
    };
    let hc = q1_tilde.cols();
    if r_v < hc {
        return Err(Error::InvalidArgument(format!(
            "R_V = {r_v} is smaller than rank(C) = {hc}"
        )));
    }
    let x_tilde = if hc == 0 {
        x.clone()
    } else {
        let coeffs = q1_tilde.tr_matmul(&x.scale_rows(omega)?)?;
        x.sub(&q1_tilde.matmul(&coeffs)?)?
    };
    let x_hat = x_tilde.scale_rows(&sqrt_w)?;
    let f = svd(&x_hat)?;
    let rank = crate::linalg::numerical_rank(&f.s, DEFAULT_RANK_TOL);
    let mut keep = r_v - hc;
    if keep > rank {
        warn!("deflated snapshots have rank {rank}; keeping {rank} of {keep} requested modes");
        keep = rank;
    }
    let mut w = f.u.columns_range(0, keep).scale_rows(&inv_sqrt_w)?;
    normalize_column_signs(&mut w);
    let phi = if hc == 0 {
        w.clone()
    } else if keep == 0 {
        q1_tilde.clone()
    } else {
        q1_tilde.hcat(&w)?
    };
    Ok(WeightedBasis {
        phi,
        omega: omega.to_vec(),
        q1_tilde,
        w,
        singular_values: f.s,
    })
}

/// Unconstrained `Ω`-weighted POD with `R_V` modes.
pub fn weighted_pod_velocity_basis(x: &DenseMatrix, omega: &[f64], r_v: usize) -> Result<WeightedBasis> {
    let modes = weighted_pod(x, Some(omega), r_v, DEFAULT_RANK_TOL)?;
    Ok(WeightedBasis {
        phi: modes.modes.clone(),
        omega: omega.to_vec(),
        q1_tilde: DenseMatrix::zeros(x.rows(), 0),
        w: modes.modes,
        singular_values: modes.singular_values,
    })
}

/// `(M φ)ᵀ = [Q₁ᴹ Q₂ᴹ] [R₁ᴹ; 0]`, `φ₀ = φ Q₂ᴹ`, `φ⊥ = φ Q₁ᴹ`.
#[derive(Clone, Debug)]
pub struct DivergenceFreeSplit {
    pub q1m: DenseMatrix,
    pub q2m: DenseMatrix,
    /// `r₁ x N_p`, in the original pressure ordering.
    pub r1m: DenseMatrix,
    pub phi0: DenseMatrix,
    pub phi_perp: DenseMatrix,
}

impl DivergenceFreeSplit {
    pub fn r1(&self) -> usize {
        self.q1m.cols()
    }

    pub fn r2(&self) -> usize {
        self.q2m.cols()
    }
}

pub fn divergence_free_split(phi: &DenseMatrix, m: &CsrMatrix) -> Result<DivergenceFreeSplit> {
    if phi.cols() == 0 {
        return Err(Error::InvalidArgument("empty velocity basis".into()));
    }
    let mphi = m.matmul_dense(phi)?;
    let qr = qr_full(&mphi.transpose(), DEFAULT_RANK_TOL)?;
    // Entries of Mφ are bounded by 4 |M|_max |φ|_max; columns of Mφᵀ have
    // N_p of them. The threshold sits well above roundoff at that scale.
    let m_max = m.triplets().iter().fold(0.0_f64, |a, t| a.max(t.2.abs()));
    let scale = 4.0 * m_max * phi.max_abs() * (m.rows() as f64).sqrt();
    let tau = FEASIBILITY_TOL * scale;
    let r = qr.r();
    let kmax = r.rows().min(r.cols());
    let r1 = (0..kmax).take_while(|&i| r[(i, i)].abs() > tau).count();
    let rv = phi.cols();
    let q = qr.q();
    let q1m = q.columns_range(0, r1);
    let q2m = q.columns_range(r1, rv);
    let perm = qr.perm();
    let mut r1m = DenseMatrix::zeros(r1, r.cols());
    for i in 0..r1 {
        for j in 0..r.cols() {
            r1m[(i, perm[j])] = r[(i, j)];
        }
    }
    Ok(DivergenceFreeSplit {
        phi0: phi.matmul(&q2m)?,
        phi_perp: phi.matmul(&q1m)?,
        q1m,
        q2m,
        r1m,
    })
}

/// `½ ‖a₂‖²`.
pub fn kinetic_energy(a2: &[f64]) -> f64 {
    0.5 * a2.iter().map(|x| x * x).sum::<f64>()
}

/// Pressure-free velocity ROM `da₂/dt = φ₀ᵀ F(φ₀ a₂, t)`, optionally with
/// the constrained-optimization perturbation for comparison runs.
pub struct VelocityRom<'a> {
    ops: &'a NsOperators,
    split: DivergenceFreeSplit,
    nu: f64,
    force: BodyForce,
    perturbation: Option<Perturbation>,
    sqrt_w: Vec<f64>,
    inv_sqrt_w: Vec<f64>,
    r1_gram: Option<Cholesky>,
}

impl<'a> VelocityRom<'a> {
    pub fn new(ops: &'a NsOperators, split: DivergenceFreeSplit, nu: f64, force: BodyForce) -> Result<Self> {
        if split.phi0.rows() != ops.grid().n_velocity() {
            return Err(Error::dim("VelocityRom basis", ops.grid().n_velocity(), split.phi0.rows()));
        }
        if !(nu >= 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity {nu} < 0")));
        }
        let (sqrt_w, inv_sqrt_w) = sqrt_weights(ops.omega())?;
        let r1_gram = if split.r1() == 0 {
            None
        } else {
            Some(Cholesky::new(&split.r1m.matmul(&split.r1m.transpose())?)?)
        };
        Ok(Self {
            ops,
            split,
            nu,
            force,
            perturbation: None,
            sqrt_w,
            inv_sqrt_w,
            r1_gram,
        })
    }

    /// Adds `F* = (ĈᵀΨ)⁺ [Ĉᵀ − ĈᵀΨΨᵀ] Ω^{-1/2} F` with `Ψ = Ω^{1/2} φ₀` and
    /// `Ĉ = Ω^{-1/2} C`, so that `Cᵀ(Ω φ₀ ȧ₂ − F) = 0` without a pressure
    /// contribution. Dependent constraint rows (for example two halves
    /// whose sum is the conserved total momentum) are accepted as long as
    /// the data stay consistent; `rhs` fails otherwise.
    pub fn with_perturbation(mut self, c: &DenseMatrix) -> Result<Self> {
        let psi = self.split.phi0.scale_rows(&self.sqrt_w)?;
        let c_hat = c.scale_rows(&self.inv_sqrt_w)?;
        let pert = Perturbation::new(&psi, &c_hat)?;
        self.perturbation = Some(pert);
        Ok(self)
    }

    pub fn split(&self) -> &DivergenceFreeSplit {
        &self.split
    }

    pub fn ops(&self) -> &NsOperators {
        self.ops
    }

    pub fn is_perturbed(&self) -> bool {
        self.perturbation.is_some()
    }

    pub fn reduced_dim(&self) -> usize {
        self.split.r2()
    }

    /// `V = φ₀ a₂`.
    pub fn lift(&self, a2: &[f64]) -> Result<Vec<f64>> {
        if a2.len() != self.reduced_dim() {
            return Err(Error::dim("VelocityRom::lift", self.reduced_dim(), a2.len()));
        }
        self.split.phi0.matvec(a2)
    }

    /// `a₂ = φ₀ᵀ Ω V`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let omega = self.ops.omega();
        if v.len() != omega.len() {
            return Err(Error::dim("VelocityRom::project", omega.len(), v.len()));
        }
        let wv: Vec<f64> = v.iter().zip(omega).map(|(a, b)| a * b).collect();
        self.split.phi0.tr_matvec(&wv)
    }

    fn full_rhs(&self, a2: &[f64], t: f64) -> Result<Vec<f64>> {
        let v = self.lift(a2)?;
        self.ops.convection_diffusion(&v, t, self.nu, &self.force)
    }

    pub fn rhs(&self, a2: &[f64], t: f64) -> Result<Vec<f64>> {
        let f = self.full_rhs(a2, t)?;
        self.reduce(&f)
    }

    fn reduce(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.split.phi0.tr_matvec(f)?;
        if let Some(p) = &self.perturbation {
            let f_hat: Vec<f64> = f.iter().zip(&self.inv_sqrt_w).map(|(a, b)| a * b).collect();
            let fs = p.apply_checked(&f_hat)?;
            out.iter_mut().zip(&fs).for_each(|(o, s)| *o += s);
        }
        Ok(out)
    }

    /// Minimum-norm multiplier `p̂` with `R₁ᴹ p̂ = −φ⊥ᵀ F`, which makes the
    /// full Galerkin system `φᵀ(Ω V̇ − F + G p̂) = 0` hold.
    pub fn pressure_multiplier(&self, f: &[f64]) -> Result<Vec<f64>> {
        let np = self.ops.grid().n_pressure();
        let Some(gram) = &self.r1_gram else {
            return Ok(vec![0.0; np]);
        };
        let rhs: Vec<f64> = self.split.phi_perp.tr_matvec(f)?.iter().map(|v| -v).collect();
        let y = gram.solve(&rhs)?;
        self.split.r1m.tr_matvec(&y)
    }

    /// Time-discrete momentum residual `Cᵀ(Ω (V₁ − V₀)/dt − F(V_mid) + G p̂)`
    /// over one implicit-midpoint step. The perturbed ROM carries no
    /// pressure, so `p̂ = 0` there.
    pub fn momentum_residual(
        &self,
        c: &DenseMatrix,
        a_old: &[f64],
        a_new: &[f64],
        t: f64,
        dt: f64,
    ) -> Result<Vec<f64>> {
        let mid: Vec<f64> = a_old.iter().zip(a_new).map(|(x, y)| 0.5 * (x + y)).collect();
        let f = self.full_rhs(&mid, t + 0.5 * dt)?;
        let v_old = self.lift(a_old)?;
        let v_new = self.lift(a_new)?;
        let omega = self.ops.omega();
        let mut r: Vec<f64> = (0..f.len())
            .map(|k| omega[k] * (v_new[k] - v_old[k]) / dt - f[k])
            .collect();
        if self.perturbation.is_none() {
            let p = self.pressure_multiplier(&f)?;
            let gp = self.ops.gradient(&p)?;
            r.iter_mut().zip(&gp).for_each(|(x, g)| *x += g);
        }
        c.tr_matvec(&r)
    }

    /// `‖M φ₀ a₂‖_∞`.
    pub fn mass_residual(&self, a2: &[f64]) -> Result<f64> {
        let v = self.lift(a2)?;
        Ok(crate::linalg::norm_inf(&self.ops.divergence(&v)?))
    }
}

/// Structural checks recorded when a velocity ROM is built.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsAudit {
    pub orthonormality: f64,
    pub inclusion: f64,
    pub divergence: f64,
    pub phi0_gradient: f64,
}

pub fn audit_velocity_basis(
    ops: &NsOperators,
    basis: &WeightedBasis,
    split: &DivergenceFreeSplit,
    c: &DenseMatrix,
) -> Result<NsAudit> {
    let divergence = ops.divergence_matrix().matmul_dense(&split.phi0)?.max_abs();
    // φ₀ᵀ G evaluated from G itself rather than from M.
    let g = ops.gradient_matrix();
    let mut phi0_gradient = 0.0_f64;
    for col in 0..split.phi0.cols() {
        let pc = g.tr_matvec(&split.phi0.column(col))?;
        phi0_gradient = phi0_gradient.max(crate::linalg::norm_inf(&pc));
    }
    Ok(NsAudit {
        orthonormality: basis.orthonormality_residual(),
        inclusion: basis.inclusion_residual(c)?,
        divergence,
        phi0_gradient,
    })
}
