//! Constrained-optimization (perturbed Galerkin) ROM.
//!
//! Minimizing `‖Φ b − f‖₂` subject to `Cᵀ(Φ b − f) = 0` gives the Galerkin
//! velocity plus the perturbation
//! `f* = (CᵀΦ)⁺ [Cᵀ − CᵀΦΦᵀ] f`. [`cop_solve`] solves the constrained
//! least-squares problem directly by the null-space method and serves as an
//! independent check of the perturbation formula.

use crate::error::{Error, Result};
use crate::fom::FomSystem;
use crate::linalg::qr::{qr_thin_unpivoted, solve_upper, solve_upper_transposed};
use crate::linalg::{norm_inf, numerical_rank, pseudoinverse, qr_full, svd, DenseMatrix};
use crate::rom::basis::ReducedBasis;
use crate::rom::galerkin::GalerkinRom;

/// Relative tolerance for rank and feasibility decisions.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Cached factors `(CᵀΦ)⁺` and `Cᵀ − CᵀΦΦᵀ` for fixed `Φ`, `C`.
#[derive(Clone, Debug)]
pub struct Perturbation {
    ctphi: DenseMatrix,
    pinv: DenseMatrix,
    bracket: DenseMatrix,
    rank: usize,
    n_constraints: usize,
}

impl Perturbation {
    pub fn new(phi: &DenseMatrix, c: &DenseMatrix) -> Result<Self> {
        if phi.rows() != c.rows() {
            return Err(Error::dim("Perturbation", phi.rows(), c.rows()));
        }
        let (p, k) = (phi.cols(), c.cols());
        if k == 0 || p == 0 {
            return Ok(Self {
                ctphi: DenseMatrix::zeros(k, p),
                pinv: DenseMatrix::zeros(p, k),
                bracket: DenseMatrix::zeros(k, phi.rows()),
                rank: 0,
                n_constraints: k,
            });
        }
        let ctphi = c.tr_matmul(phi)?;
        let rank = numerical_rank(&svd(&ctphi)?.s, FEASIBILITY_TOL);
        let pinv = pseudoinverse(&ctphi, FEASIBILITY_TOL)?;
        let bracket = c.transpose().sub(&ctphi.matmul(&phi.transpose())?)?;
        Ok(Self {
            ctphi,
            pinv,
            bracket,
            rank,
            n_constraints: k,
        })
    }

    /// `rank(CᵀΦ)`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Whether the constraints are satisfiable for every `f`, i.e. `CᵀΦ`
    /// has full row rank. Otherwise [`Perturbation::apply_checked`] decides
    /// feasibility per right-hand side.
    pub fn is_feasible(&self) -> bool {
        self.rank == self.n_constraints
    }

    pub fn pinv(&self) -> &DenseMatrix {
        &self.pinv
    }

    pub fn bracket(&self) -> &DenseMatrix {
        &self.bracket
    }

    /// `f* = (CᵀΦ)⁺ [Cᵀ − CᵀΦΦᵀ] f`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        let inner = self.bracket.matvec(f)?;
        self.pinv.matvec(&inner)
    }

    /// [`Perturbation::apply`], failing when `CᵀΦ` is rank deficient and the
    /// constraint right-hand side leaves its range (dependent constraint
    /// rows with inconsistent data).
    pub fn apply_checked(&self, f: &[f64]) -> Result<Vec<f64>> {
        let inner = self.bracket.matvec(f)?;
        let fs = self.pinv.matvec(&inner)?;
        if !self.is_feasible() {
            let back = self.ctphi.matvec(&fs)?;
            let scale = norm_inf(&inner).max(self.ctphi.max_abs() * norm_inf(&fs));
            let rows: Vec<usize> = (0..inner.len())
                .filter(|&i| (back[i] - inner[i]).abs() > FEASIBILITY_TOL * scale)
                .collect();
            if !rows.is_empty() {
                return Err(Error::Infeasible { rows });
            }
        }
        Ok(fs)
    }
}

/// `da/dt = Φᵀ f(Φ a, t) + f*(Φ a, t)`.
pub struct PerturbedRom<'a, F: FomSystem + ?Sized> {
    galerkin: GalerkinRom<'a, F>,
    perturbation: Perturbation,
}

impl<'a, F: FomSystem + ?Sized> PerturbedRom<'a, F> {
    pub fn new(fom: &'a F, basis: ReducedBasis, c: &DenseMatrix) -> Result<Self> {
        if basis.weights().is_some() {
            return Err(Error::InvalidArgument(
                "the perturbed ROM uses the Euclidean inner product".into(),
            ));
        }
        let perturbation = Perturbation::new(basis.matrix(), c)?;
        Ok(Self {
            galerkin: GalerkinRom::new(fom, basis)?,
            perturbation,
        })
    }

    pub fn galerkin(&self) -> &GalerkinRom<'a, F> {
        &self.galerkin
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn is_feasible(&self) -> bool {
        self.perturbation.is_feasible()
    }

    pub fn reduced_dim(&self) -> usize {
        self.galerkin.reduced_dim()
    }

    pub fn lift(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.galerkin.lift(a)
    }

    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.galerkin.project(u)
    }

    pub fn rhs(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        let u = self.galerkin.lift(a)?;
        let f = self.galerkin.fom().rhs(&u, t)?;
        let mut out = self.galerkin.basis().project(&f)?;
        let fstar = self.perturbation.apply_checked(&f)?;
        out.iter_mut().zip(&fstar).for_each(|(o, s)| *o += s);
        Ok(out)
    }
}

/// `f*(Φ a, t)` for a perturbed ROM.
pub fn perturbation_term<F: FomSystem + ?Sized>(
    pr: &PerturbedRom<'_, F>,
    a: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    let u = pr.lift(a)?;
    let f = pr.galerkin().fom().rhs(&u, t)?;
    pr.perturbation().apply(&f)
}

/// Solves `min ‖Φ b − f‖₂` subject to `Cᵀ(Φ b − f) = 0` by the null-space
/// method.
///
/// With `A = CᵀΦ` and `d = Cᵀf`, a pivoted QR `Aᵀ P = Q R` splits `b` into
/// a component `Q₁y₁` fixed by the independent constraint rows and a free
/// component `Q₂y₂` in the null space of `A`, which is found by an
/// unconstrained least-squares solve.
pub fn cop_solve(phi: &DenseMatrix, c: &DenseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let n = phi.rows();
    if c.rows() != n {
        return Err(Error::dim("cop_solve C", n, c.rows()));
    }
    if f.len() != n {
        return Err(Error::dim("cop_solve f", n, f.len()));
    }
    let p = phi.cols();
    if p == 0 {
        return Err(Error::InvalidArgument("cop_solve with an empty basis".into()));
    }
    if c.cols() == 0 {
        return least_squares(phi, f);
    }
    let a = c.tr_matmul(phi)?;
    let d = c.tr_matvec(f)?;
    let qr = qr_full(&a.transpose(), FEASIBILITY_TOL)?;
    let r = qr.r();
    let kmax = r.rows().min(r.cols());
    let dmax = (0..kmax).fold(0.0_f64, |m, i| m.max(r[(i, i)].abs()));
    let rank = qr.rank();

    // Augmented-rank test at the same absolute threshold.
    let aug = a.hcat(&DenseMatrix::from_columns(&[d.clone()])?)?;
    let aug_qr = qr_full(&aug.transpose(), FEASIBILITY_TOL)?;
    let ar = aug_qr.r();
    let threshold = FEASIBILITY_TOL * dmax.max(f64::MIN_POSITIVE);
    let aug_rank = (0..ar.rows().min(ar.cols()))
        .filter(|&i| ar[(i, i)].abs() > threshold)
        .count();
    if aug_rank > rank {
        return Err(Error::Infeasible {
            rows: violated_rows(&a, &d)?,
        });
    }

    let perm = qr.perm();
    let q = qr.q();
    let y1 = if rank == 0 {
        Vec::new()
    } else {
        let r11 = DenseMatrix::from_fn(rank, rank, |i, j| r[(i, j)]);
        let rhs: Vec<f64> = perm[..rank].iter().map(|&i| d[i]).collect();
        solve_upper_transposed(&r11, &rhs)?
    };
    let q1 = q.columns_range(0, rank);
    let mut b = q1.matvec(&y1)?;
    if rank < p {
        let z = q.columns_range(rank, p);
        let phi_z = phi.matmul(&z)?;
        let fixed = phi.matvec(&b)?;
        let rhs: Vec<f64> = f.iter().zip(&fixed).map(|(x, y)| x - y).collect();
        let y2 = least_squares(&phi_z, &rhs)?;
        let free = z.matvec(&y2)?;
        b.iter_mut().zip(&free).for_each(|(x, y)| *x += y);
    }
    Ok(b)
}

fn least_squares(a: &DenseMatrix, f: &[f64]) -> Result<Vec<f64>> {
    let qr = qr_thin_unpivoted(a, FEASIBILITY_TOL)?;
    if qr.rank() < a.cols() {
        return Err(Error::InvalidArgument(
            "least-squares matrix is rank deficient".into(),
        ));
    }
    let qtf = qr.q().tr_matvec(f)?;
    let k = a.cols();
    let r = DenseMatrix::from_fn(k, k, |i, j| qr.r()[(i, j)]);
    solve_upper(&r, &qtf[..k])
}

fn violated_rows(a: &DenseMatrix, d: &[f64]) -> Result<Vec<usize>> {
    let y = pseudoinverse(a, FEASIBILITY_TOL)?.matvec(d)?;
    let ay = a.matvec(&y)?;
    let scale = norm_inf(d).max(1.0);
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| (ay[i] - d[i]).abs() > FEASIBILITY_TOL * scale)
        .collect();
    Ok(if rows.is_empty() {
        (0..d.len()).collect()
    } else {
        rows
    })
}
