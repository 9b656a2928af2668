//! Galerkin projection of a FOM onto a reduced basis.

use crate::error::{Error, Result};
use crate::fom::FomSystem;
use crate::linalg::DenseMatrix;
use crate::rom::basis::ReducedBasis;

/// `da/dt = Φᵀ W f(u⁰ + Φ a, t)`, with the offset `u⁰` zero unless
/// invariant coefficients have been frozen.
pub struct GalerkinRom<'a, F: FomSystem + ?Sized> {
    fom: &'a F,
    basis: ReducedBasis,
    offset: Option<Vec<f64>>,
}

impl<'a, F: FomSystem + ?Sized> GalerkinRom<'a, F> {
    pub fn new(fom: &'a F, basis: ReducedBasis) -> Result<Self> {
        if basis.n_full() != fom.dim() {
            return Err(Error::dim("GalerkinRom basis", fom.dim(), basis.n_full()));
        }
        Ok(Self {
            fom,
            basis,
            offset: None,
        })
    }

    pub fn with_offset(mut self, offset: Vec<f64>) -> Result<Self> {
        if offset.len() != self.fom.dim() {
            return Err(Error::dim("GalerkinRom offset", self.fom.dim(), offset.len()));
        }
        self.offset = Some(offset);
        Ok(self)
    }

    pub fn basis(&self) -> &ReducedBasis {
        &self.basis
    }

    pub fn fom(&self) -> &'a F {
        self.fom
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.dim()
    }

    /// `u⁰ + Φ a`.
    pub fn lift(&self, a: &[f64]) -> Result<Vec<f64>> {
        if a.len() != self.reduced_dim() {
            return Err(Error::dim("GalerkinRom::lift", self.reduced_dim(), a.len()));
        }
        let mut u = self.basis.lift(a)?;
        if let Some(off) = &self.offset {
            u.iter_mut().zip(off).for_each(|(x, o)| *x += o);
        }
        Ok(u)
    }

    /// `Φᵀ W (u − u⁰)`.
    pub fn project(&self, u: &[f64]) -> Result<Vec<f64>> {
        match &self.offset {
            Some(off) => {
                if u.len() != off.len() {
                    return Err(Error::dim("GalerkinRom::project", off.len(), u.len()));
                }
                let d: Vec<f64> = u.iter().zip(off).map(|(a, b)| a - b).collect();
                self.basis.project(&d)
            }
            None => self.basis.project(u),
        }
    }

    pub fn rhs(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        let u = self.lift(a)?;
        let f = self.fom.rhs(&u, t)?;
        self.basis.project(&f)
    }
}

/// Evaluates `Φᵀ W f(Φ a, t)` for a built ROM.
pub fn galerkin_rhs<F: FomSystem + ?Sized>(rom: &GalerkinRom<'_, F>, a: &[f64], t: f64) -> Result<Vec<f64>> {
    rom.rhs(a, t)
}

/// Subdomain residual `Cᵀ (dudt − f(u, t))`.
pub fn subdomain_residual<F: FomSystem + ?Sized>(
    c: &DenseMatrix,
    fom: &F,
    u: &[f64],
    dudt: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    if c.rows() != fom.dim() {
        return Err(Error::dim("subdomain_residual C", fom.dim(), c.rows()));
    }
    if u.len() != fom.dim() {
        return Err(Error::dim("subdomain_residual u", fom.dim(), u.len()));
    }
    let r = fom.residual(dudt, u, t)?;
    c.tr_matvec(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{BurgersFom, LinearFom};
    use crate::linalg::{qr_full, DEFAULT_RANK_TOL};
    use crate::mesh::{mesh_aggregation_matrix, Mesh1D, SubdomainDecomposition};
    use crate::rom::basis::{pod_basis, BasisKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn full_orthogonal_basis_is_a_similarity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fom = BurgersFom::new(Mesh1D::uniform(10, 1.0).unwrap(), 0.05, None).unwrap();
        let q = qr_full(
            &DenseMatrix::from_fn(10, 10, |_, _| rng.gen_range(-1.0..1.0)),
            DEFAULT_RANK_TOL,
        )
        .unwrap()
        .q()
        .clone();
        let basis = ReducedBasis::new(q, None, BasisKind::Pod, 0).unwrap();
        let rom = GalerkinRom::new(&fom, basis).unwrap();
        let a = random_vec(10, &mut rng);
        let lifted = rom.lift(&rom.rhs(&a, 0.0).unwrap()).unwrap();
        let direct = fom.rhs(&rom.lift(&a).unwrap(), 0.0).unwrap();
        for (x, y) in lifted.iter().zip(&direct) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn eigenvector_basis_gives_scalar_ode() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let fom = LinearFom::new(a).unwrap();
        let s = 0.5_f64.sqrt();
        let basis = ReducedBasis::new(
            DenseMatrix::from_columns(&[vec![s, s]]).unwrap(),
            None,
            BasisKind::Pod,
            0,
        )
        .unwrap();
        let rom = GalerkinRom::new(&fom, basis).unwrap();
        let r = galerkin_rhs(&rom, &[0.7], 0.0).unwrap();
        assert!((r[0] - 3.0 * 0.7).abs() < 1e-14);
        assert!(rom.rhs(&[0.7, 0.1], 0.0).is_err());
    }

    #[test]
    fn matches_normal_equation_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fom = BurgersFom::new(Mesh1D::uniform(24, 1.0).unwrap(), 0.01, None).unwrap();
        let x = DenseMatrix::from_fn(24, 8, |_, _| rng.gen_range(-1.0..1.0));
        let basis = pod_basis(&x, 5).unwrap();
        let phi = basis.matrix().clone();
        let rom = GalerkinRom::new(&fom, basis).unwrap();
        let a = random_vec(5, &mut rng);
        let f = fom.rhs(&rom.lift(&a).unwrap(), 0.0).unwrap();
        // Normal equations ΦᵀΦ b = Φᵀ f, solved without assuming orthonormality.
        let gram = phi.tr_matmul(&phi).unwrap();
        let b = crate::linalg::LuFactorization::new(&gram)
            .unwrap()
            .solve(&phi.tr_matvec(&f).unwrap())
            .unwrap();
        let g = rom.rhs(&a, 0.0).unwrap();
        for (x, y) in g.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fom_trajectory_has_zero_subdomain_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fom = BurgersFom::new(Mesh1D::uniform(16, 1.0).unwrap(), 0.02, None).unwrap();
        let d = SubdomainDecomposition::new(vec![(0..5).collect(), (5..16).collect()], 16).unwrap();
        let c = mesh_aggregation_matrix(fom.mesh(), &d).unwrap();
        let u = random_vec(16, &mut rng);
        let f = fom.rhs(&u, 0.0).unwrap();
        let r = subdomain_residual(c.matrix(), &fom, &u, &f, 0.0).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-14));
        assert!(subdomain_residual(c.matrix(), &fom, &u[..3], &f, 0.0).is_err());
    }

    #[test]
    fn offset_shifts_lift_and_projection() {
        let fom = LinearFom::new(DenseMatrix::identity(3)).unwrap();
        let basis = ReducedBasis::new(
            DenseMatrix::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap(),
            None,
            BasisKind::Pod,
            0,
        )
        .unwrap();
        let rom = GalerkinRom::new(&fom, basis)
            .unwrap()
            .with_offset(vec![0.0, 2.0, 0.0])
            .unwrap();
        assert_eq!(rom.lift(&[1.5]).unwrap(), vec![1.5, 2.0, 0.0]);
        assert_eq!(rom.project(&[1.5, 2.0, 0.0]).unwrap(), vec![1.5]);
    }
}
