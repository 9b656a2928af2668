//! Full-order conservation-law models `du/dt = f(u, t)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mesh::Mesh1D;

/// A semi-discrete conservation law over cell averages.
pub trait FomSystem: Sync {
    fn dim(&self) -> usize;

    /// Volume of each cell.
    fn volumes(&self) -> &[f64];

    /// The right-hand side `f(u, t)`: net flux plus sources per cell,
    /// divided by the cell volume.
    fn rhs(&self, u: &[f64], t: f64) -> Result<Vec<f64>>;

    /// `r(v, w, t) = v - f(w, t)`.
    fn residual(&self, v: &[f64], w: &[f64], t: f64) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::dim("residual", self.dim(), v.len()));
        }
        let f = self.rhs(w, t)?;
        Ok(v.iter().zip(&f).map(|(a, b)| a - b).collect())
    }
}

/// Source term `s(x, t)` evaluated at cell centers.
pub type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Periodic viscous Burgers equation `u_t + (u²/2)_x = ν u_xx + s`.
///
/// Face fluxes use the energy-conserving cubic mean
/// `(u_L² + u_L u_R + u_R²)/6` for convection and a central difference for
/// diffusion.
#[derive(Clone)]
pub struct BurgersFom {
    mesh: Mesh1D,
    h: f64,
    viscosity: f64,
    source: Option<SourceFn>,
    centers: Vec<f64>,
}

impl fmt::Debug for BurgersFom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BurgersFom")
            .field("n_cells", &self.mesh.n_cells())
            .field("h", &self.h)
            .field("viscosity", &self.viscosity)
            .field("source", &self.source.is_some())
            .finish()
    }
}

impl BurgersFom {
    pub fn new(mesh: Mesh1D, viscosity: f64, source: Option<SourceFn>) -> Result<Self> {
        if !(viscosity >= 0.0) {
            return Err(Error::InvalidArgument(format!("viscosity {viscosity} < 0")));
        }
        let h = mesh.cell_volumes()[0];
        if mesh
            .cell_volumes()
            .iter()
            .any(|&v| (v - h).abs() > 1e-12 * h)
        {
            return Err(Error::InvalidArgument(
                "BurgersFom requires a uniform mesh".into(),
            ));
        }
        let centers = mesh.cell_centers();
        Ok(Self {
            mesh,
            h,
            viscosity,
            source,
            centers,
        })
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn viscosity(&self) -> f64 {
        self.viscosity
    }

    pub fn cell_centers(&self) -> &[f64] {
        &self.centers
    }

    /// `g[j]` is the flux through the face between cells `j` and `j+1`
    /// (periodic).
    pub fn face_fluxes(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if u.len() != n {
            return Err(Error::dim("BurgersFom::face_fluxes", n, u.len()));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("BurgersFom state"));
        }
        Ok((0..n)
            .map(|j| {
                let a = u[j];
                let b = u[(j + 1) % n];
                (a * a + a * b + b * b) / 6.0 - self.viscosity * (b - a) / self.h
            })
            .collect())
    }
}

impl FomSystem for BurgersFom {
    fn dim(&self) -> usize {
        self.mesh.n_cells()
    }

    fn volumes(&self) -> &[f64] {
        self.mesh.cell_volumes()
    }

    fn rhs(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        let g = self.face_fluxes(u)?;
        let n = g.len();
        Ok((0..n)
            .map(|j| {
                let west = g[(j + n - 1) % n];
                let s = self.source.as_ref().map_or(0.0, |s| s(self.centers[j], t));
                -(g[j] - west) / self.h + s
            })
            .collect())
    }
}

/// Linear model `f(u) = A u`; handy for checking projection identities.
#[derive(Clone, Debug)]
pub struct LinearFom {
    a: DenseMatrix,
    volumes: Vec<f64>,
}

impl LinearFom {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::dim("LinearFom", a.rows(), a.cols()));
        }
        let volumes = vec![1.0; a.rows()];
        Ok(Self { a, volumes })
    }
}

impl FomSystem for LinearFom {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    fn rhs(&self, u: &[f64], _t: f64) -> Result<Vec<f64>> {
        self.a.matvec(u)
    }
}
