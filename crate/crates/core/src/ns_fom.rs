//! Energy-conserving staggered-grid finite-volume discretization of the
//! periodic incompressible Navier-Stokes equations
//!
//! ```text
//! M V = 0,    Ω dV/dt = F(V, t) - G p
//! ```
//!
//! Velocity unknowns are ordered `[u; v]`: `u(i, j)` lives on the right face
//! of pressure cell `(i, j)`, `v(i, j)` on its top face. Both components are
//! stored row by row (`j * nx + i`).

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, Cholesky, CsrMatrix, DenseMatrix};
use crate::par::{self, Exec};

/// Grids at or above this many pressure cells use conjugate gradients.
pub const DENSE_POISSON_LIMIT: usize = 64 * 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaggeredGrid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

impl StaggeredGrid2D {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidArgument(format!(
                "staggered grid needs at least 3x3 cells, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidArgument(format!("domain size {lx}x{ly}")));
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        })
    }

    pub fn n_pressure(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_velocity(&self) -> usize {
        2 * self.nx * self.ny
    }

    #[inline]
    fn wrap(i: isize, n: usize) -> usize {
        i.rem_euclid(n as isize) as usize
    }

    #[inline]
    pub fn p_idx(&self, i: isize, j: isize) -> usize {
        Self::wrap(j, self.ny) * self.nx + Self::wrap(i, self.nx)
    }

    #[inline]
    pub fn u_idx(&self, i: isize, j: isize) -> usize {
        self.p_idx(i, j)
    }

    #[inline]
    pub fn v_idx(&self, i: isize, j: isize) -> usize {
        self.n_pressure() + self.p_idx(i, j)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    /// Location of velocity unknown `k` and whether it is a `u` unknown.
    pub fn face_position(&self, k: usize) -> (f64, f64, bool) {
        let np = self.n_pressure();
        let is_u = k < np;
        let local = if is_u { k } else { k - np };
        let (i, j) = (local % self.nx, local / self.nx);
        if is_u {
            ((i as f64 + 1.0) * self.dx, (j as f64 + 0.5) * self.dy, true)
        } else {
            ((i as f64 + 0.5) * self.dx, (j as f64 + 1.0) * self.dy, false)
        }
    }
}

/// Body force `(x, y, t) -> (f_x, f_y)` per unit volume.
pub type ForceFn = Arc<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone, Default)]
pub struct BodyForce(Option<ForceFn>);

impl BodyForce {
    pub fn none() -> Self {
        Self(None)
    }

    pub fn new(f: ForceFn) -> Self {
        Self(Some(f))
    }

    pub fn is_none(&self) -> bool {
        self.0.is_none()
    }

    fn eval(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        self.0.as_ref().map_or((0.0, 0.0), |f| f(x, y, t))
    }
}

impl fmt::Debug for BodyForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BodyForce({})", if self.0.is_some() { "fn" } else { "none" })
    }
}

enum PoissonSolver {
    Dense { chol: Cholesky },
    ConjugateGradient,
}

/// Divergence `M`, gradient `G = -Mᵀ` and finite-volume sizes `Ω`.
pub struct NsOperators {
    grid: StaggeredGrid2D,
    m: CsrMatrix,
    g: CsrMatrix,
    omega: Vec<f64>,
    poisson: OnceLock<Result<PoissonSolver>>,
}

impl fmt::Debug for NsOperators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NsOperators").field("grid", &self.grid).finish()
    }
}

pub fn build_operators(grid: StaggeredGrid2D) -> Result<NsOperators> {
    let grid = StaggeredGrid2D::new(grid.nx, grid.ny, grid.lx, grid.ly)?;
    let (np, nv) = (grid.n_pressure(), grid.n_velocity());
    // One stencil table: net outflux of pressure cell (i, j).
    let mut stencil = Vec::with_capacity(4 * np);
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let row = grid.p_idx(i, j);
            stencil.push((row, grid.u_idx(i, j), grid.dy));
            stencil.push((row, grid.u_idx(i - 1, j), -grid.dy));
            stencil.push((row, grid.v_idx(i, j), grid.dx));
            stencil.push((row, grid.v_idx(i, j - 1), -grid.dx));
        }
    }
    let m = CsrMatrix::from_triplets(np, nv, &stencil)?;
    let gradient: Vec<_> = stencil.iter().map(|&(r, c, v)| (c, r, -v)).collect();
    let g = CsrMatrix::from_triplets(nv, np, &gradient)?;
    let omega = vec![grid.dx * grid.dy; nv];
    Ok(NsOperators {
        grid,
        m,
        g,
        omega,
        poisson: OnceLock::new(),
    })
}

impl NsOperators {
    pub fn grid(&self) -> &StaggeredGrid2D {
        &self.grid
    }

    pub fn divergence_matrix(&self) -> &CsrMatrix {
        &self.m
    }

    pub fn gradient_matrix(&self) -> &CsrMatrix {
        &self.g
    }

    /// Diagonal of `Ω`.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn divergence(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.m.matvec(v)
    }

    pub fn gradient(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.g.matvec(p)
    }

    /// `½ Vᵀ Ω V`.
    pub fn kinetic_energy(&self, v: &[f64]) -> f64 {
        0.5 * v.iter().zip(&self.omega).map(|(x, w)| w * x * x).sum::<f64>()
    }

    /// Volume-weighted sums of the `u` and `v` components.
    pub fn momentum(&self, v: &[f64]) -> (f64, f64) {
        let np = self.grid.n_pressure();
        let mx = (0..np).map(|k| self.omega[k] * v[k]).sum();
        let my = (np..2 * np).map(|k| self.omega[k] * v[k]).sum();
        (mx, my)
    }

    pub fn convection_diffusion(&self, v: &[f64], t: f64, nu: f64, force: &BodyForce) -> Result<Vec<f64>> {
        self.convection_diffusion_with(v, t, nu, force, Exec::default())
    }

    /// Right-hand side `F(V, t)` of `Ω dV/dt = F - G p`: central
    /// divergence-form convection, 5-point diffusion scaled by `nu` and the
    /// body force integrated over each face volume.
    pub fn convection_diffusion_with(
        &self,
        v: &[f64],
        t: f64,
        nu: f64,
        force: &BodyForce,
        exec: Exec,
    ) -> Result<Vec<f64>> {
        let nv = self.grid.n_velocity();
        if v.len() != nv {
            return Err(Error::dim("convection_diffusion", nv, v.len()));
        }
        let g = self.grid;
        let np = g.n_pressure();
        let (dx, dy) = (g.dx, g.dy);
        let vol = dx * dy;
        Ok(par::map_range(exec, nv, |k| {
            let is_u = k < np;
            let local = if is_u { k } else { k - np };
            let (i, j) = ((local % g.nx) as isize, (local / g.nx) as isize);
            let u = |a: isize, b: isize| v[g.u_idx(a, b)];
            let w = |a: isize, b: isize| v[g.v_idx(a, b)];
            let (x, y, _) = g.face_position(k);
            let (fx, fy) = force.eval(x, y, t);
            if is_u {
                let ue = 0.5 * (u(i, j) + u(i + 1, j));
                let uw = 0.5 * (u(i - 1, j) + u(i, j));
                let vn = 0.5 * (w(i, j) + w(i + 1, j));
                let un = 0.5 * (u(i, j) + u(i, j + 1));
                let vs = 0.5 * (w(i, j - 1) + w(i + 1, j - 1));
                let us = 0.5 * (u(i, j - 1) + u(i, j));
                let conv = (ue * ue - uw * uw) * dy + (vn * un - vs * us) * dx;
                let lap = (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) * dy / dx
                    + (u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) * dx / dy;
                -conv + nu * lap + fx * vol
            } else {
                let vn = 0.5 * (w(i, j) + w(i, j + 1));
                let vs = 0.5 * (w(i, j - 1) + w(i, j));
                let ue = 0.5 * (u(i, j) + u(i, j + 1));
                let ve = 0.5 * (w(i, j) + w(i + 1, j));
                let uw = 0.5 * (u(i - 1, j) + u(i - 1, j + 1));
                let vw = 0.5 * (w(i - 1, j) + w(i, j));
                let conv = (vn * vn - vs * vs) * dx + (ue * ve - uw * vw) * dy;
                let lap = (w(i + 1, j) - 2.0 * w(i, j) + w(i - 1, j)) * dy / dx
                    + (w(i, j + 1) - 2.0 * w(i, j) + w(i, j - 1)) * dx / dy;
                -conv + nu * lap + fy * vol
            }
        }))
    }

    /// Applies `L = M Ω⁻¹ G`.
    pub fn apply_poisson(&self, p: &[f64]) -> Result<Vec<f64>> {
        let gp = self.g.matvec(p)?;
        let scaled: Vec<f64> = gp.iter().zip(&self.omega).map(|(a, w)| a / w).collect();
        self.m.matvec(&scaled)
    }

    fn poisson_solver(&self) -> Result<&PoissonSolver> {
        self.poisson
            .get_or_init(|| self.build_poisson_solver())
            .as_ref()
            .map_err(|e| Error::InvalidArgument(format!("Poisson factorization failed: {e}")))
    }

    fn build_poisson_solver(&self) -> Result<PoissonSolver> {
        let np = self.grid.n_pressure();
        if np >= DENSE_POISSON_LIMIT {
            return Ok(PoissonSolver::ConjugateGradient);
        }
        // A = M Ω⁻¹ Mᵀ = -L, plus a rank-one shift that pins the mean.
        let mut a = DenseMatrix::zeros(np, np);
        for k in 0..self.grid.n_velocity() {
            let col: Vec<(usize, f64)> = self.g.row_entries(k).collect();
            for &(r1, g1) in &col {
                for &(r2, g2) in &col {
                    a[(r1, r2)] += g1 * g2 / self.omega[k];
                }
            }
        }
        let shift = (0..np).map(|i| a[(i, i)]).sum::<f64>() / np as f64 / np as f64;
        let a = DenseMatrix::from_fn(np, np, |i, j| a[(i, j)] + shift);
        Ok(PoissonSolver::Dense {
            chol: Cholesky::new(&a)?,
        })
    }

    /// Solves `M Ω⁻¹ G p = rhs` with `mean(p) = 0`.
    pub fn pressure_poisson_solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let np = self.grid.n_pressure();
        if rhs.len() != np {
            return Err(Error::dim("pressure_poisson_solve", np, rhs.len()));
        }
        let mean = rhs.iter().sum::<f64>() / np as f64;
        if mean.abs() > 1e-10 * norm_inf(rhs).max(1.0) {
            return Err(Error::IncompatibleRhs { mean });
        }
        let b: Vec<f64> = rhs.iter().map(|r| -(r - mean)).collect();
        let mut p = match self.poisson_solver()? {
            PoissonSolver::Dense { chol } => chol.solve(&b)?,
            PoissonSolver::ConjugateGradient => self.cg(&b)?,
        };
        let pm = p.iter().sum::<f64>() / np as f64;
        p.iter_mut().for_each(|x| *x -= pm);
        Ok(p)
    }

    fn cg(&self, b: &[f64]) -> Result<Vec<f64>> {
        let np = b.len();
        let apply = |x: &[f64]| -> Result<Vec<f64>> {
            Ok(self.apply_poisson(x)?.into_iter().map(|v| -v).collect())
        };
        let bnorm = dot(b, b).sqrt();
        let mut x = vec![0.0; np];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut d = r.clone();
        let mut rr = dot(&r, &r);
        let max_iter = 10 * np;
        for _ in 0..max_iter {
            let ad = apply(&d)?;
            let alpha = rr / dot(&d, &ad);
            for i in 0..np {
                x[i] += alpha * d[i];
                r[i] -= alpha * ad[i];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= 1e-13 * bnorm {
                return Ok(x);
            }
            let beta = rr_new / rr;
            for i in 0..np {
                d[i] = r[i] + beta * d[i];
            }
            rr = rr_new;
        }
        Err(Error::NotConverged {
            what: "pressure Poisson CG",
            iterations: max_iter,
            residual: rr.sqrt() / bnorm,
        })
    }

    /// Removes the discrete divergence: `V - Ω⁻¹ G φ` with `L φ = M V`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        let div = self.divergence(v)?;
        let phi = self.pressure_poisson_solve(&div)?;
        let gphi = self.gradient(&phi)?;
        Ok(v.iter()
            .zip(&gphi)
            .zip(&self.omega)
            .map(|((a, g), w)| a - g / w)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NsState {
    pub velocity: Vec<f64>,
    pub pressure: Vec<f64>,
}

/// Settings for the FOM stage iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FomStepConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_tol: f64,
}

impl Default for FomStepConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            divergence_tol: 1e-10,
        }
    }
}

/// One implicit-midpoint step with the pressure as Lagrange multiplier.
///
/// Each fixed-point iteration evaluates `F` at the current midpoint guess
/// and solves the saddle-point system for `(V_{n+1}, p)` by a pressure
/// projection, so every iterate is discretely divergence-free.
pub fn fom_step(
    ops: &NsOperators,
    state: &NsState,
    t: f64,
    dt: f64,
    nu: f64,
    force: &BodyForce,
    cfg: &FomStepConfig,
) -> Result<NsState> {
    let v0 = &state.velocity;
    let div0 = norm_inf(&ops.divergence(v0)?);
    let scale = ops.grid.dx.max(ops.grid.dy) * norm_inf(v0).max(1.0);
    if div0 > 1e-8 * scale {
        return Err(Error::InvalidArgument(format!(
            "FOM step requires a divergence-free state (|M V| = {div0:e})"
        )));
    }
    let omega = ops.omega();
    let tm = t + 0.5 * dt;
    let mut next = v0.clone();
    let mut last = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let mid: Vec<f64> = v0.iter().zip(&next).map(|(a, b)| 0.5 * (a + b)).collect();
        let f = ops.convection_diffusion(&mid, tm, nu, force)?;
        let w: Vec<f64> = (0..v0.len()).map(|k| v0[k] + dt * f[k] / omega[k]).collect();
        let rhs: Vec<f64> = ops.divergence(&w)?.iter().map(|d| d / dt).collect();
        let p = ops.pressure_poisson_solve(&rhs)?;
        let gp = ops.gradient(&p)?;
        let candidate: Vec<f64> = (0..w.len()).map(|k| w[k] - dt * gp[k] / omega[k]).collect();
        last = candidate
            .iter()
            .zip(&next)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        next = candidate;
        if last <= cfg.tol * norm_inf(&next).max(1.0) {
            let div = norm_inf(&ops.divergence(&next)?);
            if div > cfg.divergence_tol {
                next = ops.project(&next)?;
            }
            return Ok(NsState {
                velocity: next,
                pressure: p,
            });
        }
    }
    Err(Error::NotConverged {
        what: "Navier-Stokes implicit midpoint iteration",
        iterations: cfg.max_iter,
        residual: last,
    })
}

/// Samples `(u, v)` at the velocity unknowns.
pub fn sample_velocity(grid: &StaggeredGrid2D, f: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
    (0..grid.n_velocity())
        .map(|k| {
            let (x, y, is_u) = grid.face_position(k);
            let (a, b) = f(x, y);
            if is_u {
                a
            } else {
                b
            }
        })
        .collect()
}

/// Velocity from a stream function sampled at cell corners; discretely
/// divergence-free by construction.
pub fn streamfunction_velocity(grid: &StaggeredGrid2D, psi: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let corner = |i: usize, j: usize| psi(i as f64 * grid.dx, j as f64 * grid.dy);
    let mut v = vec![0.0; grid.n_velocity()];
    for j in 0..ny {
        for i in 0..nx {
            let (ii, jj) = (i as isize, j as isize);
            v[grid.u_idx(ii, jj)] = (corner(i + 1, j + 1) - corner(i + 1, j)) / grid.dy;
            v[grid.v_idx(ii, jj)] = -(corner(i + 1, j + 1) - corner(i, j + 1)) / grid.dx;
        }
    }
    v
}

/// Taylor-Green vortex `u = A sin(kx) cos(ky)`, `v = -A cos(kx) sin(ky)`
/// with one period per domain length.
pub fn taylor_green(grid: &StaggeredGrid2D, amplitude: f64) -> Vec<f64> {
    let kx = 2.0 * std::f64::consts::PI / grid.lx;
    let ky = 2.0 * std::f64::consts::PI / grid.ly;
    sample_velocity(grid, |x, y| {
        (
            amplitude * (kx * x).sin() * (ky * y).cos(),
            -amplitude * kx / ky * (kx * x).cos() * (ky * y).sin(),
        )
    })
}

/// Random periodic stream function with wavenumbers up to `max_mode`,
/// amplitudes decaying like `1/|k|²`, differentiated discretely.
pub fn random_modes<R: Rng>(grid: &StaggeredGrid2D, max_mode: usize, amplitude: f64, rng: &mut R) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let mut modes = Vec::new();
    for kx in 0..=max_mode as i64 {
        for ky in -(max_mode as i64)..=max_mode as i64 {
            if kx == 0 && ky <= 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            let a = rng.gen_range(-1.0..1.0) / k2;
            let phase = rng.gen_range(0.0..tau);
            modes.push((kx as f64, ky as f64, a, phase));
        }
    }
    let (lx, ly) = (grid.lx, grid.ly);
    let psi = |x: f64, y: f64| {
        modes
            .iter()
            .map(|&(kx, ky, a, ph)| a * (tau * (kx * x / lx + ky * y / ly) + ph).sin())
            .sum::<f64>()
    };
    let v = streamfunction_velocity(grid, psi);
    let peak = norm_inf(&v);
    if peak > 0.0 {
        v.iter().map(|x| x * amplitude / peak).collect()
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ops(n: usize) -> NsOperators {
        build_operators(StaggeredGrid2D::new(n, n, 1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn degenerate_grid_rejected() {
        assert!(StaggeredGrid2D::new(2, 5, 1.0, 1.0).is_err());
        assert!(StaggeredGrid2D::new(4, 4, 0.0, 1.0).is_err());
    }

    #[test]
    fn duality_and_telescoping() {
        let o = ops(6);
        let m = o.divergence_matrix().to_dense();
        let g = o.gradient_matrix().to_dense();
        assert_eq!(m, g.transpose().scale(-1.0));
        for i in 0..m.rows() {
            assert!(m.row(i).iter().sum::<f64>().abs() < 1e-12);
        }
        assert!(o.omega().iter().all(|&w| (w - 1.0 / 36.0).abs() < 1e-16));
    }

    #[test]
    fn constants_are_in_kernels() {
        let o = ops(5);
        let uniform = sample_velocity(o.grid(), |_, _| (1.3, -0.4));
        assert!(norm_inf(&o.divergence(&uniform).unwrap()) < 1e-14);
        assert!(norm_inf(&o.gradient(&[2.0; 25]).unwrap()) < 1e-14);
        let f = o
            .convection_diffusion(&uniform, 0.0, 0.1, &BodyForce::none())
            .unwrap();
        assert!(norm_inf(&f) < 1e-14);
        let z = o
            .convection_diffusion(&vec![0.0; 50], 0.0, 0.1, &BodyForce::none())
            .unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn divergence_second_order() {
        let err = |n: usize| {
            let o = ops(n);
            let v = sample_velocity(o.grid(), |x, _| ((2.0 * PI * x).sin(), 0.0));
            let d = o.divergence(&v).unwrap();
            let g = o.grid();
            let mut e = 0.0_f64;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (x, _) = g.cell_center(i, j);
                    let exact = 2.0 * PI * (2.0 * PI * x).cos();
                    let approx = d[g.p_idx(i as isize, j as isize)] / (g.dx * g.dy);
                    e = e.max((approx - exact).abs());
                }
            }
            e
        };
        let ratio = err(16) / err(32);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn convection_is_skew_on_divergence_free_fields() {
        let o = ops(8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let raw: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = o.project(&raw).unwrap();
            let f = o.convection_diffusion(&v, 0.0, 0.0, &BodyForce::none()).unwrap();
            assert!(dot(&v, &f).abs() < 1e-11, "{}", dot(&v, &f));
        }
    }

    #[test]
    fn diffusion_dissipates() {
        let o = ops(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_modes(o.grid(), 3, 1.0, &mut rng);
        let f = o.convection_diffusion(&v, 0.0, 0.1, &BodyForce::none()).unwrap();
        assert!(dot(&v, &f) < 0.0);
    }

    #[test]
    fn poisson_round_trip() {
        let o = ops(12);
        let g = *o.grid();
        let mut pstar = vec![0.0; g.n_pressure()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, _) = g.cell_center(i, j);
                pstar[g.p_idx(i as isize, j as isize)] = (2.0 * PI * x).cos();
            }
        }
        let mean = pstar.iter().sum::<f64>() / pstar.len() as f64;
        pstar.iter_mut().for_each(|p| *p -= mean);
        let rhs = o.apply_poisson(&pstar).unwrap();
        let p = o.pressure_poisson_solve(&rhs).unwrap();
        for (a, b) in p.iter().zip(&pstar) {
            assert!((a - b).abs() < 1e-9);
        }
        let zero = o.pressure_poisson_solve(&vec![0.0; g.n_pressure()]).unwrap();
        assert!(zero.iter().all(|&x| x.abs() < 1e-15));
        assert!(matches!(
            o.pressure_poisson_solve(&vec![1.0; g.n_pressure()]),
            Err(Error::IncompatibleRhs { .. })
        ));
    }

    #[test]
    fn cg_matches_dense_solver() {
        let o = ops(8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = raw.iter().sum::<f64>() / 64.0;
        let rhs: Vec<f64> = raw.iter().map(|x| x - mean).collect();
        let dense = o.pressure_poisson_solve(&rhs).unwrap();
        let b: Vec<f64> = rhs.iter().map(|r| -r).collect();
        let mut cg = o.cg(&b).unwrap();
        let m = cg.iter().sum::<f64>() / 64.0;
        cg.iter_mut().for_each(|x| *x -= m);
        for (a, c) in dense.iter().zip(&cg) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn streamfunction_fields_are_divergence_free() {
        let o = ops(9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_modes(o.grid(), 3, 1.0, &mut rng);
        assert!(norm_inf(&o.divergence(&v).unwrap()) < 1e-13);
        let tg = taylor_green(o.grid(), 1.0);
        assert!(norm_inf(&o.divergence(&tg).unwrap()) < 1e-13);
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let o = ops(6);
        let s = NsState {
            velocity: vec![0.0; 72],
            pressure: vec![0.0; 36],
        };
        let next = fom_step(&o, &s, 0.0, 1e-2, 0.1, &BodyForce::none(), &FomStepConfig::default())
            .unwrap();
        assert!(next.velocity.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_divergent_state() {
        let o = ops(6);
        let v = sample_velocity(o.grid(), |x, _| ((2.0 * PI * x).sin(), 0.0));
        let s = NsState {
            velocity: v,
            pressure: vec![0.0; 36],
        };
        assert!(fom_step(&o, &s, 0.0, 1e-2, 0.1, &BodyForce::none(), &FomStepConfig::default())
            .is_err());
    }

    #[test]
    fn parallel_and_sequential_rhs_identical() {
        let o = ops(10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_modes(o.grid(), 2, 1.0, &mut rng);
        let a = o
            .convection_diffusion_with(&v, 0.0, 0.01, &BodyForce::none(), Exec::Sequential)
            .unwrap();
        let b = o
            .convection_diffusion_with(&v, 0.0, 0.01, &BodyForce::none(), Exec::Parallel)
            .unwrap();
        assert_eq!(a, b);
    }
}
