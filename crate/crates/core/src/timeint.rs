//! Explicit RK4 and implicit midpoint time stepping.
//!
//! Implicit midpoint is the one-stage Gauss method: it preserves every
//! quadratic invariant of the flow, so energy-neutral right-hand sides stay
//! energy-neutral after time discretization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, DenseMatrix, LuFactorization};
use crate::par::{self, Exec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    #[default]
    ImplicitMidpoint,
}

/// Nonlinear solver for the implicit midpoint stage equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StageSolver {
    /// Newton with a forward-difference Jacobian.
    #[default]
    FiniteDifference,
    /// Plain fixed-point iteration `k ← f(u + dt/2 k)`.
    FixedPoint,
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
const FD_REL_STEP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub method: Method,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub jacobian: StageSolver,
    pub exec: Exec,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64, method: Method) -> Self {
        Self {
            dt,
            t_end,
            method,
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            jacobian: StageSolver::FiniteDifference,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("time.dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::config(
                "time.t_end",
                format!("must be >= 0, got {}", self.t_end),
            ));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::config(
                "tolerances.newton_tol",
                format!("must be > 0, got {}", self.newton_tol),
            ));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::config("tolerances.newton_max_iter", "must be >= 1"));
        }
        Ok(())
    }

    /// Number of fixed steps, `round(t_end / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn shifted(u: &[f64], s: f64, k: &[f64]) -> Vec<f64> {
    u.iter().zip(k).map(|(a, b)| a + s * b).collect()
}

/// Classical four-stage Runge-Kutta step.
pub fn rk4_step<F>(rhs: &F, u: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    let k1 = rhs(u, t)?;
    check_finite(&k1, "rk4 stage 1")?;
    let k2 = rhs(&shifted(u, 0.5 * dt, &k1), t + 0.5 * dt)?;
    check_finite(&k2, "rk4 stage 2")?;
    let k3 = rhs(&shifted(u, 0.5 * dt, &k2), t + 0.5 * dt)?;
    check_finite(&k3, "rk4 stage 3")?;
    let k4 = rhs(&shifted(u, dt, &k3), t + dt)?;
    check_finite(&k4, "rk4 stage 4")?;
    Ok((0..u.len())
        .map(|i| u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Forward-difference Jacobian of `rhs` at `u`, one column per unknown.
pub fn fd_jacobian<F>(rhs: &F, u: &[f64], t: f64, f0: &[f64], exec: Exec) -> Result<DenseMatrix>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let n = u.len();
    let cols = par::map_range(exec, n, |j| {
        let eps = FD_REL_STEP * u[j].abs().max(1.0);
        let mut up = u.to_vec();
        up[j] += eps;
        let step = up[j] - u[j];
        rhs(&up, t).map(|fp| fp.iter().zip(f0).map(|(a, b)| (a - b) / step).collect::<Vec<_>>())
    });
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DenseMatrix::from_fn(f0.len(), n, |i, j| cols[j][i]))
}

/// Solves the stage equation `k = f(u + dt/2 k, t + dt/2)` and returns the
/// stage slope `k`.
pub fn implicit_midpoint_stage<F>(
    rhs: &F,
    u: &[f64],
    t: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let tm = t + 0.5 * dt;
    let mut k = rhs(u, t)?;
    check_finite(&k, "implicit midpoint predictor")?;
    let mut last = f64::INFINITY;
    for _ in 0..cfg.newton_max_iter {
        let mid = shifted(u, 0.5 * dt, &k);
        let f = rhs(&mid, tm)?;
        check_finite(&f, "implicit midpoint stage")?;
        let delta: Vec<f64> = match cfg.jacobian {
            StageSolver::FixedPoint => f.iter().zip(&k).map(|(a, b)| a - b).collect(),
            StageSolver::FiniteDifference => {
                let jac = fd_jacobian(rhs, &mid, tm, &f, cfg.exec)?;
                let n = k.len();
                let sys = DenseMatrix::from_fn(n, n, |i, j| {
                    let d = if i == j { 1.0 } else { 0.0 };
                    d - 0.5 * dt * jac[(i, j)]
                });
                let neg_res: Vec<f64> = f.iter().zip(&k).map(|(a, b)| a - b).collect();
                LuFactorization::new(&sys)?.solve(&neg_res)?
            }
        };
        for (ki, di) in k.iter_mut().zip(&delta) {
            *ki += di;
        }
        last = norm_inf(&delta);
        if last <= cfg.newton_tol * norm_inf(&k).max(1.0) {
            return Ok(k);
        }
    }
    Err(Error::NotConverged {
        what: "implicit midpoint stage solve",
        iterations: cfg.newton_max_iter,
        residual: last,
    })
}

/// One implicit midpoint step `u + dt k`.
pub fn implicit_midpoint_step<F>(
    rhs: &F,
    u: &[f64],
    t: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    let k = implicit_midpoint_stage(rhs, u, t, dt, cfg)?;
    Ok(shifted(u, dt, &k))
}

/// Dispatches on `cfg.method`.
pub fn step<F>(rhs: &F, u: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
{
    match cfg.method {
        Method::Rk4 => rk4_step(rhs, u, t, cfg.dt),
        Method::ImplicitMidpoint => implicit_midpoint_step(rhs, u, t, cfg.dt, cfg),
    }
}

/// Integrates from `t = 0` to `t_end` with fixed steps. `observer` sees
/// `(step index, t_n, u_n, u_{n+1})` after each step.
pub fn integrate<F, O>(rhs: &F, u0: &[f64], cfg: &IntegratorConfig, mut observer: O) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Sync,
    O: FnMut(usize, f64, &[f64], &[f64]) -> Result<()>,
{
    cfg.validate()?;
    let mut u = u0.to_vec();
    for n in 0..cfg.n_steps() {
        let t = n as f64 * cfg.dt;
        let next = step(rhs, &u, t, cfg)?;
        observer(n, t, &u, &next)?;
        u = next;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(u: &[f64], _t: f64) -> Result<Vec<f64>> {
        Ok(u.iter().map(|v| -v).collect())
    }

    #[test]
    fn rk4_constant_rhs() {
        let one = |_u: &[f64], _t: f64| Ok(vec![1.0]);
        let u = rk4_step(&one, &[2.0], 0.0, 0.1).unwrap();
        assert!((u[0] - 2.1).abs() < 1e-15);
    }

    #[test]
    fn rk4_linear_is_taylor_polynomial() {
        let lam = -0.7;
        let dt = 0.3;
        let f = move |u: &[f64], _t: f64| Ok(vec![lam * u[0]]);
        let z = lam * dt;
        let expected = 1.0 + z + z * z / 2.0 + z.powi(3) / 6.0 + z.powi(4) / 24.0;
        let u = rk4_step(&f, &[1.0], 0.0, dt).unwrap();
        assert!((u[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn midpoint_linear_closed_form() {
        let lam = -2.0;
        let dt = 0.1;
        let f = move |u: &[f64], _t: f64| Ok(vec![lam * u[0]]);
        let cfg = IntegratorConfig::new(dt, 1.0, Method::ImplicitMidpoint);
        let u = implicit_midpoint_step(&f, &[1.0], 0.0, dt, &cfg).unwrap();
        let expected = (1.0 + lam * dt / 2.0) / (1.0 - lam * dt / 2.0);
        assert!((u[0] - expected).abs() < 1e-13);
    }

    #[test]
    fn fixed_point_solver_agrees_with_newton() {
        let mut cfg = IntegratorConfig::new(0.05, 1.0, Method::ImplicitMidpoint);
        let newton = implicit_midpoint_step(&decay, &[1.0, -2.0], 0.0, 0.05, &cfg).unwrap();
        cfg.jacobian = StageSolver::FixedPoint;
        let fp = implicit_midpoint_step(&decay, &[1.0, -2.0], 0.0, 0.05, &cfg).unwrap();
        for (a, b) in newton.iter().zip(&fp) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonconvergence_reports_residual() {
        let mut cfg = IntegratorConfig::new(10.0, 10.0, Method::ImplicitMidpoint);
        cfg.jacobian = StageSolver::FixedPoint;
        cfg.newton_max_iter = 5;
        let stiff = |u: &[f64], _t: f64| Ok(vec![-50.0 * u[0]]);
        match implicit_midpoint_step(&stiff, &[1.0], 0.0, 10.0, &cfg) {
            Err(Error::NotConverged { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = IntegratorConfig::new(0.0, 1.0, Method::Rk4);
        assert!(cfg.validate().is_err());
        cfg.dt = 0.1;
        cfg.t_end = -1.0;
        assert!(cfg.validate().is_err());
        cfg.t_end = 1.0;
        assert_eq!(cfg.n_steps(), 10);
        cfg.newton_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn nonfinite_stage_rejected() {
        let bad = |_u: &[f64], _t: f64| Ok(vec![f64::NAN]);
        assert!(matches!(rk4_step(&bad, &[0.0], 0.0, 0.1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn integration_is_deterministic() {
        let cfg = IntegratorConfig::new(0.01, 0.5, Method::ImplicitMidpoint);
        let a = integrate(&decay, &[1.0, 0.5], &cfg, |_, _, _, _| Ok(())).unwrap();
        let b = integrate(&decay, &[1.0, 0.5], &cfg, |_, _, _, _| Ok(())).unwrap();
        assert_eq!(a, b);
    }
}
