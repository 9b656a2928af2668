//! Scenario execution: FOM runs, basis construction, ROM runs and audits.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fom::{BurgersFom, FomSystem, SourceFn};
use crate::linalg::{norm_inf, qr_full, DenseMatrix, DEFAULT_RANK_TOL};
use crate::mesh::{mesh_aggregation_matrix, AggregationMatrix, Mesh1D, SubdomainDecomposition};
use crate::ns_fom::{
    build_operators, fom_step, random_modes, taylor_green, BodyForce, FomStepConfig, NsOperators,
    NsState, StaggeredGrid2D,
};
use crate::ns_rom::{
    audit_velocity_basis, divergence_free_split, momentum_aggregation_matrix, rectangle_cells,
    weighted_constrained_basis, weighted_pod_velocity_basis, MomentumSubdomain, VelocityRom,
    WeightedBasis,
};
use crate::pipeline::artifact::{
    compare_audits, AuditLimits, AuditRecord, RomArtifact, VerifyOutcome, ARTIFACT_FORMAT,
};
use crate::pipeline::config::{ForceKind, IcPreset, Problem, RomKind, ScenarioConfig};
use crate::pipeline::report::{ReportMetadata, ReportRow, RunReport};
use crate::pipeline::snapshot::{read_snapshots, write_snapshots};
use crate::rom::{
    apply_invariant_offsets, constrained_pod_basis, constrained_pod_size, pod_basis, BasisKind,
    GalerkinRom, InvariantSpec, Perturbation, PerturbedRom, ReducedBasis,
};
use crate::timeint::{integrate, IntegratorConfig, Method};

/// The discretized physics of a scenario.
pub enum Model {
    Burgers(BurgersFom),
    Ns {
        ops: NsOperators,
        nu: f64,
        force: BodyForce,
    },
}

/// A validated configuration together with everything derived from it.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: Model,
    /// Aggregation matrix (`N x K`, possibly `K = 0`).
    pub constraint: DenseMatrix,
    pub initial_state: Vec<f64>,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let config = config.clone();
        match config.problem {
            Problem::Burgers1d => Self::burgers(config),
            Problem::Ns2d => Self::ns(config),
        }
    }

    fn burgers(config: ScenarioConfig) -> Result<Self> {
        let n = config.grid.n.expect("validated");
        let length = config.grid.length.unwrap_or(1.0);
        let mesh = Mesh1D::uniform(n, length)?;
        let f = &config.physics.force;
        let source: Option<SourceFn> = match f.kind {
            ForceKind::None => None,
            ForceKind::Constant => {
                let fx = f.fx;
                Some(Arc::new(move |_x, _t| fx))
            }
            ForceKind::Sine => {
                let (a, k) = (f.amplitude, f64::from(f.wavenumber));
                let w = 2.0 * std::f64::consts::PI * k / length;
                Some(Arc::new(move |x: f64, _t| a * (w * x).sin()))
            }
        };
        let sets = config
            .subdomains
            .iter()
            .map(|s| match (&s.cells, s.range) {
                (Some(c), _) => c.clone(),
                (None, Some([a, b])) => (a..b).collect(),
                (None, None) => unreachable!("validated"),
            })
            .collect();
        let decomp = SubdomainDecomposition::new(sets, n)?;
        let constraint = mesh_aggregation_matrix(&mesh, &decomp)?.into_matrix();

        let ic = &config.initial_condition;
        let initial_state = mesh
            .cell_centers()
            .iter()
            .map(|&x| match ic.preset {
                IcPreset::Constant => ic.value,
                IcPreset::Gaussian => {
                    let z = (x - ic.center) / ic.width;
                    ic.value + ic.amplitude * (-z * z).exp()
                }
                IcPreset::Sine => {
                    ic.value
                        + ic.coefficients
                            .iter()
                            .enumerate()
                            .map(|(k, c)| {
                                c * (2.0 * std::f64::consts::PI * (k + 1) as f64 * x / length).sin()
                            })
                            .sum::<f64>()
                }
                IcPreset::TaylorGreen | IcPreset::RandomModes => unreachable!("validated"),
            })
            .collect();
        let fom = BurgersFom::new(mesh, config.physics.viscosity, source)?;
        Ok(Self {
            model: Model::Burgers(fom),
            constraint,
            initial_state,
            config,
        })
    }

    fn ns(config: ScenarioConfig) -> Result<Self> {
        let g = &config.grid;
        let grid = StaggeredGrid2D::new(
            g.nx.expect("validated"),
            g.ny.expect("validated"),
            g.lx.unwrap_or(1.0),
            g.ly.unwrap_or(1.0),
        )?;
        let ops = build_operators(grid)?;
        let f = &config.physics.force;
        let force = match f.kind {
            ForceKind::None => BodyForce::none(),
            ForceKind::Constant => {
                let (fx, fy) = (f.fx, f.fy);
                BodyForce::new(Arc::new(move |_x, _y, _t| (fx, fy)))
            }
            ForceKind::Sine => {
                let a = f.amplitude;
                let w = 2.0 * std::f64::consts::PI * f64::from(f.wavenumber) / grid.ly;
                BodyForce::new(Arc::new(move |_x, y: f64, _t| (a * (w * y).sin(), 0.0)))
            }
        };
        let subdomains: Vec<MomentumSubdomain> = config
            .subdomains
            .iter()
            .map(|s| match &s.rect {
                Some(r) => {
                    let cells = rectangle_cells(&grid, (r.i[0], r.i[1]), (r.j[0], r.j[1]));
                    MomentumSubdomain {
                        u: cells.clone(),
                        v: cells,
                    }
                }
                None => MomentumSubdomain {
                    u: s.u.clone().unwrap_or_default(),
                    v: s.v.clone().unwrap_or_default(),
                },
            })
            .collect();
        let constraint = if subdomains.is_empty() {
            DenseMatrix::zeros(grid.n_velocity(), 0)
        } else {
            momentum_aggregation_matrix(&ops, &subdomains)?
        };
        let ic = &config.initial_condition;
        let initial_state = match ic.preset {
            // Point samples of the continuous vortex are divergence-free only
            // up to truncation error.
            IcPreset::TaylorGreen => ops.project(&taylor_green(&grid, ic.amplitude))?,
            IcPreset::RandomModes => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                random_modes(&grid, ic.modes, ic.amplitude, &mut rng)
            }
            _ => unreachable!("validated"),
        };
        Ok(Self {
            model: Model::Ns {
                ops,
                nu: config.physics.viscosity,
                force,
            },
            constraint,
            initial_state,
            config,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.initial_state.len()
    }

    /// Cell volumes (burgers1d) or velocity finite-volume sizes `Ω` (ns2d).
    pub fn volumes(&self) -> &[f64] {
        match &self.model {
            Model::Burgers(f) => f.volumes(),
            Model::Ns { ops, .. } => ops.omega(),
        }
    }

    /// `½ Σ w u²`.
    pub fn kinetic_energy(&self, u: &[f64]) -> f64 {
        0.5 * u
            .iter()
            .zip(self.volumes())
            .map(|(x, w)| w * x * x)
            .sum::<f64>()
    }

    /// `sqrt(Σ w (a − b)²)`.
    pub fn l2_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(self.volumes())
            .map(|((x, y), w)| w * (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let t = &self.config.time;
        let mut cfg = IntegratorConfig::new(t.dt, t.t_end, t.method);
        cfg.newton_tol = t.newton_tol;
        cfg.newton_max_iter = t.newton_max_iter;
        cfg.jacobian = t.stage_solver;
        cfg
    }

    pub fn n_steps(&self) -> usize {
        self.config.time.n_steps()
    }

    /// Number of report rows: `t = 0` plus one per `output_stride` steps.
    pub fn n_report_rows(&self) -> usize {
        1 + self.n_steps() / self.config.time.output_stride
    }

    fn step_time(&self, n: usize) -> f64 {
        n as f64 * self.config.time.dt
    }

    fn metadata(&self, model: &str, wall: f64) -> ReportMetadata {
        ReportMetadata {
            config_hash: self.config.hash(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            problem: match self.config.problem {
                Problem::Burgers1d => "burgers1d",
                Problem::Ns2d => "ns2d",
            }
            .to_string(),
            model: model.to_string(),
            wall_time_s: wall,
        }
    }
}

/// Running maxima between two output rows.
#[derive(Default)]
struct IntervalMax {
    res: Option<f64>,
    mass: Option<f64>,
}

impl IntervalMax {
    fn add(&mut self, res: Option<f64>, mass: Option<f64>) {
        let merge = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, None) => x,
            (None, y) => y,
        };
        self.res = merge(self.res, res);
        self.mass = merge(self.mass, mass);
    }

    fn take(&mut self) -> (Option<f64>, Option<f64>) {
        let out = (self.res, self.mass);
        *self = Self::default();
        out
    }
}

fn max_abs(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| norm_inf(v))
}

/// Output of a full-order run.
#[derive(Clone, Debug)]
pub struct FomRun {
    /// Snapshot matrix: the initial state and every `snapshot_stride`-th state.
    pub snapshots: DenseMatrix,
    /// States at the report rows.
    pub trajectory: DenseMatrix,
    pub report: RunReport,
}

pub fn run_fom(scenario: &Scenario) -> Result<FomRun> {
    let start = Instant::now();
    let cfg = &scenario.config;
    let (snap_stride, out_stride) = (cfg.time.snapshot_stride, cfg.time.output_stride);
    let u0 = &scenario.initial_state;
    let c = &scenario.constraint;
    let mut snapshots = vec![u0.clone()];
    let mut trajectory = vec![u0.clone()];
    let mass0 = match &scenario.model {
        Model::Ns { ops, .. } => Some(norm_inf(&ops.divergence(u0)?)),
        Model::Burgers(_) => None,
    };
    let mut rows = vec![ReportRow {
        t: 0.0,
        kinetic_energy: Some(scenario.kinetic_energy(u0)),
        mass_res_max: mass0,
        ..Default::default()
    }];
    let mut acc = IntervalMax::default();
    let mut record = |n: usize, next: &[f64], res: Option<f64>, mass: Option<f64>| {
        acc.add(res, mass);
        if (n + 1) % snap_stride == 0 {
            snapshots.push(next.to_vec());
        }
        if (n + 1) % out_stride == 0 {
            let (res, mass) = acc.take();
            rows.push(ReportRow {
                t: scenario.step_time(n + 1),
                subdom_res_max: res,
                kinetic_energy: Some(scenario.kinetic_energy(next)),
                mass_res_max: mass,
                state_err_l2: None,
            });
            trajectory.push(next.to_vec());
        }
    };

    match &scenario.model {
        Model::Burgers(fom) => {
            let icfg = scenario.integrator_config();
            let rhs = |u: &[f64], t: f64| fom.rhs(u, t);
            let dt = icfg.dt;
            let method = icfg.method;
            integrate(&rhs, u0, &icfg, |n, t, u, next| {
                let r = discrete_residual(fom, c, method, u, next, t, dt)?;
                record(n, next, max_abs(&r), None);
                Ok(())
            })?;
        }
        Model::Ns { ops, nu, force } => {
            let dt = cfg.time.dt;
            let step_cfg = FomStepConfig {
                tol: cfg.time.newton_tol,
                max_iter: cfg.time.newton_max_iter,
                ..FomStepConfig::default()
            };
            let omega = ops.omega();
            let mut state = NsState {
                velocity: u0.clone(),
                pressure: vec![0.0; ops.grid().n_pressure()],
            };
            for n in 0..scenario.n_steps() {
                let t = scenario.step_time(n);
                let next = fom_step(ops, &state, t, dt, *nu, force, &step_cfg)?;
                let res = if c.cols() == 0 {
                    None
                } else {
                    let mid: Vec<f64> = state
                        .velocity
                        .iter()
                        .zip(&next.velocity)
                        .map(|(a, b)| 0.5 * (a + b))
                        .collect();
                    let f = ops.convection_diffusion(&mid, t + 0.5 * dt, *nu, force)?;
                    let gp = ops.gradient(&next.pressure)?;
                    let r: Vec<f64> = (0..f.len())
                        .map(|k| {
                            omega[k] * (next.velocity[k] - state.velocity[k]) / dt - f[k] + gp[k]
                        })
                        .collect();
                    max_abs(&c.tr_matvec(&r)?)
                };
                let mass = norm_inf(&ops.divergence(&next.velocity)?);
                record(n, &next.velocity, res, Some(mass));
                state = next;
            }
        }
    }

    let model = "fom";
    info!(
        "FOM run finished: {} steps, {} snapshots",
        scenario.n_steps(),
        snapshots.len()
    );
    Ok(FomRun {
        snapshots: DenseMatrix::from_columns(&snapshots)?,
        trajectory: DenseMatrix::from_columns(&trajectory)?,
        report: RunReport {
            rows,
            metadata: scenario.metadata(model, start.elapsed().as_secs_f64()),
        },
    })
}

/// Subdomain residual of one step.
///
/// Implicit midpoint: the time-discrete residual
/// `Cᵀ((u₁ − u₀)/dt − f((u₀ + u₁)/2, t + dt/2))`. RK4 has no such
/// one-stage form, so the semi-discrete residual is evaluated at `u₁` with
/// the derivative supplied by `dudt_next`.
fn discrete_residual<F: FomSystem + ?Sized>(
    fom: &F,
    c: &DenseMatrix,
    method: Method,
    u: &[f64],
    next: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    if c.cols() == 0 {
        return Ok(Vec::new());
    }
    match method {
        Method::ImplicitMidpoint => {
            let mid: Vec<f64> = u.iter().zip(next).map(|(a, b)| 0.5 * (a + b)).collect();
            let dudt: Vec<f64> = u.iter().zip(next).map(|(a, b)| (b - a) / dt).collect();
            crate::rom::subdomain_residual(c, fom, &mid, &dudt, t + 0.5 * dt)
        }
        Method::Rk4 => {
            // A FOM satisfies its own semi-discrete equation exactly.
            let f = fom.rhs(next, t + dt)?;
            crate::rom::subdomain_residual(c, fom, next, &f, t + dt)
        }
    }
}

/// Reduced dynamics behind a common interface for the driver.
trait ReducedDynamics: Sync {
    fn rhs(&self, a: &[f64], t: f64) -> Result<Vec<f64>>;
    fn lift(&self, a: &[f64]) -> Result<Vec<f64>>;
}

impl<F: FomSystem + ?Sized> ReducedDynamics for GalerkinRom<'_, F> {
    fn rhs(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        GalerkinRom::rhs(self, a, t)
    }

    fn lift(&self, a: &[f64]) -> Result<Vec<f64>> {
        GalerkinRom::lift(self, a)
    }
}

impl<F: FomSystem + ?Sized> ReducedDynamics for PerturbedRom<'_, F> {
    fn rhs(&self, a: &[f64], t: f64) -> Result<Vec<f64>> {
        PerturbedRom::rhs(self, a, t)
    }

    fn lift(&self, a: &[f64]) -> Result<Vec<f64>> {
        PerturbedRom::lift(self, a)
    }
}

fn basis_kind(kind: RomKind) -> BasisKind {
    match kind {
        RomKind::Novel => BasisKind::ConstrainedPod,
        RomKind::Pod | RomKind::Carlberg => BasisKind::Pod,
    }
}

fn constraint_rank(c: &DenseMatrix) -> Result<usize> {
    if c.cols() == 0 {
        return Ok(0);
    }
    Ok(qr_full(c, DEFAULT_RANK_TOL)?.rank())
}

/// Basis-dependent audit numbers. Used both when an artifact is built and
/// when it is re-verified, so the two agree bit for bit.
fn audit(
    scenario: &Scenario,
    kind: RomKind,
    basis: &DenseMatrix,
    basis_constraint_cols: usize,
    c: &DenseMatrix,
) -> Result<AuditRecord> {
    let constraint_rank = constraint_rank(c)?;
    let pod_columns = basis.cols() - basis_constraint_cols;
    match &scenario.model {
        Model::Burgers(_) => {
            let b = ReducedBasis::new(basis.clone(), None, basis_kind(kind), basis_constraint_cols)?;
            let inclusion = if c.cols() == 0 {
                None
            } else {
                Some(b.inclusion_residual(c)?)
            };
            let feasible = if kind == RomKind::Carlberg {
                Some(Perturbation::new(basis, c)?.is_feasible())
            } else {
                None
            };
            Ok(AuditRecord {
                orthonormality: b.orthonormality_residual(),
                inclusion,
                divergence: None,
                phi0_gradient: None,
                constraint_rank,
                pod_columns,
                r1: None,
                r2: None,
                feasible,
                rank_tol: DEFAULT_RANK_TOL,
            })
        }
        Model::Ns { ops, .. } => {
            let wb = weighted_from_parts(basis, ops.omega(), basis_constraint_cols);
            let split = divergence_free_split(&wb.phi, ops.divergence_matrix())?;
            let a = audit_velocity_basis(ops, &wb, &split, c)?;
            let (r1, r2) = (split.r1(), split.r2());
            let feasible = if kind == RomKind::Carlberg {
                let psi = split.phi0.scale_rows(&ops.omega().iter().map(|w| w.sqrt()).collect::<Vec<_>>())?;
                let c_hat = c.scale_rows(&ops.omega().iter().map(|w| 1.0 / w.sqrt()).collect::<Vec<_>>())?;
                Some(Perturbation::new(&psi, &c_hat)?.is_feasible())
            } else {
                None
            };
            Ok(AuditRecord {
                orthonormality: a.orthonormality,
                inclusion: (c.cols() > 0).then_some(a.inclusion),
                divergence: Some(a.divergence),
                phi0_gradient: Some(a.phi0_gradient),
                constraint_rank,
                pod_columns,
                r1: Some(r1),
                r2: Some(r2),
                feasible,
                rank_tol: DEFAULT_RANK_TOL,
            })
        }
    }
}

fn weighted_from_parts(phi: &DenseMatrix, omega: &[f64], hc: usize) -> WeightedBasis {
    WeightedBasis {
        phi: phi.clone(),
        omega: omega.to_vec(),
        q1_tilde: phi.columns_range(0, hc),
        w: phi.columns_range(hc, phi.cols()),
        singular_values: Vec::new(),
    }
}

/// Builds the configured basis from a snapshot matrix.
pub fn build_rom(scenario: &Scenario, snapshots: &DenseMatrix) -> Result<RomArtifact> {
    let cfg = &scenario.config;
    let kind = cfg.rom.kind;
    let c = &scenario.constraint;
    if snapshots.rows() != scenario.n_unknowns() {
        return Err(Error::dim("build_rom snapshots", scenario.n_unknowns(), snapshots.rows()));
    }
    if snapshots.cols() == 0 {
        return Err(Error::InvalidArgument("snapshot matrix has no columns".into()));
    }
    let (basis, weights, hc, singular_values) = match &scenario.model {
        Model::Burgers(_) => {
            let agg = AggregationMatrix::from_matrix(c.clone());
            let b = match kind {
                RomKind::Pod | RomKind::Carlberg => {
                    pod_basis(snapshots, cfg.rom.size.expect("validated"))?
                }
                RomKind::Novel => {
                    let q = match (cfg.rom.size, cfg.rom.energy) {
                        (Some(q), _) => q,
                        (None, Some(e)) => constrained_pod_size(snapshots, &agg, e)?,
                        (None, None) => unreachable!("validated"),
                    };
                    let rank = constraint_rank(c)?;
                    if q < rank {
                        return Err(Error::InvalidArgument(format!(
                            "basis size q = {q} is smaller than rank(C) = {rank} (rank tolerance {DEFAULT_RANK_TOL:e})"
                        )));
                    }
                    constrained_pod_basis(snapshots, &agg, q)?
                }
            };
            let sv = crate::linalg::pod(snapshots, 0, DEFAULT_RANK_TOL)?.singular_values;
            let hc = b.constraint_rank();
            (b.matrix().clone(), None, hc, sv)
        }
        Model::Ns { ops, .. } => {
            let r_v = cfg.rom.size.expect("validated");
            let wb = match kind {
                RomKind::Pod | RomKind::Carlberg => {
                    weighted_pod_velocity_basis(snapshots, ops.omega(), r_v)?
                }
                RomKind::Novel => weighted_constrained_basis(snapshots, c, ops.omega(), r_v)?,
            };
            let hc = wb.constraint_rank();
            (wb.phi, Some(ops.omega().to_vec()), hc, wb.singular_values)
        }
    };
    let audit = audit(scenario, kind, &basis, hc, c)?;
    if audit.feasible == Some(false) {
        warn!("CᵀΦ is rank deficient; the perturbed ROM fails if the constraint data turn inconsistent");
    }
    info!(
        "built {} basis: {} columns ({} constraint, {} POD)",
        kind.name(),
        basis.cols(),
        hc,
        audit.pod_columns
    );
    Ok(RomArtifact {
        format: ARTIFACT_FORMAT.to_string(),
        problem: cfg.problem,
        kind,
        config_hash: cfg.hash(),
        basis,
        weights,
        constraint: c.clone(),
        singular_values,
        audit,
    })
}

fn check_artifact(scenario: &Scenario, artifact: &RomArtifact) -> Result<()> {
    let cfg = &scenario.config;
    if artifact.problem != cfg.problem || artifact.kind != cfg.rom.kind {
        return Err(Error::InvalidArgument(format!(
            "artifact is a {:?}/{} ROM but the config asks for {:?}/{}",
            artifact.problem,
            artifact.kind.name(),
            cfg.problem,
            cfg.rom.kind.name()
        )));
    }
    if artifact.basis.rows() != scenario.n_unknowns() {
        return Err(Error::dim("artifact basis", scenario.n_unknowns(), artifact.basis.rows()));
    }
    if artifact.constraint.shape() != scenario.constraint.shape() {
        return Err(Error::InvalidArgument(format!(
            "artifact constraint is {:?} but the config gives {:?}",
            artifact.constraint.shape(),
            scenario.constraint.shape()
        )));
    }
    if artifact.config_hash != cfg.hash() {
        warn!("artifact was built from a different configuration");
    }
    Ok(())
}

/// Output of a reduced-order run.
#[derive(Clone, Debug)]
pub struct RomRun {
    pub report: RunReport,
    /// Lifted states at the report rows.
    pub states: DenseMatrix,
    /// Final reduced coefficients in the coordinates of the stored basis.
    pub final_coefficients: Vec<f64>,
}

/// Integrates the reduced model. With a FOM trajectory sampled at the same
/// report rows, the `state_err_l2` column is filled in.
pub fn run_rom(
    scenario: &Scenario,
    artifact: &RomArtifact,
    fom_trajectory: Option<&DenseMatrix>,
) -> Result<RomRun> {
    check_artifact(scenario, artifact)?;
    if let Some(tr) = fom_trajectory {
        if tr.shape() != (scenario.n_unknowns(), scenario.n_report_rows()) {
            return Err(Error::InvalidArgument(format!(
                "FOM trajectory is {:?}, expected {:?}",
                tr.shape(),
                (scenario.n_unknowns(), scenario.n_report_rows())
            )));
        }
    }
    let start = Instant::now();
    let model = format!("rom_{}", artifact.kind.name());
    let c = &scenario.constraint;
    let (rows, states, final_coefficients) = match &scenario.model {
        Model::Burgers(fom) => run_burgers_rom(scenario, fom, artifact, fom_trajectory)?,
        Model::Ns { ops, nu, force } => {
            let split = divergence_free_split(&artifact.basis, ops.divergence_matrix())?;
            let mut rom = VelocityRom::new(ops, split, *nu, force.clone())?;
            if artifact.kind == RomKind::Carlberg {
                rom = rom.with_perturbation(c)?;
            }
            run_ns_rom(scenario, &rom, fom_trajectory)?
        }
    };
    Ok(RomRun {
        report: RunReport {
            rows,
            metadata: scenario.metadata(&model, start.elapsed().as_secs_f64()),
        },
        states,
        final_coefficients,
    })
}

type RomOutput = (Vec<ReportRow>, DenseMatrix, Vec<f64>);

fn run_burgers_rom(
    scenario: &Scenario,
    fom: &BurgersFom,
    artifact: &RomArtifact,
    trajectory: Option<&DenseMatrix>,
) -> Result<RomOutput> {
    let cfg = &scenario.config;
    let basis = ReducedBasis::new(
        artifact.basis.clone(),
        None,
        basis_kind(artifact.kind),
        artifact.audit.constraint_rank.min(artifact.basis.cols()),
    )?;
    let a0 = basis.project(&scenario.initial_state)?;
    let c = &scenario.constraint;
    match artifact.kind {
        RomKind::Pod => {
            let rom = GalerkinRom::new(fom, basis)?;
            let (rows, states, a) = integrate_reduced(scenario, fom, &rom, &a0, trajectory)?;
            Ok((rows, states, a))
        }
        RomKind::Carlberg => {
            let rom = PerturbedRom::new(fom, basis, c)?;
            integrate_reduced(scenario, fom, &rom, &a0, trajectory)
        }
        RomKind::Novel if cfg.rom.invariant.is_empty() => {
            let rom = GalerkinRom::new(fom, basis)?;
            integrate_reduced(scenario, fom, &rom, &a0, trajectory)
        }
        RomKind::Novel => {
            let flags = InvariantSpec::flags_from_indices(&cfg.rom.invariant, c.cols())?;
            let u_r0 = basis.lift(&a0)?;
            let spec = InvariantSpec::from_initial_condition(flags, c, &u_r0)?;
            let part = apply_invariant_offsets(&basis, c, &spec, &a0)?;
            info!(
                "froze {} coefficient(s); {} remain active",
                spec.n_frozen(),
                part.active.dim()
            );
            let rom = GalerkinRom::new(fom, part.active.clone())?.with_offset(part.offset.clone())?;
            let (rows, states, active) =
                integrate_reduced(scenario, fom, &rom, &part.active_initial, trajectory)?;
            Ok((rows, states, part.full_coefficients(&active)?))
        }
    }
}

fn integrate_reduced<F: FomSystem, R: ReducedDynamics>(
    scenario: &Scenario,
    fom: &F,
    rom: &R,
    a0: &[f64],
    trajectory: Option<&DenseMatrix>,
) -> Result<RomOutput> {
    let icfg = scenario.integrator_config();
    let (dt, method) = (icfg.dt, icfg.method);
    let c = &scenario.constraint;
    let out_stride = scenario.config.time.output_stride;
    let u0 = rom.lift(a0)?;
    let zero = rom.lift(&vec![0.0; a0.len()])?;
    let err_at = |row: usize, u: &[f64]| -> Option<f64> {
        trajectory.map(|tr| scenario.l2_distance(u, &tr.column(row)))
    };
    let mut rows = vec![ReportRow {
        t: 0.0,
        kinetic_energy: Some(scenario.kinetic_energy(&u0)),
        state_err_l2: err_at(0, &u0),
        ..Default::default()
    }];
    let mut states = vec![u0];
    let mut acc = IntervalMax::default();
    let rhs = |a: &[f64], t: f64| rom.rhs(a, t);
    let a_final = integrate(&rhs, a0, &icfg, |n, t, a, next| {
        let u = rom.lift(a)?;
        let u1 = rom.lift(next)?;
        let r = match method {
            Method::ImplicitMidpoint => discrete_residual(fom, c, method, &u, &u1, t, dt)?,
            Method::Rk4 if c.cols() > 0 => {
                let adot = rom.rhs(next, t + dt)?;
                let dudt: Vec<f64> = rom
                    .lift(&adot)?
                    .iter()
                    .zip(&zero)
                    .map(|(x, z)| x - z)
                    .collect();
                crate::rom::subdomain_residual(c, fom, &u1, &dudt, t + dt)?
            }
            Method::Rk4 => Vec::new(),
        };
        acc.add(max_abs(&r), None);
        if (n + 1) % out_stride == 0 {
            let (res, _) = acc.take();
            rows.push(ReportRow {
                t: scenario.step_time(n + 1),
                subdom_res_max: res,
                kinetic_energy: Some(scenario.kinetic_energy(&u1)),
                mass_res_max: None,
                state_err_l2: err_at(rows.len(), &u1),
            });
            states.push(u1);
        }
        Ok(())
    })?;
    Ok((rows, DenseMatrix::from_columns(&states)?, a_final))
}

fn run_ns_rom(
    scenario: &Scenario,
    rom: &VelocityRom<'_>,
    trajectory: Option<&DenseMatrix>,
) -> Result<RomOutput> {
    let icfg = scenario.integrator_config();
    let dt = icfg.dt;
    let c = &scenario.constraint;
    let out_stride = scenario.config.time.output_stride;
    let a0 = rom.project(&scenario.initial_state)?;
    let v0 = rom.lift(&a0)?;
    let err_at = |row: usize, v: &[f64]| -> Option<f64> {
        trajectory.map(|tr| scenario.l2_distance(v, &tr.column(row)))
    };
    let mut rows = vec![ReportRow {
        t: 0.0,
        kinetic_energy: Some(crate::ns_rom::kinetic_energy(&a0)),
        mass_res_max: Some(rom.mass_residual(&a0)?),
        state_err_l2: err_at(0, &v0),
        ..Default::default()
    }];
    let mut states = vec![v0];
    let mut acc = IntervalMax::default();
    let rhs = |a: &[f64], t: f64| rom.rhs(a, t);
    let a_final = integrate(&rhs, &a0, &icfg, |n, t, a, next| {
        let res = if c.cols() == 0 {
            None
        } else {
            max_abs(&rom.momentum_residual(c, a, next, t, dt)?)
        };
        acc.add(res, Some(rom.mass_residual(next)?));
        if (n + 1) % out_stride == 0 {
            let (res, mass) = acc.take();
            let v = rom.lift(next)?;
            rows.push(ReportRow {
                t: scenario.step_time(n + 1),
                subdom_res_max: res,
                kinetic_energy: Some(crate::ns_rom::kinetic_energy(next)),
                mass_res_max: mass,
                state_err_l2: err_at(rows.len(), &v),
            });
            states.push(v);
        }
        Ok(())
    })?;
    Ok((rows, DenseMatrix::from_columns(&states)?, a_final))
}

/// Recomputes the audit of a stored artifact and checks it against both
/// the stored numbers and the acceptance limits.
pub fn verify(scenario: &Scenario, artifact: &RomArtifact) -> Result<VerifyOutcome> {
    check_artifact(scenario, artifact)?;
    let hc = match artifact.kind {
        RomKind::Novel => artifact.basis.cols() - artifact.audit.pod_columns,
        _ => 0,
    };
    let fresh = audit(scenario, artifact.kind, &artifact.basis, hc, &artifact.constraint)?;
    let (mismatches, violations) = compare_audits(
        &artifact.audit,
        &fresh,
        artifact.kind,
        AuditLimits::new(artifact.problem, artifact.kind),
    );
    Ok(VerifyOutcome {
        recomputed: fresh,
        mismatches,
        violations,
    })
}

/// Report entries outside the configured tolerances.
pub fn tolerance_violations(cfg: &ScenarioConfig, report: &RunReport) -> Vec<String> {
    let mut out = Vec::new();
    let tol = &cfg.tolerances;
    for (name, limit) in [
        ("subdom_res_max", tol.subdomain_residual),
        ("mass_res_max", tol.mass),
    ] {
        if let (Some(limit), Some(v)) = (limit, report.column_max(name)) {
            if v > limit {
                out.push(format!("{name} reached {v:e}, above the tolerance {limit:e}"));
            }
        }
    }
    if let (Some(limit), Some(v)) = (tol.energy_drift, report.relative_energy_drift()) {
        if v > limit {
            out.push(format!("relative energy drift {v:e} above the tolerance {limit:e}"));
        }
    }
    out
}

/// File names inside a scenario's output directory.
#[derive(Clone, Debug)]
pub struct OutputLayout {
    pub dir: PathBuf,
}

impl OutputLayout {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn snapshots(&self) -> PathBuf {
        self.dir.join("snapshots.bin")
    }

    pub fn fom_trajectory(&self) -> PathBuf {
        self.dir.join("fom_trajectory.bin")
    }

    pub fn fom_report(&self) -> PathBuf {
        self.dir.join("fom_report.csv")
    }

    pub fn artifact(&self, kind: RomKind) -> PathBuf {
        self.dir.join(format!("rom_{}.json", kind.name()))
    }

    pub fn rom_report(&self, kind: RomKind) -> PathBuf {
        self.dir.join(format!("rom_{}_report.csv", kind.name()))
    }
}

fn layout(cfg: &ScenarioConfig) -> Result<OutputLayout> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    Ok(OutputLayout::new(&cfg.output_dir))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} does not exist; {hint}",
            path.display()
        )))
    }
}

/// `fom-run`: integrates the FOM and writes snapshots, trajectory and report.
pub fn fom_run_command(cfg: &ScenarioConfig) -> Result<FomRun> {
    let scenario = Scenario::new(cfg)?;
    let run = run_fom(&scenario)?;
    let out = layout(cfg)?;
    write_snapshots(&out.snapshots(), &run.snapshots)?;
    write_snapshots(&out.fom_trajectory(), &run.trajectory)?;
    run.report.write(&out.fom_report())?;
    Ok(run)
}

/// `build-basis`: reads the snapshots and writes the ROM artifact.
pub fn build_basis_command(cfg: &ScenarioConfig) -> Result<RomArtifact> {
    let scenario = Scenario::new(cfg)?;
    let out = layout(cfg)?;
    require(&out.snapshots(), "run fom-run first")?;
    let x = read_snapshots(&out.snapshots())?;
    let artifact = build_rom(&scenario, &x)?;
    artifact.write(&out.artifact(cfg.rom.kind))?;
    Ok(artifact)
}

/// `rom-run`: integrates the stored ROM and writes its report. Returns the
/// report and any tolerance violations.
pub fn rom_run_command(cfg: &ScenarioConfig) -> Result<(RunReport, Vec<String>)> {
    let scenario = Scenario::new(cfg)?;
    let out = layout(cfg)?;
    require(&out.artifact(cfg.rom.kind), "run build-basis first")?;
    let artifact = RomArtifact::read(&out.artifact(cfg.rom.kind))?;
    let trajectory = if out.fom_trajectory().exists() {
        let tr = read_snapshots(&out.fom_trajectory())?;
        if tr.shape() == (scenario.n_unknowns(), scenario.n_report_rows()) {
            Some(tr)
        } else {
            warn!("FOM trajectory does not match the report grid; state_err_l2 left empty");
            None
        }
    } else {
        None
    };
    let run = run_rom(&scenario, &artifact, trajectory.as_ref())?;
    run.report.write(&out.rom_report(cfg.rom.kind))?;
    let violations = tolerance_violations(cfg, &run.report);
    Ok((run.report, violations))
}

/// `verify`: re-audits the stored artifact.
pub fn verify_command(cfg: &ScenarioConfig) -> Result<VerifyOutcome> {
    let scenario = Scenario::new(cfg)?;
    let out = OutputLayout::new(&cfg.output_dir);
    require(&out.artifact(cfg.rom.kind), "run build-basis first")?;
    let artifact = RomArtifact::read(&out.artifact(cfg.rom.kind))?;
    verify(&scenario, &artifact)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BURGERS: &str = r#"
problem = "burgers1d"

[grid]
n = 24

[physics]
viscosity = 0.02

[initial_condition]
preset = "gaussian"
value = 0.2
center = 0.4
width = 0.1

[time]
dt = 0.01
t_end = 0.2
snapshot_stride = 2
output_stride = 5

[[subdomains]]
range = [0, 8]

[[subdomains]]
range = [8, 16]

[rom]
kind = "novel"
size = 5
"#;

    fn scenario(text: &str) -> Scenario {
        Scenario::new(&ScenarioConfig::from_toml_str(text).unwrap()).unwrap()
    }

    #[test]
    fn constant_state_is_steady() {
        let s = scenario(
            &BURGERS.replace("preset = \"gaussian\"", "preset = \"constant\"\nvalue = 0.7")
                .replace("value = 0.2\n", ""),
        );
        let run = run_fom(&s).unwrap();
        assert_eq!(run.snapshots.cols(), 11);
        for j in 0..run.snapshots.cols() {
            assert!(run.snapshots.column(j).iter().all(|&v| v == 0.7));
        }
    }

    #[test]
    fn report_rows_follow_output_stride() {
        let s = scenario(BURGERS);
        let run = run_fom(&s).unwrap();
        assert_eq!(run.report.rows.len(), 5);
        assert_eq!(run.trajectory.cols(), 5);
        assert!(run.report.rows[0].subdom_res_max.is_none());
        assert!((run.report.rows[4].t - 0.2).abs() < 1e-15);
        assert!(run.report.column_max("subdom_res_max").unwrap() < 1e-10);
    }

    #[test]
    fn novel_rom_is_subdomain_conservative_and_audit_reproduces() {
        let s = scenario(BURGERS);
        let fom = run_fom(&s).unwrap();
        let art = build_rom(&s, &fom.snapshots).unwrap();
        assert_eq!(art.audit.constraint_rank, 2);
        assert_eq!(art.audit.pod_columns, 3);
        let v = verify(&s, &art).unwrap();
        assert!(v.passed(), "{v:?}");
        let rom = run_rom(&s, &art, Some(&fom.trajectory)).unwrap();
        assert!(rom.report.column_max("subdom_res_max").unwrap() < 1e-10);
        assert!(rom.report.rows[0].state_err_l2.is_some());
    }

    #[test]
    fn full_basis_reproduces_fom() {
        let text = BURGERS
            .replace("kind = \"novel\"", "kind = \"pod\"")
            .replace("size = 5", "size = 24")
            .replace("snapshot_stride = 2", "snapshot_stride = 1");
        let s = scenario(&text);
        // Enough independent snapshots to span the whole space.
        let mut cols: Vec<Vec<f64>> = (0..24)
            .map(|k| (0..24).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        cols.push(s.initial_state.clone());
        let x = DenseMatrix::from_columns(&cols).unwrap();
        let fom = run_fom(&s).unwrap();
        let art = build_rom(&s, &x).unwrap();
        let rom = run_rom(&s, &art, Some(&fom.trajectory)).unwrap();
        assert!(rom.report.column_max("state_err_l2").unwrap() < 1e-9);
    }

    #[test]
    fn tampered_audit_is_reported() {
        let s = scenario(BURGERS);
        let fom = run_fom(&s).unwrap();
        let mut art = build_rom(&s, &fom.snapshots).unwrap();
        art.audit.orthonormality += 1e-9;
        let v = verify(&s, &art).unwrap();
        assert_eq!(v.mismatches.len(), 1);
        assert!(v.violations.is_empty());
    }

    #[test]
    fn tolerance_breach_is_listed() {
        let text = BURGERS.replace("kind = \"novel\"", "kind = \"pod\"")
            + "\n[tolerances]\nsubdomain_residual = 1e-14\n";
        let s = scenario(&text);
        let fom = run_fom(&s).unwrap();
        let art = build_rom(&s, &fom.snapshots).unwrap();
        let rom = run_rom(&s, &art, None).unwrap();
        assert_eq!(tolerance_violations(&s.config, &rom.report).len(), 1);
    }
}
