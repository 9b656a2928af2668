//! Scenario configuration (TOML).
//!
//! Every table rejects unknown keys. [`ScenarioConfig::validate`] checks
//! cross-field consistency before any run and names the offending key in
//! its error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::timeint::{Method, StageSolver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Burgers1d,
    Ns2d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RomKind {
    Pod,
    Novel,
    Carlberg,
}

impl RomKind {
    pub fn name(self) -> &'static str {
        match self {
            RomKind::Pod => "pod",
            RomKind::Novel => "novel",
            RomKind::Carlberg => "carlberg",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Number of cells (burgers1d).
    pub n: Option<usize>,
    /// Domain length (burgers1d), default 1.
    pub length: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// Domain size (ns2d), default 1.
    pub lx: Option<f64>,
    pub ly: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceKind {
    #[default]
    None,
    Constant,
    Sine,
}

/// Source term (burgers1d) or body force (ns2d).
///
/// * `constant`: `(fx, fy)`; burgers1d uses `fx` only.
/// * `sine`: `amplitude * sin(2π wavenumber x / L)` for burgers1d, and the
///   Kolmogorov forcing `f_x = amplitude * sin(2π wavenumber y / ly)` for
///   ns2d.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceConfig {
    #[serde(default)]
    pub kind: ForceKind,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fy: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_wavenumber")]
    pub wavenumber: u32,
}

fn default_wavenumber() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub viscosity: f64,
    #[serde(default)]
    pub force: ForceConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IcPreset {
    /// burgers1d: `u = value`.
    Constant,
    /// burgers1d: `value + amplitude * exp(-((x - center)/width)²)`.
    Gaussian,
    /// burgers1d: `value + Σ_k coefficients[k-1] sin(2π k x / L)`.
    Sine,
    /// ns2d: single-mode Taylor-Green vortex.
    TaylorGreen,
    /// ns2d: random stream function with wavenumbers up to `modes`,
    /// rescaled to peak velocity `amplitude`; drawn from the scenario seed.
    RandomModes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionConfig {
    pub preset: IcPreset,
    #[serde(default)]
    pub value: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "half")]
    pub center: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default)]
    pub coefficients: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: usize,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_width() -> f64 {
    0.1
}

fn default_modes() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "one_usize")]
    pub snapshot_stride: usize,
    #[serde(default = "one_usize")]
    pub output_stride: usize,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default)]
    pub stage_solver: StageSolver,
}

fn one_usize() -> usize {
    1
}

fn default_newton_tol() -> f64 {
    crate::timeint::DEFAULT_NEWTON_TOL
}

fn default_newton_max_iter() -> usize {
    crate::timeint::DEFAULT_NEWTON_MAX_ITER
}

impl TimeConfig {
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    /// Half-open cell range `[i0, i1)` in x.
    pub i: [usize; 2],
    /// Half-open cell range `[j0, j1)` in y.
    pub j: [usize; 2],
}

/// One subdomain. burgers1d takes `cells` or `range`; ns2d takes `rect`
/// (applied to both velocity components) or explicit `u` / `v` lists.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubdomainConfig {
    pub cells: Option<Vec<usize>>,
    pub range: Option<[usize; 2]>,
    pub rect: Option<RectConfig>,
    pub u: Option<Vec<usize>>,
    pub v: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomConfig {
    pub kind: RomKind,
    /// `p` (pod, carlberg), `q` (novel) or `R_V` (ns2d).
    pub size: Option<usize>,
    /// Energy fraction selecting the POD part of a novel basis when `size`
    /// is omitted.
    pub energy: Option<f64>,
    /// Constraint columns whose subdomain quantity is time invariant.
    #[serde(default)]
    pub invariant: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on the `subdom_res_max` column of ROM reports.
    pub subdomain_residual: Option<f64>,
    /// Bound on the `mass_res_max` column.
    pub mass: Option<f64>,
    /// Bound on `|K(t) − K(0)| / K(0)`.
    pub energy_drift: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Largest allowed per-column max absolute difference.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub problem: Problem,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub initial_condition: InitialConditionConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub subdomains: Vec<SubdomainConfig>,
    pub rom: RomConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub compare: CompareConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Report columns that `compare.thresholds` may refer to.
pub const REPORT_COLUMNS: [&str; 4] = [
    "subdom_res_max",
    "kinetic_energy",
    "mass_res_max",
    "state_err_l2",
];

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn absent<T>(field: &str, v: &Option<T>, problem: &str) -> Result<()> {
    if v.is_some() {
        Err(Error::config(field, format!("not used by {problem}")))
    } else {
        Ok(())
    }
}

fn check_indices(field: &str, indices: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::config(field, format!("index {i} out of range for {n} cells")));
        }
        if seen[i] {
            return Err(Error::config(field, format!("index {i} listed twice")));
        }
        seen[i] = true;
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
                .unwrap_or("<toml>")
                .to_string();
            Error::config(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<toml>", e.to_string()))
    }

    /// SHA-256 of the canonical JSON serialization, with `output_dir`
    /// reset so that relocating a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = default_output_dir();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of full-order unknowns.
    pub fn n_unknowns(&self) -> usize {
        match self.problem {
            Problem::Burgers1d => self.grid.n.unwrap_or(0),
            Problem::Ns2d => 2 * self.grid.nx.unwrap_or(0) * self.grid.ny.unwrap_or(0),
        }
    }

    /// Number of constraint columns the subdomain list produces.
    pub fn n_constraints(&self) -> usize {
        match self.problem {
            Problem::Burgers1d => self.subdomains.len(),
            Problem::Ns2d => self
                .subdomains
                .iter()
                .map(|s| {
                    if s.rect.is_some() {
                        2
                    } else {
                        usize::from(s.u.as_ref().is_some_and(|u| !u.is_empty()))
                            + usize::from(s.v.as_ref().is_some_and(|v| !v.is_empty()))
                    }
                })
                .sum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_grid()?;
        let nu = self.physics.viscosity;
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(Error::config("physics.viscosity", format!("must be >= 0, got {nu}")));
        }
        self.validate_force()?;
        self.validate_ic()?;
        self.validate_time()?;
        self.validate_subdomains()?;
        self.validate_rom()?;
        for (field, v) in [
            ("tolerances.subdomain_residual", self.tolerances.subdomain_residual),
            ("tolerances.mass", self.tolerances.mass),
            ("tolerances.energy_drift", self.tolerances.energy_drift),
        ] {
            if let Some(v) = v {
                positive(field, v)?;
            }
        }
        for (name, &v) in &self.compare.thresholds {
            let field = format!("compare.thresholds.{name}");
            if !REPORT_COLUMNS.contains(&name.as_str()) {
                return Err(Error::config(field, "unknown report column"));
            }
            if !(v >= 0.0) {
                return Err(Error::config(field, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn validate_grid(&self) -> Result<()> {
        let g = &self.grid;
        match self.problem {
            Problem::Burgers1d => {
                let n = g.n.ok_or_else(|| Error::config("grid.n", "required for burgers1d"))?;
                if n < 2 {
                    return Err(Error::config("grid.n", format!("need at least 2 cells, got {n}")));
                }
                if let Some(l) = g.length {
                    positive("grid.length", l)?;
                }
                absent("grid.nx", &g.nx, "burgers1d")?;
                absent("grid.ny", &g.ny, "burgers1d")?;
                absent("grid.lx", &g.lx, "burgers1d")?;
                absent("grid.ly", &g.ly, "burgers1d")?;
            }
            Problem::Ns2d => {
                for (field, v) in [("grid.nx", g.nx), ("grid.ny", g.ny)] {
                    let v = v.ok_or_else(|| Error::config(field, "required for ns2d"))?;
                    if v < 3 {
                        return Err(Error::config(field, format!("need at least 3 cells, got {v}")));
                    }
                }
                for (field, v) in [("grid.lx", g.lx), ("grid.ly", g.ly)] {
                    if let Some(v) = v {
                        positive(field, v)?;
                    }
                }
                absent("grid.n", &g.n, "ns2d")?;
                absent("grid.length", &g.length, "ns2d")?;
            }
        }
        Ok(())
    }

    fn validate_force(&self) -> Result<()> {
        let f = &self.physics.force;
        for (field, v) in [
            ("physics.force.fx", f.fx),
            ("physics.force.fy", f.fy),
            ("physics.force.amplitude", f.amplitude),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        match f.kind {
            ForceKind::None => {
                if f.fx != 0.0 || f.fy != 0.0 || f.amplitude != 0.0 {
                    return Err(Error::config(
                        "physics.force.kind",
                        "force values given but kind is \"none\"",
                    ));
                }
            }
            ForceKind::Constant => {
                if self.problem == Problem::Burgers1d && f.fy != 0.0 {
                    return Err(Error::config("physics.force.fy", "not used by burgers1d"));
                }
            }
            ForceKind::Sine => {
                if f.wavenumber == 0 {
                    return Err(Error::config("physics.force.wavenumber", "must be >= 1"));
                }
            }
        }
        Ok(())
    }

    fn validate_ic(&self) -> Result<()> {
        let ic = &self.initial_condition;
        let burgers = self.problem == Problem::Burgers1d;
        let ok = matches!(
            (ic.preset, burgers),
            (IcPreset::Constant | IcPreset::Gaussian | IcPreset::Sine, true)
                | (IcPreset::TaylorGreen | IcPreset::RandomModes, false)
        );
        if !ok {
            return Err(Error::config(
                "initial_condition.preset",
                format!("preset {:?} does not apply to {:?}", ic.preset, self.problem),
            ));
        }
        for (field, v) in [
            ("initial_condition.value", ic.value),
            ("initial_condition.amplitude", ic.amplitude),
            ("initial_condition.center", ic.center),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        match ic.preset {
            IcPreset::Gaussian => positive("initial_condition.width", ic.width)?,
            IcPreset::Sine => {
                if ic.coefficients.is_empty() {
                    return Err(Error::config("initial_condition.coefficients", "must not be empty"));
                }
                if ic.coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("initial_condition.coefficients", "must be finite"));
                }
            }
            IcPreset::RandomModes => {
                if ic.modes == 0 {
                    return Err(Error::config("initial_condition.modes", "must be >= 1"));
                }
            }
            IcPreset::Constant | IcPreset::TaylorGreen => {}
        }
        Ok(())
    }

    fn validate_time(&self) -> Result<()> {
        let t = &self.time;
        positive("time.dt", t.dt)?;
        positive("time.t_end", t.t_end)?;
        if t.t_end < t.dt {
            return Err(Error::config("time.t_end", "shorter than one step"));
        }
        let steps = t.t_end / t.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config("time.t_end", "must be an integer multiple of time.dt"));
        }
        if t.snapshot_stride == 0 {
            return Err(Error::config("time.snapshot_stride", "must be >= 1"));
        }
        if t.output_stride == 0 {
            return Err(Error::config("time.output_stride", "must be >= 1"));
        }
        positive("time.newton_tol", t.newton_tol)?;
        if t.newton_max_iter == 0 {
            return Err(Error::config("time.newton_max_iter", "must be >= 1"));
        }
        if self.problem == Problem::Ns2d && t.method != Method::ImplicitMidpoint {
            return Err(Error::config(
                "time.method",
                "ns2d runs use the energy-conserving implicit midpoint rule",
            ));
        }
        Ok(())
    }

    fn validate_subdomains(&self) -> Result<()> {
        for (k, s) in self.subdomains.iter().enumerate() {
            let field = |name: &str| format!("subdomains[{k}].{name}");
            match self.problem {
                Problem::Burgers1d => {
                    let n = self.grid.n.unwrap_or(0);
                    absent(&field("rect"), &s.rect, "burgers1d")?;
                    absent(&field("u"), &s.u, "burgers1d")?;
                    absent(&field("v"), &s.v, "burgers1d")?;
                    match (&s.cells, &s.range) {
                        (Some(_), Some(_)) => {
                            return Err(Error::config(field("range"), "give either cells or range"))
                        }
                        (None, None) => {
                            return Err(Error::config(field("cells"), "cells or range required"))
                        }
                        (Some(c), None) => {
                            if c.is_empty() {
                                return Err(Error::config(field("cells"), "must not be empty"));
                            }
                            check_indices(&field("cells"), c, n)?;
                        }
                        (None, Some([a, b])) => {
                            if a >= b || *b > n {
                                return Err(Error::config(
                                    field("range"),
                                    format!("[{a}, {b}) is not a nonempty range within {n} cells"),
                                ));
                            }
                        }
                    }
                }
                Problem::Ns2d => {
                    let (nx, ny) = (self.grid.nx.unwrap_or(0), self.grid.ny.unwrap_or(0));
                    absent(&field("cells"), &s.cells, "ns2d")?;
                    absent(&field("range"), &s.range, "ns2d")?;
                    if let Some(r) = &s.rect {
                        if s.u.is_some() || s.v.is_some() {
                            return Err(Error::config(field("rect"), "give either rect or u/v lists"));
                        }
                        for (name, [a, b], n) in [("rect.i", r.i, nx), ("rect.j", r.j, ny)] {
                            if a >= b || b > n {
                                return Err(Error::config(
                                    field(name),
                                    format!("[{a}, {b}) is not a nonempty range within {n} cells"),
                                ));
                            }
                        }
                    } else {
                        let u = s.u.as_deref().unwrap_or(&[]);
                        let v = s.v.as_deref().unwrap_or(&[]);
                        if u.is_empty() && v.is_empty() {
                            return Err(Error::config(field("u"), "rect or a nonempty u/v list required"));
                        }
                        check_indices(&field("u"), u, nx * ny)?;
                        check_indices(&field("v"), v, nx * ny)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_rom(&self) -> Result<()> {
        let r = &self.rom;
        let n = self.n_unknowns();
        let k = self.n_constraints();
        if r.kind != RomKind::Pod && k == 0 {
            return Err(Error::config(
                "subdomains",
                format!("rom kind {} needs at least one subdomain", r.kind.name()),
            ));
        }
        match (r.size, r.energy) {
            (Some(_), Some(_)) => {
                return Err(Error::config("rom.energy", "give either rom.size or rom.energy"))
            }
            (None, None) => return Err(Error::config("rom.size", "rom.size or rom.energy required")),
            (Some(s), None) => {
                if s == 0 || s > n {
                    return Err(Error::config("rom.size", format!("must be in 1..={n}, got {s}")));
                }
                if r.kind == RomKind::Novel && s < k.min(n) && self.problem == Problem::Burgers1d {
                    return Err(Error::config(
                        "rom.size",
                        format!("q = {s} is smaller than the {k} constraint columns"),
                    ));
                }
            }
            (None, Some(e)) => {
                if !(e > 0.0 && e <= 1.0) {
                    return Err(Error::config("rom.energy", format!("must be in (0, 1], got {e}")));
                }
                if r.kind != RomKind::Novel || self.problem != Problem::Burgers1d {
                    return Err(Error::config(
                        "rom.energy",
                        "energy-based sizing applies to burgers1d novel ROMs only",
                    ));
                }
            }
        }
        if !r.invariant.is_empty() {
            if r.kind != RomKind::Novel || self.problem != Problem::Burgers1d {
                return Err(Error::config(
                    "rom.invariant",
                    "invariant freezing applies to burgers1d novel ROMs only",
                ));
            }
            check_indices("rom.invariant", &r.invariant, k)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const BURGERS: &str = r#"
problem = "burgers1d"
seed = 7

[grid]
n = 32

[physics]
viscosity = 0.01

[initial_condition]
preset = "gaussian"
center = 0.3
width = 0.08

[time]
dt = 0.01
t_end = 0.5

[[subdomains]]
range = [0, 10]

[[subdomains]]
cells = [10, 11, 12, 30]

[rom]
kind = "novel"
size = 6
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ScenarioConfig::from_toml_str(BURGERS).unwrap();
        assert_eq!(cfg.problem, Problem::Burgers1d);
        assert_eq!(cfg.time.n_steps(), 50);
        assert_eq!(cfg.n_constraints(), 2);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.hash().len(), 64);
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
    }

    fn field_of(text: &str) -> String {
        match ScenarioConfig::from_toml_str(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BURGERS.replace("n = 32", "n = 32\nnn = 3");
        assert_eq!(field_of(&text), "nn");
    }

    #[test]
    fn inconsistent_fields_are_named() {
        assert_eq!(field_of(&BURGERS.replace("dt = 0.01", "dt = 0.03")), "time.t_end");
        assert_eq!(field_of(&BURGERS.replace("size = 6", "size = 1")), "rom.size");
        assert_eq!(field_of(&BURGERS.replace("[10, 11, 12, 30]", "[10, 40]")), "subdomains[1].cells");
        assert_eq!(field_of(&BURGERS.replace("n = 32", "nx = 32")), "grid.n");
        assert_eq!(
            field_of(&BURGERS.replace("preset = \"gaussian\"", "preset = \"taylor_green\"")),
            "initial_condition.preset"
        );
        assert_eq!(
            field_of(&BURGERS.replace("size = 6", "size = 6\ninvariant = [2]")),
            "rom.invariant"
        );
    }
}
