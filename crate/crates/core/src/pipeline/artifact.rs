//! Serialized ROM artifacts and their audits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::pipeline::config::{Problem, RomKind};

pub const ARTIFACT_FORMAT: &str = "scrom-rom-1";

/// Structural checks of a basis; recomputed on reload by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// `‖ΦᵀWΦ − I‖_max`.
    pub orthonormality: f64,
    /// `‖C − ΦΦᵀWC‖_max` (ns2d: `‖C − ΩφφᵀC‖_max`).
    pub inclusion: Option<f64>,
    /// `‖M φ₀‖_max` (ns2d).
    pub divergence: Option<f64>,
    /// `‖φ₀ᵀ G‖_max` (ns2d).
    pub phi0_gradient: Option<f64>,
    /// Rank of `C` at `rank_tol`.
    pub constraint_rank: usize,
    /// Number of POD columns in the basis.
    pub pod_columns: usize,
    /// Non-divergence-free / divergence-free split sizes (ns2d).
    pub r1: Option<usize>,
    pub r2: Option<usize>,
    /// Whether `CᵀΦ` has full row rank (carlberg). Rank-deficient but
    /// consistent constraints are still usable.
    pub feasible: Option<bool>,
    pub rank_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomArtifact {
    pub format: String,
    pub problem: Problem,
    pub kind: RomKind,
    pub config_hash: String,
    /// `Φ` (burgers1d) or the full velocity basis `φ` (ns2d).
    pub basis: DenseMatrix,
    pub weights: Option<Vec<f64>>,
    pub constraint: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub audit: AuditRecord,
}

impl RomArtifact {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let a: Self = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Format {
                path: path.display().to_string(),
                message: format!("unsupported artifact format {:?}", a.format),
            });
        }
        Ok(a)
    }
}

/// Absolute agreement required between stored and recomputed audits.
pub const AUDIT_REPRODUCTION_TOL: f64 = 1e-14;

/// Acceptable audit values.
#[derive(Clone, Copy, Debug)]
pub struct AuditLimits {
    pub orthonormality: f64,
    pub inclusion: f64,
    pub divergence: f64,
    pub phi0_gradient: f64,
}

impl AuditLimits {
    /// Novel bases must keep `φ₀` divergence-free to `1e-11`; plain POD
    /// bases carry more roundoff from weakly excited modes and are held to
    /// the `1e-10` mass tolerance.
    pub fn new(problem: Problem, kind: RomKind) -> Self {
        match problem {
            Problem::Burgers1d => Self {
                orthonormality: 1e-12,
                inclusion: 1e-12,
                divergence: f64::INFINITY,
                phi0_gradient: f64::INFINITY,
            },
            Problem::Ns2d => {
                let div = if kind == RomKind::Novel { 1e-11 } else { 1e-10 };
                Self {
                    orthonormality: 1e-12,
                    inclusion: 1e-11,
                    divergence: div,
                    phi0_gradient: div,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOutcome {
    pub recomputed: AuditRecord,
    /// Stored numbers that the recomputation does not reproduce.
    pub mismatches: Vec<String>,
    /// Audits outside their limits.
    pub violations: Vec<String>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.violations.is_empty()
    }
}

pub(crate) fn compare_audits(
    stored: &AuditRecord,
    fresh: &AuditRecord,
    kind: RomKind,
    limits: AuditLimits,
) -> (Vec<String>, Vec<String>) {
    let mut mismatches = Vec::new();
    let mut check = |name: &str, a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) if (x - y).abs() <= AUDIT_REPRODUCTION_TOL => {}
        (None, None) => {}
        _ => mismatches.push(format!("{name}: stored {a:?}, recomputed {b:?}")),
    };
    check("orthonormality", Some(stored.orthonormality), Some(fresh.orthonormality));
    check("inclusion", stored.inclusion, fresh.inclusion);
    check("divergence", stored.divergence, fresh.divergence);
    check("phi0_gradient", stored.phi0_gradient, fresh.phi0_gradient);
    let as_f = |v: Option<usize>| v.map(|x| x as f64);
    check("constraint_rank", Some(stored.constraint_rank as f64), Some(fresh.constraint_rank as f64));
    check("pod_columns", Some(stored.pod_columns as f64), Some(fresh.pod_columns as f64));
    check("r1", as_f(stored.r1), as_f(fresh.r1));
    check("r2", as_f(stored.r2), as_f(fresh.r2));
    if stored.feasible != fresh.feasible {
        mismatches.push(format!(
            "feasible: stored {:?}, recomputed {:?}",
            stored.feasible, fresh.feasible
        ));
    }

    let mut violations = Vec::new();
    if fresh.orthonormality > limits.orthonormality {
        violations.push(format!(
            "orthonormality residual {:e} exceeds {:e}",
            fresh.orthonormality, limits.orthonormality
        ));
    }
    if kind == RomKind::Novel {
        if let Some(v) = fresh.inclusion.filter(|&v| v > limits.inclusion) {
            violations.push(format!("constraint inclusion residual {v:e} exceeds {:e}", limits.inclusion));
        }
    }
    if let Some(v) = fresh.divergence.filter(|&v| v > limits.divergence) {
        violations.push(format!("divergence of φ₀ {v:e} exceeds {:e}", limits.divergence));
    }
    if let Some(v) = fresh.phi0_gradient.filter(|&v| v > limits.phi0_gradient) {
        violations.push(format!("φ₀ᵀG {v:e} exceeds {:e}", limits.phi0_gradient));
    }
    (mismatches, violations)
}
