//! Projection-based ROMs for conservation laws.
//!
//! * [`basis`]: POD, constrained POD (`Φ̃ = [Q₁ Q₂V]`) and span merging.
//! * [`galerkin`]: the Galerkin ROM and the subdomain residual diagnostic.
//! * [`cop`]: the constrained-optimization ROM as a perturbed Galerkin ODE,
//!   plus a null-space least-squares solver used to cross-check it.
//! * [`invariant`]: freezing coefficients of time-invariant quantities.

pub mod basis;
pub mod cop;
pub mod galerkin;
pub mod invariant;

pub use basis::{
    constrained_pod_basis, constrained_pod_size, pod_basis, span_merge_basis, weighted_pod_basis,
    BasisKind, ReducedBasis,
};
pub use cop::{cop_solve, perturbation_term, Perturbation, PerturbedRom, FEASIBILITY_TOL};
pub use galerkin::{galerkin_rhs, subdomain_residual, GalerkinRom};
pub use invariant::{apply_invariant_offsets, InvariantPartition, InvariantSpec};
