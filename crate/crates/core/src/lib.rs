//! Subdomain-conservative projection-based reduced order models for
//! finite-volume discretizations.
//!
//! The crate covers the full pipeline:
//!
//! * [`mesh`]: 1D meshes, subdomain decompositions and the aggregation
//!   matrix `C` that maps cell values to subdomain averages.
//! * [`linalg`]: dense Householder QR with column pivoting, one-sided Jacobi
//!   SVD, pseudoinverse and (weighted) POD.
//! * [`fom`]: the generic conservation-law FOM interface and a periodic
//!   viscous Burgers finite-volume model.
//! * [`ns_fom`]: an energy-conserving staggered-grid discretization of the
//!   periodic incompressible Navier-Stokes equations.
//! * [`rom`]: POD-Galerkin ROMs, the constrained-optimization (perturbed ODE)
//!   baseline and the basis-modified subdomain-conservative ROM.
//! * [`ns_rom`]: the weighted constrained velocity basis, divergence-free
//!   splitting and the pressure-free velocity ROM.
//! * [`timeint`]: RK4 and implicit midpoint integrators.
//! * [`pipeline`]: scenario configuration, file formats and the end-to-end
//!   driver used by the `scrom` CLI.

pub mod error;
pub mod fom;
pub mod linalg;
pub mod mesh;
pub mod ns_fom;
pub mod ns_rom;
pub mod par;
pub mod pipeline;
pub mod rom;
pub mod timeint;

pub use error::{Error, Result};
pub use par::Exec;
