//! Numerical verification lab for heat-flow comparison and decay of
//! Navier–Stokes solutions, and for explicit L^∞ bounds of conservative
//! advection–diffusion equations obtained by L^p–L^q iteration.
//!
//! Modules:
//! - [`grid`]: periodic pseudospectral grid, fields, transforms and norms.
//! - [`heat`]: exact heat semigroup and its smoothing/decay checks.
//! - [`navier_stokes`]: pseudospectral incompressible solver and its certificates.
//! - [`advdiff`]: finite-volume solver for conservative advection–diffusion.
//! - [`moser`]: exact bookkeeping of the iteration constants.
//! - [`inequality`]: corpus auditor for the functional inequalities.
//! - [`runner`]: scenario configuration, orchestration and report emission.

pub mod advdiff;
pub mod certificate;
pub mod error;
pub mod grid;
pub mod heat;
pub mod inequality;
pub mod moser;
pub mod navier_stokes;
pub mod runner;

pub use certificate::{BoundCertificate, CertStatus};
pub use error::{LabError, Result};
