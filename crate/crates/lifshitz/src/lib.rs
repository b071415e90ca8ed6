//! Casimir-Lifshitz electromagnetic-fluctuation energies between dielectric
//! bodies, computed from a perturbative expansion in the dielectric
//! contrast, with exact planar reference solvers, a layered log-det engine,
//! and second-order rough-surface energies.
//!
//! Internal units: `hbar = c = 1` with one reference frequency `omega_ref`;
//! lengths in `c / omega_ref`, energies per unit area in
//! `hbar omega_ref^3 / c^2`.

pub mod error;
pub mod exact_planar;
pub mod layered;
pub mod materials;
pub mod quadrature;
pub mod rough;
pub mod scenario;
pub mod specfun;

pub use error::{Error, Result};
pub use materials::DielectricModel;
pub use quadrature::{QuadratureSpec, Transform};
