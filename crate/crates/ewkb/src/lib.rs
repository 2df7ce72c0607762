//! Exact-WKB machinery for adiabatic transitions in multilevel Hamiltonians.
//!
//! The crate is organized in five layers, each usable on its own:
//!
//! * [`analytic`] — path quadrature, complex root finding, residues and
//!   argument-principle zero counting. Everything else is built on these
//!   primitives.
//! * [`model`] — polynomial Hamiltonian families (generic files plus the
//!   `nlzsm` / `lzsm3` built-ins) and [`branch`] — eigenvalue/eigenvector
//!   continuation along paths in complex time with a fixed smooth gauge.
//! * [`stokes`] — turning points, Stokes lines and the assembled graph,
//!   including CSV/SVG export.
//! * [`connection`] — per-crossing connection factors, transfer products and
//!   the `ewkb` / `ddp` / `gddp` / `perturbative` transition back-ends.
//! * [`integrate`] — an embedded Runge–Kutta reference integrator for the
//!   time-dependent Schrödinger equation, used as ground truth.
//!
//! Time is dimensionless throughout; the adiabaticity parameter `eta`
//! multiplies the Hamiltonian only when a phase or a probability is actually
//! computed, so all geometric objects (turning points, Stokes lines) are
//! `eta`-independent.

pub mod analytic;
pub mod branch;
pub mod connection;
pub mod integrate;
pub mod model;
pub mod stokes;

mod eig;
mod linalg;

pub use num_complex::Complex64 as C64;

/// One-stop error type covering every layer, mostly for CLI use.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Analytic(#[from] analytic::AnalyticError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Branch(#[from] branch::BranchError),
    #[error(transparent)]
    Stokes(#[from] stokes::StokesError),
    #[error(transparent)]
    Connection(#[from] connection::ConnectionError),
    #[error(transparent)]
    Integrate(#[from] integrate::IntegrateError),
}
