//! Finite-element solver and adjoint-based boundary-control optimizer for
//! the stationary micropolar fluid system with variable density in 2D.
//!
//! The state model couples linear momentum, microrotation, incompressibility
//! and density transport; the density is reconstructed as a function of the
//! stream function, `rho = eta(N u)`, so the transport equation holds along
//! streamlines by construction. On top of the state solver the crate provides
//! the tracking objective with `H^{1/2}` boundary-control costs, the
//! penalized functional with its multiplier formulas, the adjoint system,
//! and a projected-gradient optimizer with variational-inequality and
//! projection certificates.

pub mod density;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod halfnorm;
pub mod mesh;
pub mod adjoint;
pub mod assemble;
pub mod cli;
pub mod config;
pub mod control;
pub mod objective;
pub mod optimizer;
pub mod penalty;
pub mod problem;
pub mod quadrature;
pub mod report;
pub mod spaces;
pub mod samples;
pub mod state;
pub mod stream;

pub use error::{Error, Result};
