//! Finite-element solver for the two-phase Cahn–Hilliard/Navier–Stokes
//! system with variable densities, and a discrete-adjoint optimal control
//! layer on top of it.

pub mod adapt;
pub mod adjoint;
pub mod control;
pub mod error;
pub mod fem;
pub mod forward;
pub mod material;
pub mod mesh;
pub mod optimize;

pub use error::{Error, Result};
