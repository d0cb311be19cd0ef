//! Lagrange spaces, assembly, inter-mesh transfer, boundary traces and
//! sparse linear algebra.

mod assemble;
pub mod basis;
mod interpolate;
pub mod model;
mod space;
pub mod sparse;
mod trace;

pub use assemble::{
    assemble_form, assemble_trilinear, coupling_pattern, integrate_p1, p1_load, p1_mass, p1_stiffness, p2_gradient_at,
    p2_load, Form, Transport,
};
pub use interpolate::{interpolate, interpolate_vector, p1_interpolation_matrix, p2_interpolation_matrix};
pub use space::{DofEntity, FeSpace, ScalarField, SpaceKind, VectorField};
pub use sparse::{solve_sparse, CscMatrix, Pattern, SparseLu, SparseSystem};
pub use trace::{trace_project, TraceProjector};
