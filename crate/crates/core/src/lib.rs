//! Dirichlet boundary control of the heat equation: space-time finite
//! elements, a reduced-gradient formulation and a primal-dual active set
//! solver, with a manufactured-solution convergence study.

// `!(x > 0.0)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjoint;
pub mod assembly;
pub mod checks;
pub mod cli;
pub mod error;
pub mod forward;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod optimizer;
pub mod quadrature;
pub mod sparse;
pub mod spaces;

pub use error::{Error, Result};
