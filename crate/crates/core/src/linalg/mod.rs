//! Dense real matrices and a symmetric eigensolver.

mod eigen;
mod matrix;

pub use eigen::{symmetric_eigendecomposition, SymmetricEigen};
pub use matrix::{dot, norm, relative_error, Matrix};
