//! Dense linear algebra: SVD, pseudo-inverse, rank, shifted solves and
//! symmetric eigenvalues. Everything is pure and deterministic.

mod eigen;
mod matrix;
mod ridge;
mod svd;

pub use eigen::{min_eig_sym, sym_eigen, SymEigen};
pub use matrix::{dot, norm2, Matrix};
pub use ridge::{pivoted_cholesky, solve_ridge, PivotedCholesky, RidgePath, RIDGE_RESIDUAL_TOL};
pub use svd::{pinv, rank, svd, SvdFactors};
