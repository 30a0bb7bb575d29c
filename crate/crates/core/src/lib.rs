//! Polynomial kernel regression over fundamental systems of centers.
//!
//! The crate fits least-squares estimators in the span of translated
//! polynomial kernels `(1 + η_j·x)^s`, alongside classical kernel ridge
//! regression, and provides the parameter selection and experiment
//! harness used by the `epkr` command-line tool.

pub mod centers;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod kernel;
pub mod linalg;
pub mod rng;
pub mod selection;

pub use error::{Error, ErrorKind, Result};
