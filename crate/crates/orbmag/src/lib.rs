//! Zero-field orbital magnetic susceptibility of a single attractive well and of a
//! tight-binding crystal built from it, on finite-difference grids.

// `!(x > 0.0)` comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate blas_src;

pub mod bands;
pub mod cli;
pub mod eigensolve;
pub mod error;
pub mod finite_t;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod susceptibility;
pub mod sweep;
pub mod thermo;

pub use error::{Error, Result};
