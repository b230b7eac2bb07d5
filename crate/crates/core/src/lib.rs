//! Monotone schemes for fractional and nonlocal Hamilton–Jacobi–Bellman equations.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functions;
pub mod grid;
pub mod model;
pub mod measure;
pub mod correction;
pub mod stencil;
pub mod special;
pub mod fraclap;
pub mod reference;
pub mod solver;
pub mod io;
pub mod catalog;
pub mod rates;
pub mod check;

pub use error::{Error, Result};
