//! Matrix gauge fields on the torus: gauge transforms, field strengths,
//! Euler–Lagrange residuals and Noether fluxes, each checked numerically.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod matcore;
pub mod serial;
pub mod lie;
pub mod fields;
pub mod lagrangian;
pub mod gauge_lagrangian;
pub mod noether;
pub mod oracles;

pub use error::{Error, Result};
pub use matcore::{CMatrix, MatrixShape, C64};
