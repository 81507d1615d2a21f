//! Spectral cut-off regularization for first-kind Fredholm integral equations
//! on [0,1] with pointwise noisy data, including block averaging of
//! oversampled data and a coarse-to-fine discrepancy principle.
//!
//! Two solver paths are provided:
//!
//! * [`spectral_deriv2`]: closed-form eigen-decomposition for the `deriv2`
//!   kernel on the uniform interior grid, with an exact L2 error formula.
//! * [`quadrature_svd`]: midpoint-collocation matrices and dense SVD for
//!   arbitrary kernels, plus the singular-function machinery and error bounds.
//!
//! [`adaptive`] selects the truncation level and averaging level from data,
//! and [`experiments`] runs Monte Carlo studies and renders result tables.

// NaN must fail parameter checks, and index loops mirror the formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptive;
pub mod checks;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod quadrature_svd;
pub mod rng;
pub mod sampling;
pub mod spectral_deriv2;

pub use error::{Error, Result};
