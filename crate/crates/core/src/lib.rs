//! Mild-solution solver and well-posedness harness for the n-layer
//! reaction-diffusion-convection combustion system
//!
//! ```text
//! u_t - alpha_i(x,t) u_xx + beta_i(x,t) u_x = f_i(x, t, u),   u(x, 0) = phi(x)
//! ```
//!
//! with `alpha_i = lambda_i / (a_i + b_i y_i)`, `beta_i = c_i / (a_i + b_i y_i)`
//! and an Arrhenius source coupling neighbouring layers.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: uniform truncated grid, stencils and discrete Sobolev norms.
//! - [`expr`]: the closed analytic vocabulary used for coefficient fields.
//! - [`model`]: layer parameters, fuel concentration, hypothesis validation.
//! - [`reaction`]: Arrhenius law, source vector, Jacobian, sampled constants.
//! - [`evolution`]: discrete propagator `U(t, s)` of the frozen linear part.
//! - [`solver`]: Picard map on the contraction set, window selection,
//!   windowed continuation and a method-of-lines oracle.
//! - [`wellposed`]: continuous-dependence experiments.
//! - [`scenario`], [`output`], [`cli`]: the user surface.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evolution;
pub mod expr;
pub mod grid;
pub mod model;
pub mod output;
pub mod reaction;
pub mod scenario;
pub mod solver;
pub mod wellposed;

pub use error::{Error, Result};
pub use grid::{GridFunction, GridSpec, NormKind};
