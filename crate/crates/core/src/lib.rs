//! Integrated organic inference.
//!
//! Full conditional post-data densities are built from fiducial, bispatial and
//! Bayesian arguments and combined by Gibbs sampling, which tolerates sets of
//! conditionals that are not exactly compatible.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod bispatial;
pub mod density;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod fiducial;
pub mod gibbs;
pub mod output;
pub mod quadrature;
pub mod scenarios;

pub use density::Density;
pub use distributions::{Distribution, Family};
pub use error::{Error, Result};
