//! Exact adiabatic elimination of fast modes in open quantum systems through
//! the time-convolutionless projection formalism.
//!
//! The crate builds dense Liouvillian superoperators, separates surviving
//! from fast modes, constructs the exact TCL projector `P(t)`, inhomogeneity
//! `J(t)` and reduction maps `(K, F)`, compares them with perturbative and
//! Laplace-transform expansions, and drives the reproduction experiments.

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod liouvillian;
pub mod models;
pub mod numerics;
pub mod perturb;
pub mod spectral;
pub mod tcl;

pub use error::{Error, Result};
