//! Discriminant analysis with errors in variables: deconvolution-kernel empirical
//! risk minimization over nets of candidate functions, and a Monte Carlo harness
//! for convergence-rate experiments.

pub mod config;
pub mod decision;
pub mod deconv;
pub mod erm;
pub mod error;
pub mod field;
pub mod grid;
pub mod instance;
pub mod kernel;
pub mod lower_bound;
pub mod net;
pub mod noise;
pub mod quadrature;
pub mod rates;
pub mod report;

pub use error::{Error, Result};
