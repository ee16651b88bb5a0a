//! q-calculus kernel estimation.
//!
//! Jackson integration and q-derivatives, the q-Gaussian and polynomial
//! q-kernel families, the q-kernel density and Nadaraya–Watson regression
//! estimators, closed-form asymptotic predictions for those estimators, and a
//! Monte Carlo harness that checks the predictions.

pub mod cli;
pub mod error;
pub mod qcalc;
pub mod qcore;
pub mod qestim;
pub mod qkernels;
pub mod qsim;
pub mod qtheory;

pub use error::{QError, Result};
