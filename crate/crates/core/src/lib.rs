//! Monotone lower-triangular transport maps between a standard Gaussian
//! reference and arbitrary targets.

pub mod basis;
pub mod bod;
pub mod conditioning;
pub mod diagnostics;
pub mod direct;
pub mod error;
pub mod inverse;
pub mod io;
pub mod map;
pub mod mcmc;
pub mod optim;
mod parallel;
pub mod quadrature;
pub mod report;
pub mod solver;
pub mod stats;
pub mod target;

pub use error::{Result, TrimapError};
