//! Bayesian safety validation for black-box systems.

pub mod acquisition;
pub mod baselines;
pub mod bsv;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod field;
pub mod gp;
pub mod grid;
pub mod metrics;
pub mod operational;
pub mod sobol;
pub mod space;
pub mod systems;

pub use error::{BsvError, Result};
