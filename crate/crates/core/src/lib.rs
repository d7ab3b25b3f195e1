//! Utility-indifference prices of European calls under proportional
//! transaction costs, computed with a Fourier pseudospectral method on the
//! log-transformed free-boundary problem.

pub mod error;
pub mod harness;
pub mod localization;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use localization::DomainSpec;
pub use model::{ModelParams, Scenario};
pub use solver::{solve, GridSpec, Solution, SolverOptions};
