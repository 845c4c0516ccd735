//! Root finding for square estimating-equation systems and M-estimation
//! variance.

mod bootstrap;
mod logistic;
mod newton;
mod sandwich;

pub use bootstrap::{bootstrap_covariance, BootstrapResult, BOOTSTRAP_RESAMPLES};
pub use logistic::logistic_regression;
pub use newton::{numeric_jacobian, solve, solve_fn, SolveOptions, SolveResult};
pub use sandwich::{confidence_interval, confidence_intervals, sandwich_covariance, standard_errors};
