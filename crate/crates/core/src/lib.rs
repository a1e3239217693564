//! Regularized randomized progressive iterative approximation for fitting
//! noisy data with cubic B-spline curves and tensor-product surfaces.

pub mod assembly;
pub mod basis;
pub mod config;
pub mod curve;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod regparam;
pub mod report;
pub mod rng;
pub mod surface;

pub use error::{FitError, Result};
pub use config::ExperimentConfig;
pub use exec::Execution;
pub use experiment::{run_experiment, FitReport};
pub use grid::PointGrid;
