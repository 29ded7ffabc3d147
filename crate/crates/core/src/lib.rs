//! Maximum-likelihood direction-of-arrival estimation in K-distributed noise.

pub mod array_model;
pub mod cov_est;
pub mod error;
pub mod estimators;
pub mod extremes;
pub mod fim_crb;
pub mod harness;
pub mod sampling;
pub mod specfun;

pub use array_model::{ArrayGeometry, CMatrix, CVector, HermitianMatrix, Scenario};
pub use error::{Error, Result};
pub use estimators::{DoaEstimate, EstimatorKind, Objective, SearchOptions};
pub use harness::{CovMode, ExperimentConfig, SweepAxis};
pub use sampling::SnapshotSet;
