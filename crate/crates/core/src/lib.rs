//! Estimation of the linear discriminant direction of a two-group Gaussian
//! mixture, with and without labels.
//!
//! The crate covers the supervised LDA estimator, blind projection pursuit on
//! squared skewness, squared excess kurtosis and their convex combination,
//! PCA, the closed-form limiting covariances of all of them, and a seeded
//! Monte-Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod estimators;
pub mod indices;
pub mod linalg;
pub mod mixture;
pub mod moments;
pub mod sim;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
