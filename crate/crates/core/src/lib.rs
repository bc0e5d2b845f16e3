//! Degradation performance modeling with mixed scalar and functional
//! covariates and unit-level latent heterogeneity.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod datamodel;
pub mod descriptors;
pub mod design;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod fpca;
pub mod linalg;
pub mod simulate;

pub use error::{Error, Result};
