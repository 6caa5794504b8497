//! Partially linear additive models `Y = m0 + X'beta + sum_j m_j(Z_j) + eps`
//! fitted by smooth backfitting.
//!
//! The crate provides the Gaussian profile estimator ([`plam::sam_fit`]), a
//! full-dimensional partially linear comparator ([`plam::pl_fit`]), the
//! adaptive one-step efficient estimator ([`adapt::asam_fit`]), and a Monte
//! Carlo lab for the efficiency comparisons ([`simlab`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod bandwidth;
pub mod boston;
pub mod data;
pub mod error;
pub mod ingest;
pub mod kernel;
pub mod linalg;
pub mod plam;
pub mod report;
pub mod sbf;
pub mod simlab;
pub mod stats;
pub mod study;

pub use error::{Error, Result};
