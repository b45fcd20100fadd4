//! Rényi-DP accounting for subsampled mechanisms.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod amplification;
pub mod baselines;
pub mod error;
pub mod fmt;
pub mod mechanisms;
pub mod numerics;
pub mod parallel;
pub mod verifier;

pub use error::{Error, Result};
