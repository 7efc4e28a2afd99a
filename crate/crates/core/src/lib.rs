//! Privacy-aware MMSE estimation on finite and Gaussian models.
//!
//! The crate computes maximal correlation and correlation ratios of joint
//! distributions, searches for privacy filters `P_{Z|Y}` that minimize the
//! estimation noise-to-signal ratio `mmse(Y|Z)/var(Y)` subject to a leakage
//! budget on a private `X`, and evaluates the closed forms available for
//! binary-input symmetric-output sources and additive Gaussian filters.

pub mod biso;
pub mod dependence;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod iid;
pub mod linalg;
pub mod prob;
pub mod random;

pub use error::{Error, Result};
pub use prob::{Alphabet, Channel, JointDistribution};
