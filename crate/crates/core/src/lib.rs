//! Exact calculus for univariate ReLU networks against piecewise-polynomial
//! data, constructive representability, structure-preserving approximation,
//! and gradient-flow / gradient-descent training dynamics.

pub mod approx;
pub mod deep;
pub mod dynamics;
pub mod error;
pub mod par;
pub mod poly;
pub mod pwfun;
pub mod quad;
pub mod repr;
pub mod rng;
pub mod scalar;
pub mod shallow;

pub use error::{Error, Result};
