//! Dense linear algebra used throughout the crate.

mod matrix;
mod rng;
mod svd;

pub use matrix::{relative_frobenius_error, Matrix};
pub use rng::{gaussian, Rng};
pub use svd::{truncated_svd, SvdResult};
