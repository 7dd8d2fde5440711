//! Low-rank gradient approximation for memory-reduced training.
//!
//! Instead of handing the full gradient `G` of a weight matrix `W` to an
//! optimizer, the update is routed through two thin factors `U` (M×R) and
//! `V` (N×R) that are redrawn every step. The optimizer keeps its state on
//! the factors, so momentum and Adam need `R·(M+N)` accumulators per matrix
//! instead of `M·N`.
//!
//! Modules:
//! - [`linalg`]: dense matrices, the seeded generator and truncated SVD
//! - [`optim`]: gradient descent, momentum and Adam update rules
//! - [`lowrank`]: factor sampling, factor gradients and the low-rank step
//! - [`toy`]: the exp-matching benchmark objective
//! - [`memory`]: slot accounting and crossover ranks
//! - [`harness`]: seeded training runs, the optimizer × projection grid, CSV
//! - [`selfcheck`]: invariant suites behind `lowrank selfcheck`

pub mod cli;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lowrank;
pub mod memory;
pub mod optim;
pub mod selfcheck;
pub mod toy;

pub use error::{Error, Result};
pub use linalg::{Matrix, Rng};
pub use lowrank::{FactorPair, LowRankOptimizer, ProjectionMethod};
pub use optim::{AdamBiasMode, OptimizerKind, OptimizerSpec, OptimizerState};
