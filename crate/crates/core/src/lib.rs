//! Group-Lasso regularized training, column pruning and fine-tuning for
//! overparameterized low-rank matrix sensing.
//!
//! The model is a factor `U ∈ ℝ^{d×k}` fit so that `UUᵀ` matches a rank-`r`
//! target `U⋆U⋆ᵀ`, with `k ≥ r`. Training adds a smoothed per-column ℓ2
//! penalty that drives redundant columns toward zero; columns at or below
//! `2√β` are then removed and the rest fine-tuned without the penalty.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod objectives;
pub mod pipeline;
pub mod rng;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use linalg::{column_cosines, column_norms, gram_error, op_norm, FactorMatrix, GroundTruth};
pub use objectives::{Objective, ObjectiveKind, RegParams};
pub use rng::SeededRng;
pub use sensing::{SensingKind, SensingSet};
