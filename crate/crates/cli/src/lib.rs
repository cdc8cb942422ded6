//! Experiment runner for `lassoprune`: config handling, artifact output,
//! SVG plots and the diagnostic experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod stats;

pub use config::{Common, Overrides};
pub use output::{Manifest, OutputDir};
