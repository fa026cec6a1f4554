//! Smoothness analysis and control for graph convolutional features.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod autodiff;
pub mod control;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod graph;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod properties;
pub mod rng;
pub mod smoothness;
pub mod train;

pub use error::{Error, Result};
