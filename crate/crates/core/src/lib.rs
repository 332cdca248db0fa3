//! Space-filling input design for nonlinear discrete-time state-space
//! systems.
//!
//! An excitation signal is parametrized (multisine phases, or raw samples),
//! pushed through a known state-space model to its periodic steady state,
//! and scored by how evenly the joint input-state samples cover a gridded
//! region of interest. The score is minimized with a projected quasi-Newton
//! method using exact chain-rule gradients.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod input;
pub mod optimizer;

pub use error::{Error, Result};
