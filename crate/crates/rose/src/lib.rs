//! Design engine for two-arm randomized dose-optimization trials.
//!
//! Computes minimum per-arm sample sizes and decision boundaries for selecting
//! between a low and a high dose, evaluates operating characteristics exactly
//! and by simulation, and applies the resulting rules to accumulating data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod api;
pub mod conduct;
pub mod design;
pub mod error;
pub mod fixtures;
pub mod oc_sim;
pub mod rose_exact;
pub mod rose_normal;
pub mod service;
pub mod statfn;

pub use design::{Design, DesignGoal, Method, OneStageDesign, TwoStageDesign};
pub use error::{Result, RoseError};
