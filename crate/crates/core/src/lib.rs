//! Atomic-unit (AU) activation steering for a minimal decoder-only transformer.
//!
//! A linear projection `y = W x` can be read column-wise: `y = sum_i x_i * W[:,i]`.
//! Each column `W[:,i]` is an atomic unit and the scalar `x_i` is its coefficient.
//! This crate decomposes block activations into those per-dimension coefficients,
//! localizes discriminative AUs by counting activation-momentum signs over
//! contrastive pairs, and applies per-AU multiplicative or additive steering
//! inside forward passes.
//!
//! The crate is `no_std` + `alloc`: all computation is pure and deterministic.
//! File formats, the CLI, and everything that touches the filesystem live in
//! the companion `austeer-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod audecomp;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod momentum;
pub mod numerics;
pub mod steering;

pub use audecomp::AUId;
pub use error::Error;
pub use model::{HookSite, Model, ModelConfig, SiteKind};
pub use numerics::{Matrix, ProbDist, Vector};
pub use steering::SteeringPlan;
