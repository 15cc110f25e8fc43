//! Switch-type policy networks for queueing-network control.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! discrete-time single-hop and multi-path simulators, non-learning
//! baselines, a small reverse-mode differentiable network toolkit, the
//! monotone switch-type policy and MLP baselines, a PPO trainer, and an exact
//! policy-iteration oracle for small truncated MDPs.
//!
//! File formats, the command-line harness and parallel orchestration live in
//! the `switchnet` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod dp;
pub mod env;
mod error;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
