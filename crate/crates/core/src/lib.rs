//! Bayesian optimization with a learned acquisition-function selector.
//!
//! A proximal-policy actor-critic learns which UCB weight to use at each step
//! of a GP-based optimization run. See the README for the command-line tool.

pub mod acquisition;
pub mod benchmarks;
pub mod env;
pub mod error;
pub mod gp;
mod linalg;
pub mod neural;
pub mod parallel;
pub mod ppo;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
