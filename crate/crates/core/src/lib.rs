//! Behaviour cloning with observation-to-action diffusion policies.
//!
//! The crate trains small MLP noise-prediction networks from scratch, samples
//! actions with plain, extra-step and KDE-selected reverse chains, trains four
//! classical baseline policies, and scores everything on two synthetic
//! environments with exact optimal-transport and k-NN metrics.

pub mod baselines;
pub mod checkpoint;
pub mod cli;
pub mod diffusion;
pub mod envs;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nnet;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
