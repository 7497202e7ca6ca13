//! Bayesian mixture autoregressive models with standardized Student-t
//! innovations: simulation, Gibbs/Metropolis posterior sampling,
//! reversible-jump order selection and marginal-likelihood comparison.

pub mod commands;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod evidence;
pub mod model;
pub mod order;
pub mod output;
pub mod prior;
pub mod sampler;

pub use error::{Error, Result};
