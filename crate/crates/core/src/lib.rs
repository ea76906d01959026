//! Latent time-correlated exploration for overactuated control.

pub mod analysis;
pub mod config;
pub mod envs;
pub mod error;
pub mod exploration;
pub mod gauss;
pub mod policy;
pub mod run;
pub mod trainer;

pub use error::{Error, Result};
