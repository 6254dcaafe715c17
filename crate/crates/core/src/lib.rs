//! Simulation of epoch-level proposer manipulation against a liquid staking
//! pool, plus the economics of shorting its token.

pub mod beacon;
pub mod calibrate;
pub mod cli;
pub mod env;
pub mod monetize;
pub mod error;
pub mod oracle;
pub mod reward;
pub mod strategy;

pub use error::{Error, Result};
