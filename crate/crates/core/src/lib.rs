//! Multi-objective policy gradient: vector-reward environments, softmax
//! policies, importance-weighted estimators, the MO-PG and MO-TSIVR-PG
//! training loops, an exact oracle for small tabular MDPs and an experiment
//! harness.

pub mod algorithms;
pub mod env;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod scalarization;
pub mod verify;

pub use error::{MorlError, Result};
