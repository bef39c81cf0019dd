//! Multi-run experiments, aggregation across runs and the log-log fit of
//! optimality gaps used to estimate sample-complexity exponents.

mod harness;
mod stats;

pub use harness::*;
pub use stats::*;
