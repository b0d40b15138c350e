//! Independent checks: classical estimators for every planted phenomenon
//! and the metrics used to score answers.

mod closure;
mod estimators;
mod metrics;

pub use closure::*;
pub use estimators::*;
pub use metrics::*;
