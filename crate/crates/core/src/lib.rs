//! Membership-inference privacy audits for synthetic ICU time series.

pub mod attacks;
pub mod audit;
pub mod dataset;
pub mod density;
pub mod distance;
pub mod error;
pub mod metrics;
pub mod preprocess;
pub mod refgen;
pub mod seed;
pub mod util;

pub use error::{AuditError, Result};
