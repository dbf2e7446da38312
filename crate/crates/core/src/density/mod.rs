//! Density estimators behind the DOMIAS attacks, and the Monte-Carlo
//! neighbourhood radius.

mod flow;
mod kde;

use serde::{Deserialize, Serialize};

use crate::distance::PointSet;
use crate::error::{AuditError, Result};

pub use flow::{fit_flow, fit_flow_with, flow_log_density, FlowConfig, FlowModel};
pub use kde::{fit_kde, kde_log_density, KdeModel};

/// Anything that evaluates a log-density at a point.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

/// A fitted density of either backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Density {
    Kde(KdeModel),
    Flow(FlowModel),
}

impl LogDensity for Density {
    fn dim(&self) -> usize {
        match self {
            Density::Kde(m) => m.dim(),
            Density::Flow(m) => m.dim(),
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Density::Kde(m) => m.log_density(x),
            Density::Flow(m) => m.log_density(x),
        }
    }
}

/// Median over candidates of each candidate's minimum distance to `synthetic`.
pub fn mc_threshold(candidates: &PointSet, synthetic: &PointSet) -> Result<f64> {
    if candidates.is_empty() || synthetic.is_empty() {
        return Err(AuditError::Argument("mc_threshold needs nonempty inputs".into()));
    }
    if candidates.kind() != synthetic.kind() {
        return Err(AuditError::Argument("candidates and synthetic use different distances".into()));
    }
    let minima = synthetic.nearest_batch(candidates)?;
    Ok(crate::util::median(&minima).expect("nonempty"))
}
