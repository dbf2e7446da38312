use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::LogDensity;
use crate::error::{AuditError, Result};

/// Gaussian product-kernel KDE with per-dimension Scott bandwidths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub points: Array2<f64>,
    pub bandwidth: Vec<f64>,
    /// `-ln n - sum_j ln(h_j sqrt(2 pi))`
    pub log_norm_const: f64,
}

/// `h_j = sigma_j * n^(-1/(d+4))` with the unbiased standard deviation, floored
/// at `1e-6 * (range_j + 1e-12)`.
pub fn fit_kde(x: ArrayView2<'_, f64>) -> Result<KdeModel> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(AuditError::Fit(format!("KDE needs at least 2 points, got {n}")));
    }
    if d == 0 {
        return Err(AuditError::Fit("KDE needs at least one dimension".into()));
    }
    let factor = (n as f64).powf(-1.0 / (d as f64 + 4.0));
    let bandwidth: Vec<f64> = x
        .columns()
        .into_iter()
        .map(|col| {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let floor = 1e-6 * ((hi - lo) + 1e-12);
            var.sqrt().max(floor) * factor
        })
        .collect();
    let log_norm_const = -(n as f64).ln()
        - bandwidth
            .iter()
            .map(|h| (h * (2.0 * std::f64::consts::PI).sqrt()).ln())
            .sum::<f64>();
    Ok(KdeModel {
        points: x.to_owned(),
        bandwidth,
        log_norm_const,
    })
}

impl KdeModel {
    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }
}

impl LogDensity for KdeModel {
    fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Log-sum-exp over kernels.
    fn log_density(&self, q: &[f64]) -> f64 {
        let inv: Vec<f64> = self.bandwidth.iter().map(|h| 1.0 / h).collect();
        let mut exps = Vec::with_capacity(self.n_points());
        let mut max = f64::NEG_INFINITY;
        for row in self.points.outer_iter() {
            let mut s = 0.0;
            for ((x, qv), ih) in row.iter().zip(q).zip(&inv) {
                let z = (qv - x) * ih;
                s += z * z;
            }
            let e = -0.5 * s;
            max = max.max(e);
            exps.push(e);
        }
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = exps.iter().map(|e| (e - max).exp()).sum();
        self.log_norm_const + max + sum.ln()
    }
}

pub fn kde_log_density(m: &KdeModel, q: &[f64]) -> Result<f64> {
    if q.len() != m.dim() {
        return Err(AuditError::Argument(format!(
            "query has dimension {}, KDE has {}",
            q.len(),
            m.dim()
        )));
    }
    Ok(m.log_density(q))
}
