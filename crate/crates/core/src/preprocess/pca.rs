//! Principal component analysis by eigendecomposition of the sample covariance.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{AuditError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Row-major `n_components x dim`; rows are orthonormal.
    pub components: Vec<f64>,
    pub dim: usize,
    pub n_components: usize,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    /// Fits on the rows of `x`. Components are sorted by decreasing variance and
    /// each is signed so that its largest-magnitude entry is positive.
    pub fn fit(x: ArrayView2<'_, f64>, n_components: usize) -> Result<Self> {
        let (n, dim) = x.dim();
        if n < 2 {
            return Err(AuditError::Argument(format!("PCA needs at least 2 rows, got {n}")));
        }
        if n_components == 0 || n_components > n.min(dim) {
            return Err(AuditError::Argument(format!(
                "n_components = {n_components} must lie in [1, min(n = {n}, dim = {dim})]"
            )));
        }
        let mean: Array1<f64> = x.mean_axis(Axis(0)).expect("n >= 2");
        let centered = &x - &mean;
        let cov = centered.t().dot(&centered) / (n - 1) as f64;
        let cov = DMatrix::from_fn(dim, dim, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
        let total: f64 = cov.trace();

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components = Vec::with_capacity(n_components * dim);
        let mut variance = Vec::with_capacity(n_components);
        for &k in order.iter().take(n_components) {
            let col = eig.eigenvectors.column(k);
            let pivot = col
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, *v) } else { best })
                .0;
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            components.extend(col.iter().map(|v| sign * v));
            variance.push(eig.eigenvalues[k].max(0.0));
        }
        let ratio = variance
            .iter()
            .map(|v| if total > 0.0 { (v / total).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            components,
            dim,
            n_components,
            explained_variance: variance,
            explained_variance_ratio: ratio,
        })
    }

    pub fn components_view(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_components, self.dim), &self.components).expect("consistent shape")
    }

    /// `(x - mean) . components^T`
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(AuditError::Argument(format!(
                "input has {} columns, PCA model expects {}",
                x.ncols(),
                self.dim
            )));
        }
        let mean = ndarray::ArrayView1::from(&self.mean[..]);
        let centered = &x - &mean;
        Ok(centered.dot(&self.components_view().t()))
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mean = ndarray::ArrayView1::from(&self.mean[..]);
        z.dot(&self.components_view()) + &mean
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::util::write_atomic(path.as_ref(), serde_json::to_string(self)?.as_bytes())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// PCA over flattened records.
pub fn fit_pca(ds: &Dataset, n_components: usize) -> Result<PcaModel> {
    PcaModel::fit(ds.flat_matrix().view(), n_components)
}

pub fn apply_pca(m: &PcaModel, ds: &Dataset) -> Result<Array2<f64>> {
    m.transform(ds.flat_matrix().view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSchema, FeatureSpec, PatientRecord, Split};
    use ndarray::array;
    use rand::Rng;

    fn points_dataset(points: &[[f64; 2]]) -> Dataset {
        let schema = FeatureSchema::new(vec![FeatureSpec::new("x", "u", -1e6, 1e6)], 2, 1).unwrap();
        let records = points
            .iter()
            .enumerate()
            .map(|(i, p)| PatientRecord::new(format!("r{i}"), "p", array![[p[0], p[1]]]))
            .collect();
        Dataset::new(schema, records, Split::Synthetic).unwrap()
    }

    #[test]
    fn collinear_points() {
        let ds = points_dataset(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        let m = fit_pca(&ds, 1).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.components[0] - h).abs() < 1e-12 && (m.components[1] - h).abs() < 1e-12);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);

        let z = apply_pca(&m, &ds).unwrap();
        // (2,2) centred at (1,1), projected on (1,1)/sqrt2.
        assert!((z[[2, 0]] - 2.0f64.sqrt()).abs() < 1e-12);
        assert!(z[[1, 0]].abs() < 1e-12);
    }

    #[test]
    fn rejects_infeasible_component_counts() {
        let ds = points_dataset(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert!(matches!(fit_pca(&ds, 3), Err(AuditError::Argument(_))));
        assert!(matches!(fit_pca(&ds, 0), Err(AuditError::Argument(_))));
        let one = points_dataset(&[[0.0, 0.0]]);
        assert!(matches!(fit_pca(&one, 1), Err(AuditError::Argument(_))));
    }

    fn random_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::seed::rng_from(seed);
        // Anisotropic columns so the spectrum is well separated.
        Array2::from_shape_fn((n, d), |(_, j)| rng.random_range(-1.0..1.0) * (1.0 + j as f64))
    }

    #[test]
    fn full_rank_round_trip() {
        let x = random_matrix(30, 8, 3);
        let m = PcaModel::fit(x.view(), 8).unwrap();
        let back = m.inverse_transform(m.transform(x.view()).unwrap().view());
        let err = (&back - &x).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(err < 1e-8, "max reconstruction error {err}");
    }

    #[test]
    fn invariants_on_random_data() {
        let x = random_matrix(50, 10, 9);
        let m = PcaModel::fit(x.view(), 10).unwrap();
        let c = m.components_view();
        let gram = c.dot(&c.t());
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-8);
            }
        }
        let r = &m.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.iter().sum::<f64>() <= 1.0 + 1e-9);
        for row in c.outer_iter() {
            let big = row.iter().fold(0.0f64, |a, v| if v.abs() > a.abs() { *v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn projected_columns_are_uncorrelated() {
        let x = random_matrix(60, 6, 5);
        let m = PcaModel::fit(x.view(), 6).unwrap();
        let z = m.transform(x.view()).unwrap();
        let cov = z.t().dot(&z) / 59.0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert!(cov[[i, j]].abs() < 1e-8 * cov[[0, 0]]);
                }
            }
            assert!((cov[[i, i]] - m.explained_variance[i]).abs() < 1e-8 * cov[[0, 0]]);
        }
    }

    #[test]
    fn reconstruction_error_shrinks_with_components() {
        let x = random_matrix(40, 7, 21);
        let mut last = f64::INFINITY;
        for k in 1..=7 {
            let m = PcaModel::fit(x.view(), k).unwrap();
            let back = m.inverse_transform(m.transform(x.view()).unwrap().view());
            let err: f64 = (&back - &x).iter().map(|v| v * v).sum();
            assert!(err <= last + 1e-9);
            last = err;
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = PcaModel::fit(random_matrix(10, 4, 1).view(), 2).unwrap();
        assert!(m.transform(random_matrix(3, 5, 2).view()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = PcaModel::fit(random_matrix(10, 4, 1).view(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pca.json");
        m.save_json(&p).unwrap();
        assert_eq!(PcaModel::load_json(&p).unwrap(), m);
    }
}
