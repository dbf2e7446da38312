use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema, PatientRecord};
use crate::error::{AuditError, Result};

/// Replaces every value outside its feature bounds with `NaN`.
pub fn clamp_outliers(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for r in &mut out.records {
        for (f, spec) in ds.schema.features.iter().enumerate() {
            r.timeseries.row_mut(f).mapv_inplace(|v| if spec.contains(v) { v } else { f64::NAN });
        }
    }
    out
}

/// One raw measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub time_minutes: f64,
    pub feature: usize,
    pub value: f64,
}

/// Places irregular observations on the schema's grid.
///
/// Cell `k` covers `[k*step, (k+1)*step)` and takes the latest observation
/// made before the cell ends. Cells before a feature's first observation stay
/// `NaN`.
pub fn resample_forward_fill(
    raw: &[Observation],
    schema: &FeatureSchema,
    record_id: &str,
    patient_id: &str,
) -> Result<PatientRecord> {
    let step = schema.grid_step_minutes as f64;
    let window = step * schema.time_points as f64;
    let mut obs = raw.to_vec();
    for o in &obs {
        if !(o.time_minutes >= 0.0 && o.time_minutes < window) {
            return Err(AuditError::Range(format!(
                "observation at {} min lies outside [0, {window})",
                o.time_minutes
            )));
        }
        if o.feature >= schema.n_features() {
            return Err(AuditError::Range(format!("feature index {} out of range", o.feature)));
        }
    }
    obs.sort_by(|a, b| a.time_minutes.total_cmp(&b.time_minutes));

    let mut ts = Array2::from_elem((schema.n_features(), schema.time_points), f64::NAN);
    for f in 0..schema.n_features() {
        let mut it = obs.iter().filter(|o| o.feature == f).peekable();
        let mut current = f64::NAN;
        for k in 0..schema.time_points {
            let end = (k + 1) as f64 * step;
            while let Some(o) = it.next_if(|o| o.time_minutes < end) {
                current = o.value;
            }
            ts[[f, k]] = current;
        }
    }
    Ok(PatientRecord::new(record_id, patient_id, ts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationModel {
    pub per_feature_median: Vec<f64>,
    pub source: String,
}

/// Per-feature median over every present, in-bounds cell of `holdout`.
pub fn fit_imputer(holdout: &Dataset) -> Result<ImputationModel> {
    if holdout.is_empty() {
        return Err(AuditError::Fit("imputer needs a nonempty holdout set".into()));
    }
    let mut medians = Vec::with_capacity(holdout.schema.n_features());
    for (f, spec) in holdout.schema.features.iter().enumerate() {
        let cells: Vec<f64> = holdout
            .records
            .iter()
            .flat_map(|r| r.timeseries.row(f).to_vec())
            .filter(|v| spec.contains(*v))
            .collect();
        match crate::util::median(&cells) {
            Some(m) => medians.push(m),
            None => {
                return Err(AuditError::Fit(format!("feature {:?} has no observed cells", spec.name)));
            }
        }
    }
    Ok(ImputationModel {
        per_feature_median: medians,
        source: format!("{} split, {} records", holdout.split, holdout.len()),
    })
}

pub fn impute(r: &PatientRecord, m: &ImputationModel) -> PatientRecord {
    let mut out = r.clone();
    for (f, &med) in m.per_feature_median.iter().enumerate() {
        out.timeseries.row_mut(f).mapv_inplace(|v| if v.is_nan() { med } else { v });
    }
    out
}

pub fn impute_dataset(ds: &Dataset, m: &ImputationModel) -> Result<Dataset> {
    if m.per_feature_median.len() != ds.schema.n_features() {
        return Err(AuditError::Argument(format!(
            "imputer covers {} features, dataset has {}",
            m.per_feature_median.len(),
            ds.schema.n_features()
        )));
    }
    let mut out = ds.clone();
    out.records = ds.records.iter().map(|r| impute(r, m)).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSpec, Split};
    use ndarray::array;

    fn schema(t: usize) -> FeatureSchema {
        FeatureSchema::new(
            vec![
                FeatureSpec::new("heart_rate", "bpm", 1.0, 295.0),
                FeatureSpec::new("temperature", "C", 26.1, 42.3),
            ],
            t,
            10,
        )
        .unwrap()
    }

    fn obs(t: f64, f: usize, v: f64) -> Observation {
        Observation { time_minutes: t, feature: f, value: v }
    }

    #[test]
    fn clamp_marks_out_of_range_missing() {
        let ds = Dataset::new(
            schema(2),
            vec![PatientRecord::new("a", "a", array![[310.0, 80.0], [36.6, 20.0]])],
            Split::Train,
        )
        .unwrap();
        let out = clamp_outliers(&ds);
        let ts = &out.records[0].timeseries;
        assert!(ts[[0, 0]].is_nan());
        assert_eq!(ts[[0, 1]], 80.0);
        assert_eq!(ts[[1, 0]], 36.6);
        assert!(ts[[1, 1]].is_nan());
    }

    #[test]
    fn clamp_is_identity_when_in_range() {
        let ds = Dataset::new(
            schema(2),
            vec![PatientRecord::new("a", "a", array![[60.0, 80.0], [36.6, 37.0]])],
            Split::Train,
        )
        .unwrap();
        assert_eq!(clamp_outliers(&ds), ds);
    }

    #[test]
    fn forward_fill_from_zero() {
        let r = resample_forward_fill(&[obs(0.0, 0, 5.0)], &schema(3), "r", "p").unwrap();
        assert_eq!(r.timeseries.row(0).to_vec(), vec![5.0, 5.0, 5.0]);
        assert!(r.timeseries.row(1).iter().all(|v| v.is_nan()));
    }

    #[test]
    fn forward_fill_steps() {
        let r = resample_forward_fill(&[obs(10.0, 0, 2.0), obs(0.0, 0, 1.0)], &schema(3), "r", "p").unwrap();
        assert_eq!(r.timeseries.row(0).to_vec(), vec![1.0, 2.0, 2.0]);
    }

    #[test]
    fn leading_gap_stays_missing() {
        let r = resample_forward_fill(&[obs(10.0, 0, 4.0)], &schema(3), "r", "p").unwrap();
        let row = r.timeseries.row(0).to_vec();
        assert!(row[0].is_nan());
        assert_eq!(&row[1..], &[4.0, 4.0]);
    }

    #[test]
    fn latest_observation_within_cell_wins() {
        let r = resample_forward_fill(&[obs(1.0, 0, 1.0), obs(9.0, 0, 3.0)], &schema(2), "r", "p").unwrap();
        assert_eq!(r.timeseries.row(0).to_vec(), vec![3.0, 3.0]);
    }

    #[test]
    fn out_of_window_is_range_error() {
        assert!(matches!(
            resample_forward_fill(&[obs(-1.0, 0, 1.0)], &schema(3), "r", "p"),
            Err(AuditError::Range(_))
        ));
        assert!(matches!(
            resample_forward_fill(&[obs(30.0, 0, 1.0)], &schema(3), "r", "p"),
            Err(AuditError::Range(_))
        ));
    }

    fn one_feature(rows: Vec<Vec<f64>>) -> Dataset {
        let s = FeatureSchema::new(vec![FeatureSpec::new("x", "u", 0.0, 100.0)], rows[0].len(), 10).unwrap();
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| PatientRecord::new(format!("r{i}"), "p", Array2::from_shape_vec((1, r.len()), r).unwrap()))
            .collect();
        Dataset::new(s, records, Split::Holdout).unwrap()
    }

    #[test]
    fn median_odd_and_even() {
        let m = fit_imputer(&one_feature(vec![vec![1.0, 2.0, 3.0]])).unwrap();
        assert_eq!(m.per_feature_median, vec![2.0]);
        let m = fit_imputer(&one_feature(vec![vec![1.0, f64::NAN], vec![3.0, f64::NAN]])).unwrap();
        assert_eq!(m.per_feature_median, vec![2.0]);
    }

    #[test]
    fn fully_missing_feature_fails_naming_it() {
        let ds = Dataset::new(
            schema(2),
            vec![PatientRecord::new("a", "a", array![[60.0, 80.0], [f64::NAN, f64::NAN]])],
            Split::Holdout,
        )
        .unwrap();
        let err = fit_imputer(&ds).unwrap_err();
        assert!(err.to_string().contains("temperature"));
    }

    #[test]
    fn impute_fills_gaps_only() {
        let m = ImputationModel { per_feature_median: vec![2.0, 7.0], source: "t".into() };
        let r = PatientRecord::new("a", "a", array![[f64::NAN, 4.0, 4.0], [f64::NAN, f64::NAN, f64::NAN]]);
        let out = impute(&r, &m);
        assert_eq!(out.timeseries, array![[2.0, 4.0, 4.0], [7.0, 7.0, 7.0]]);
        let full = PatientRecord::new("b", "b", array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(impute(&full, &m), full);
    }

    #[test]
    fn pipeline_leaves_complete_in_bounds_data() {
        let s = schema(4);
        let records = vec![
            resample_forward_fill(&[obs(10.0, 0, 80.0), obs(0.0, 1, 36.0)], &s, "a", "a").unwrap(),
            resample_forward_fill(&[obs(0.0, 0, 400.0), obs(20.0, 1, 38.0)], &s, "b", "b").unwrap(),
            resample_forward_fill(&[obs(0.0, 0, 70.0), obs(0.0, 1, 37.0)], &s, "c", "c").unwrap(),
        ];
        let ds = clamp_outliers(&Dataset::new(s, records, Split::Train).unwrap());
        let m = fit_imputer(&ds).unwrap();
        let out = impute_dataset(&ds, &m).unwrap();
        assert!(!out.has_missing());
        out.ensure_complete().unwrap();
    }
}
