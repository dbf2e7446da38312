//! Numeric representations the attacks operate on.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, MaritalStatus, Sex, StaticAttributes};
use crate::distance::{PointSet, Series, SeriesSet};
use crate::error::{AuditError, Result};
use crate::preprocess::PcaModel;

/// Which part of each record an audit looks at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    #[default]
    TimeSeries,
    Attributes,
}

const SEXES: [Sex; 3] = [Sex::F, Sex::M, Sex::Missing];
const MARITAL: [MaritalStatus; 5] = [
    MaritalStatus::Single,
    MaritalStatus::Married,
    MaritalStatus::Divorced,
    MaritalStatus::Widowed,
    MaritalStatus::Missing,
];

fn moments(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let m = crate::util::mean(&v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let sd = var.sqrt();
    (m, if sd > 1e-12 { sd } else { 1.0 })
}

/// Standardisation fitted on the synthetic data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Encoder {
    /// Per-feature z-score pooled over time, then `F x T` flattened feature-major.
    TimeSeries {
        n_features: usize,
        time_points: usize,
        mean: Vec<f64>,
        scale: Vec<f64>,
    },
    /// One-hot categoricals with a trailing catch-all race slot, z-scored age and stay length.
    Attributes {
        races: Vec<String>,
        age: (f64, f64),
        length_of_stay: (f64, f64),
    },
}

impl Encoder {
    pub fn fit(synth: &Dataset, mode: DataMode) -> Result<Self> {
        if synth.is_empty() {
            return Err(AuditError::Fit("cannot fit an encoder on an empty dataset".into()));
        }
        match mode {
            DataMode::TimeSeries => {
                synth.ensure_complete()?;
                let f = synth.schema.n_features();
                let (mean, scale) = (0..f)
                    .map(|k| moments(synth.records.iter().flat_map(|r| r.timeseries.row(k).to_vec())))
                    .unzip();
                Ok(Encoder::TimeSeries {
                    n_features: f,
                    time_points: synth.schema.time_points,
                    mean,
                    scale,
                })
            }
            DataMode::Attributes => {
                let attrs = attributes_of(synth)?;
                let mut races: Vec<String> = attrs.iter().filter_map(|a| a.race.clone()).collect();
                races.sort();
                races.dedup();
                Ok(Encoder::Attributes {
                    races,
                    age: moments(attrs.iter().filter_map(|a| a.age.map(f64::from))),
                    length_of_stay: moments(attrs.iter().filter_map(|a| a.length_of_stay)),
                })
            }
        }
    }

    pub fn mode(&self) -> DataMode {
        match self {
            Encoder::TimeSeries { .. } => DataMode::TimeSeries,
            Encoder::Attributes { .. } => DataMode::Attributes,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::TimeSeries {
                n_features,
                time_points,
                ..
            } => n_features * time_points,
            Encoder::Attributes { races, .. } => SEXES.len() + MARITAL.len() + races.len() + 1 + 2,
        }
    }

    fn check_schema(&self, ds: &Dataset) -> Result<()> {
        if let Encoder::TimeSeries {
            n_features,
            time_points,
            ..
        } = self
        {
            if ds.schema.n_features() != *n_features || ds.schema.time_points != *time_points {
                return Err(AuditError::Schema(format!(
                    "dataset is {}x{}, encoder expects {}x{}",
                    ds.schema.n_features(),
                    ds.schema.time_points,
                    n_features,
                    time_points
                )));
            }
            ds.ensure_complete()?;
        }
        Ok(())
    }

    /// One row per record.
    pub fn encode(&self, ds: &Dataset) -> Result<Array2<f64>> {
        self.check_schema(ds)?;
        let d = self.dim();
        let mut out = Array2::zeros((ds.len(), d));
        match self {
            Encoder::TimeSeries { mean, scale, .. } => {
                for (mut row, rec) in out.rows_mut().into_iter().zip(&ds.records) {
                    let t = rec.timeseries.ncols();
                    for ((fi, ti), v) in rec.timeseries.indexed_iter() {
                        row[fi * t + ti] = (v - mean[fi]) / scale[fi];
                    }
                }
            }
            Encoder::Attributes {
                races,
                age,
                length_of_stay,
            } => {
                let attrs = attributes_of(ds)?;
                for (mut row, a) in out.rows_mut().into_iter().zip(attrs) {
                    let mut col = 0;
                    row[col + SEXES.iter().position(|s| *s == a.sex).expect("closed set")] = 1.0;
                    col += SEXES.len();
                    row[col + MARITAL.iter().position(|m| *m == a.marital_status).expect("closed set")] = 1.0;
                    col += MARITAL.len();
                    let race = a.race.as_ref().and_then(|r| races.iter().position(|x| x == r)).unwrap_or(races.len());
                    row[col + race] = 1.0;
                    col += races.len() + 1;
                    row[col] = a.age.map_or(0.0, |v| (f64::from(v) - age.0) / age.1);
                    row[col + 1] = a.length_of_stay.map_or(0.0, |v| (v - length_of_stay.0) / length_of_stay.1);
                }
            }
        }
        Ok(out)
    }

    /// Standardised `F x T` series, for DTW.
    pub fn encode_series(&self, ds: &Dataset) -> Result<Vec<Series>> {
        match self {
            Encoder::TimeSeries {
                n_features,
                time_points,
                ..
            } => {
                let m = self.encode(ds)?;
                m.outer_iter()
                    .map(|row| Series::new(*n_features, *time_points, row.to_vec()))
                    .collect()
            }
            Encoder::Attributes { .. } => Err(AuditError::Config("DTW is not available for attribute data".into())),
        }
    }
}

fn attributes_of(ds: &Dataset) -> Result<Vec<&StaticAttributes>> {
    ds.records
        .iter()
        .map(|r| {
            r.attributes
                .as_ref()
                .ok_or_else(|| AuditError::Schema(format!("record {} has no static attributes", r.record_id)))
        })
        .collect()
}

/// Encoder plus optional PCA projection fitted on the encoded synthetic rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub encoder: Encoder,
    pub pca: Option<PcaModel>,
}

impl Representation {
    pub fn vectors(&self, ds: &Dataset) -> Result<Array2<f64>> {
        let x = self.encoder.encode(ds)?;
        match &self.pca {
            Some(p) => p.transform(x.view()),
            None => Ok(x),
        }
    }

    pub fn point_set(&self, ds: &Dataset, dtw: bool, band: Option<usize>) -> Result<PointSet> {
        if dtw {
            if self.pca.is_some() {
                return Err(AuditError::Config("DTW operates on series and cannot follow PCA".into()));
            }
            Ok(PointSet::Series(SeriesSet::new(self.encoder.encode_series(ds)?, band)?))
        } else {
            Ok(PointSet::Vectors(self.vectors(ds)?))
        }
    }
}

/// PCA for attacks, fitted on the encoded synthetic data. The component count
/// is reduced to what the data supports, with a warning.
pub fn fit_attack_pca(synth: &Dataset, mode: DataMode, n_components: usize) -> Result<PcaModel> {
    let enc = Encoder::fit(synth, mode)?;
    let x = enc.encode(synth)?;
    let k = n_components.min(x.nrows()).min(x.ncols());
    if k < n_components {
        log::warn!("PCA reduced from {n_components} to {k} components for {} records", x.nrows());
    }
    if k == 0 {
        return Err(AuditError::Fit("PCA needs at least one record and one column".into()));
    }
    PcaModel::fit(x.view(), k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refgen::{sample_process_named, ProcessSpec};
    use crate::dataset::Split;

    #[test]
    fn time_series_encoding_is_standardised() {
        let ds = sample_process_named(&ProcessSpec::icu(6, 60, 1), 30, "a", Split::Synthetic).unwrap();
        let enc = Encoder::fit(&ds, DataMode::TimeSeries).unwrap();
        let x = enc.encode(&ds).unwrap();
        assert_eq!(x.dim(), (30, 54));
        for f in 0..9 {
            let vals: Vec<f64> = x.outer_iter().flat_map(|r| r.slice(ndarray::s![f * 6..(f + 1) * 6]).to_vec()).collect();
            let (m, sd) = moments(vals.into_iter());
            assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
        let series = enc.encode_series(&ds).unwrap();
        assert_eq!(series[3].len(), 6);
    }

    #[test]
    fn attribute_encoding_is_one_hot() {
        let mut spec = ProcessSpec::icu(4, 60, 2);
        spec.attributes = true;
        let ds = sample_process_named(&spec, 40, "a", Split::Synthetic).unwrap();
        let enc = Encoder::fit(&ds, DataMode::Attributes).unwrap();
        let x = enc.encode(&ds).unwrap();
        assert_eq!(x.ncols(), enc.dim());
        let cats = 3 + 5 + enc.dim() - 10;
        for row in x.outer_iter() {
            assert_eq!(row.iter().take(cats).sum::<f64>(), 3.0);
        }
        assert!(enc.encode_series(&ds).is_err());
        let plain = sample_process_named(&ProcessSpec::icu(4, 60, 2), 5, "b", Split::Synthetic).unwrap();
        assert!(matches!(enc.encode(&plain), Err(AuditError::Schema(_))));
    }

    #[test]
    fn pca_components_capped_by_records() {
        let ds = sample_process_named(&ProcessSpec::icu(6, 60, 1), 12, "a", Split::Synthetic).unwrap();
        let p = fit_attack_pca(&ds, DataMode::TimeSeries, 40).unwrap();
        assert_eq!(p.n_components, 12);
    }
}
