//! Record and dataset model shared by every other module.
//!
//! A [`PatientRecord`] holds one ICU stay as an `F x T` matrix (features by
//! time points) plus optional static attributes. Missing cells are `NaN`; the
//! preprocessing pipeline removes them before any attack runs.

mod io;
mod split;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

pub use io::{load_dataset, save_dataset};
pub use split::split_disjoint;

/// One time-series variable with its physiological limits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub unit: String,
    pub min_bound: f64,
    pub max_bound: f64,
}

impl FeatureSpec {
    pub fn new(name: &str, unit: &str, min_bound: f64, max_bound: f64) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            min_bound,
            max_bound,
        }
    }

    pub fn range(&self) -> f64 {
        self.max_bound - self.min_bound
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min_bound && v <= self.max_bound
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
    pub time_points: usize,
    pub grid_step_minutes: u32,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>, time_points: usize, grid_step_minutes: u32) -> Result<Self> {
        let schema = Self {
            features,
            time_points,
            grid_step_minutes,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// The nine ICU variables with the MIMIC-IV limits applied during outlier removal.
    pub fn icu(time_points: usize, grid_step_minutes: u32) -> Self {
        let features = vec![
            FeatureSpec::new("diastolic_bp", "mmHg", 1.0, 293.0),
            FeatureSpec::new("systolic_bp", "mmHg", 0.202, 365.0),
            FeatureSpec::new("respiratory_rate", "bpm", 1.0, 69.0),
            FeatureSpec::new("heart_rate", "bpm", 1.0, 295.0),
            FeatureSpec::new("spo2", "%", 0.3, 100.0),
            FeatureSpec::new("sofa", "point", 0.0, 23.0),
            FeatureSpec::new("glucose", "mg/dL", 33.0, 1894.0),
            FeatureSpec::new("sodium", "mmol/L", 77.0, 186.0),
            FeatureSpec::new("temperature", "degC", 26.1, 42.3),
        ];
        Self {
            features,
            time_points,
            grid_step_minutes,
        }
    }

    /// 48 hours on a 10-minute grid.
    pub fn icu_full() -> Self {
        Self::icu(288, 10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(AuditError::Schema("schema has no features".into()));
        }
        if self.time_points == 0 {
            return Err(AuditError::Schema("time_points must be at least 1".into()));
        }
        if self.grid_step_minutes == 0 {
            return Err(AuditError::Schema("grid_step_minutes must be positive".into()));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(AuditError::Schema(format!("duplicate feature name {:?}", f.name)));
            }
            if !(f.min_bound < f.max_bound) {
                return Err(AuditError::Schema(format!(
                    "feature {:?} needs min_bound < max_bound",
                    f.name
                )));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Flattened dimensionality `F * T`.
    pub fn dim(&self) -> usize {
        self.features.len() * self.time_points
    }

    pub fn column_name(&self, feature: usize, t: usize) -> String {
        format!("{}__t{}", self.features[feature].name, t)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        let schema: Self = serde_json::from_str(&text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::util::write_atomic(path.as_ref(), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    F,
    M,
    Missing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaritalStatus {
    Single,
    Married,
    Divorced,
    Widowed,
    Missing,
}

impl MaritalStatus {
    pub const ALL: [MaritalStatus; 5] = [
        MaritalStatus::Single,
        MaritalStatus::Married,
        MaritalStatus::Divorced,
        MaritalStatus::Widowed,
        MaritalStatus::Missing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MaritalStatus::Single => "single",
            MaritalStatus::Married => "married",
            MaritalStatus::Divorced => "divorced",
            MaritalStatus::Widowed => "widowed",
            MaritalStatus::Missing => "",
        }
    }

    /// Unknown and empty text both map to `Missing`.
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "single" => MaritalStatus::Single,
            "married" => MaritalStatus::Married,
            "divorced" => MaritalStatus::Divorced,
            "widowed" => MaritalStatus::Widowed,
            _ => MaritalStatus::Missing,
        }
    }
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::F => "F",
            Sex::M => "M",
            Sex::Missing => "",
        }
    }

    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "F" | "f" => Sex::F,
            "M" | "m" => Sex::M,
            _ => Sex::Missing,
        }
    }
}

/// Static patient attributes `(sex, age, marital status, length of stay, race)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticAttributes {
    pub sex: Sex,
    pub age: Option<u32>,
    pub marital_status: MaritalStatus,
    /// Hours.
    pub length_of_stay: Option<f64>,
    /// Open vocabulary; `None` is the missing code.
    pub race: Option<String>,
}

impl StaticAttributes {
    pub fn is_all_missing(&self) -> bool {
        self.sex == Sex::Missing
            && self.age.is_none()
            && self.marital_status == MaritalStatus::Missing
            && self.length_of_stay.is_none()
            && self.race.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub record_id: String,
    pub patient_id: String,
    /// `F x T`, feature-major.
    pub timeseries: Array2<f64>,
    pub attributes: Option<StaticAttributes>,
}

impl PatientRecord {
    pub fn new(record_id: impl Into<String>, patient_id: impl Into<String>, timeseries: Array2<f64>) -> Self {
        Self {
            record_id: record_id.into(),
            patient_id: patient_id.into(),
            timeseries,
            attributes: None,
        }
    }

    pub fn with_attributes(mut self, attributes: StaticAttributes) -> Self {
        self.attributes = Some(attributes);
        self
    }

    pub fn has_missing(&self) -> bool {
        self.timeseries.iter().any(|v| v.is_nan())
    }

    pub fn feature(&self, f: usize) -> ArrayView1<'_, f64> {
        self.timeseries.row(f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Synthetic,
    Holdout,
    Aux,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Synthetic => "synthetic",
            Split::Holdout => "holdout",
            Split::Aux => "aux",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub records: Vec<PatientRecord>,
    pub split: Split,
    pub seed_provenance: Option<String>,
}

impl Dataset {
    /// Validates record shapes and record-id uniqueness.
    pub fn new(schema: FeatureSchema, records: Vec<PatientRecord>, split: Split) -> Result<Self> {
        schema.validate()?;
        let shape = (schema.n_features(), schema.time_points);
        let mut ids = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.timeseries.dim() != shape {
                return Err(AuditError::Schema(format!(
                    "record {} ({:?}) has shape {:?}, schema expects {:?}",
                    i,
                    r.record_id,
                    r.timeseries.dim(),
                    shape
                )));
            }
            if !ids.insert(r.record_id.as_str()) {
                return Err(AuditError::Integrity(format!("duplicate record_id {:?}", r.record_id)));
            }
        }
        Ok(Self {
            schema,
            records,
            split,
            seed_provenance: None,
        })
    }

    pub fn empty(schema: FeatureSchema, split: Split) -> Self {
        Self {
            schema,
            records: Vec::new(),
            split,
            seed_provenance: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.seed_provenance = Some(provenance.into());
        self
    }

    /// New dataset holding clones of the records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], split: Split) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            split,
            seed_provenance: self.seed_provenance.clone(),
        }
    }

    pub fn has_missing(&self) -> bool {
        self.records.iter().any(PatientRecord::has_missing)
    }

    pub fn has_attributes(&self) -> bool {
        self.records.iter().any(|r| r.attributes.is_some())
    }

    /// Errors unless every cell is present and within its feature bounds.
    pub fn ensure_complete(&self) -> Result<()> {
        for r in &self.records {
            for (f, spec) in self.schema.features.iter().enumerate() {
                if let Some(v) = r.timeseries.row(f).iter().find(|v| !spec.contains(**v)) {
                    return Err(AuditError::Integrity(format!(
                        "record {:?} feature {:?} holds {} (missing or out of bounds)",
                        r.record_id, spec.name, v
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn record_ids(&self) -> HashSet<&str> {
        self.records.iter().map(|r| r.record_id.as_str()).collect()
    }

    /// Row-major `n x (F*T)` matrix of flattened records.
    pub fn flat_matrix(&self) -> Array2<f64> {
        let d = self.schema.dim();
        let mut out = Array2::zeros((self.len(), d));
        for (mut row, r) in out.outer_iter_mut().zip(&self.records) {
            row.assign(&ndarray::ArrayView1::from(flatten_record(r).as_slice()));
        }
        out
    }
}

/// Errors if any two datasets share a record id.
pub fn ensure_disjoint(sets: &[(&str, &Dataset)]) -> Result<()> {
    for (i, (name_a, a)) in sets.iter().enumerate() {
        let ids = a.record_ids();
        for (name_b, b) in &sets[i + 1..] {
            if let Some(r) = b.records.iter().find(|r| ids.contains(r.record_id.as_str())) {
                return Err(AuditError::Integrity(format!(
                    "{name_a} and {name_b} share record_id {:?}",
                    r.record_id
                )));
            }
        }
    }
    Ok(())
}

/// Feature-major concatenation of the record's matrix.
pub fn flatten_record(r: &PatientRecord) -> Vec<f64> {
    r.timeseries.iter().copied().collect()
}

pub fn unflatten(values: &[f64], schema: &FeatureSchema) -> Result<Array2<f64>> {
    Array2::from_shape_vec((schema.n_features(), schema.time_points), values.to_vec()).map_err(|_| {
        AuditError::Argument(format!(
            "vector of length {} does not match F*T = {}",
            values.len(),
            schema.dim()
        ))
    })
}
