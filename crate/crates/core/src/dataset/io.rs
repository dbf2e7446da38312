//! CSV dataset files.
//!
//! One row per record: `record_id`, `patient_id`, one column per
//! `<feature>__t<k>` cell in feature-major order, then optionally the five
//! `attr__*` columns. Floats are written in shortest round-trip form.

use std::path::Path;

use ndarray::Array2;

use super::{Dataset, FeatureSchema, MaritalStatus, PatientRecord, Sex, Split, StaticAttributes};
use crate::error::{AuditError, Result};

const ATTR_COLUMNS: [&str; 5] = [
    "attr__sex",
    "attr__age",
    "attr__marital_status",
    "attr__length_of_stay",
    "attr__race",
];

fn header(schema: &FeatureSchema, with_attrs: bool) -> Vec<String> {
    let mut h = vec!["record_id".to_string(), "patient_id".to_string()];
    for f in 0..schema.n_features() {
        for t in 0..schema.time_points {
            h.push(schema.column_name(f, t));
        }
    }
    if with_attrs {
        h.extend(ATTR_COLUMNS.iter().map(|s| s.to_string()));
    }
    h
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let with_attrs = ds.has_attributes();
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header(&ds.schema, with_attrs))?;
    let mut row: Vec<String> = Vec::new();
    for r in &ds.records {
        row.clear();
        row.push(r.record_id.clone());
        row.push(r.patient_id.clone());
        row.extend(r.timeseries.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        if with_attrs {
            match &r.attributes {
                Some(a) => {
                    row.push(a.sex.as_str().to_string());
                    row.push(a.age.map(|v| v.to_string()).unwrap_or_default());
                    row.push(a.marital_status.as_str().to_string());
                    row.push(a.length_of_stay.map(|v| v.to_string()).unwrap_or_default());
                    row.push(a.race.clone().unwrap_or_default());
                }
                None => row.extend(std::iter::repeat_n(String::new(), ATTR_COLUMNS.len())),
            }
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| AuditError::io(path, e.into_error()))?;
    crate::util::write_atomic(path, &bytes)
}

/// Loads a dataset; time-series cells must all be present and numeric.
pub fn load_dataset(path: impl AsRef<Path>, schema: &FeatureSchema, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AuditError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let base = header(schema, false);
    if got.len() < base.len() || got[..base.len()] != base[..] {
        let pos = got.iter().zip(&base).position(|(a, b)| a != b).unwrap_or(got.len().min(base.len()));
        return Err(AuditError::Schema(format!(
            "header does not match schema at column {pos}: expected {:?}, found {:?}",
            base.get(pos),
            got.get(pos)
        )));
    }
    let with_attrs = match &got[base.len()..] {
        [] => false,
        rest if rest.iter().map(String::as_str).eq(ATTR_COLUMNS) => true,
        rest => {
            return Err(AuditError::Schema(format!("unexpected trailing columns {rest:?}")));
        }
    };
    let width = got.len();
    let (nf, nt) = (schema.n_features(), schema.time_points);

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AuditError::Parse { row, message: e.to_string() })?;
        if rec.len() != width {
            return Err(AuditError::Parse {
                row,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let mut values = Vec::with_capacity(nf * nt);
        for (k, cell) in rec.iter().skip(2).take(nf * nt).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| AuditError::Parse {
                row,
                message: format!("column {:?}: {:?} is not a number", base[k + 2], cell),
            })?;
            if !v.is_finite() {
                return Err(AuditError::Parse {
                    row,
                    message: format!("column {:?}: non-finite value", base[k + 2]),
                });
            }
            values.push(v);
        }
        let ts = Array2::from_shape_vec((nf, nt), values).expect("width checked above");
        let mut record = PatientRecord::new(&rec[0], &rec[1], ts);
        if with_attrs {
            let a = &rec.iter().skip(2 + nf * nt).collect::<Vec<_>>();
            let attrs = parse_attributes(a, row)?;
            if !attrs.is_all_missing() {
                record.attributes = Some(attrs);
            }
        }
        records.push(record);
    }
    Dataset::new(schema.clone(), records, split)
}

fn parse_attributes(cells: &[&str], row: usize) -> Result<StaticAttributes> {
    let opt = |s: &str| if s.trim().is_empty() { None } else { Some(s.trim().to_string()) };
    let age = match opt(cells[1]) {
        None => None,
        Some(s) => Some(s.parse::<u32>().map_err(|_| AuditError::Parse {
            row,
            message: format!("attr__age: {s:?} is not a non-negative integer"),
        })?),
    };
    let length_of_stay = match opt(cells[3]) {
        None => None,
        Some(s) => {
            let v: f64 = s.parse().map_err(|_| AuditError::Parse {
                row,
                message: format!("attr__length_of_stay: {s:?} is not a number"),
            })?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(AuditError::Parse {
                    row,
                    message: "attr__length_of_stay must be non-negative".into(),
                });
            }
            Some(v)
        }
    };
    Ok(StaticAttributes {
        sex: Sex::parse(cells[0]),
        age,
        marital_status: MaritalStatus::parse(cells[2]),
        length_of_stay,
        race: opt(cells[4]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::FeatureSpec;
    use ndarray::array;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(
            vec![FeatureSpec::new("hr", "bpm", 0.0, 300.0), FeatureSpec::new("temp", "C", 20.0, 45.0)],
            4,
            10,
        )
        .unwrap()
    }

    fn record(id: &str, base: f64) -> PatientRecord {
        PatientRecord::new(
            id,
            format!("p-{id}"),
            array![[base, base + 0.1, base + 1e-9, 1.0 / 3.0], [36.6, 37.0, 38.25, 36.123456789012345]],
        )
    }

    #[test]
    fn round_trip_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let ds = Dataset::new(schema(), vec![record("a", 80.0), record("b", 90.0), record("c", 100.0)], Split::Train).unwrap();
        save_dataset(&ds, &p).unwrap();
        let back = load_dataset(&p, &schema(), Split::Train).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.records, ds.records);
        assert_eq!(back.split, Split::Train);
    }

    #[test]
    fn empty_dataset_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        save_dataset(&Dataset::empty(schema(), Split::Holdout), &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("record_id,patient_id,hr__t0"));
        assert!(load_dataset(&p, &schema(), Split::Holdout).unwrap().is_empty());
    }

    #[test]
    fn attributes_round_trip_with_missing_levels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let full = StaticAttributes {
            sex: Sex::F,
            age: Some(71),
            marital_status: MaritalStatus::Widowed,
            length_of_stay: Some(73.5),
            race: Some("asian".into()),
        };
        let partial = StaticAttributes {
            sex: Sex::M,
            age: None,
            marital_status: MaritalStatus::Missing,
            length_of_stay: None,
            race: None,
        };
        let ds = Dataset::new(
            schema(),
            vec![
                record("a", 80.0).with_attributes(full),
                record("b", 81.0).with_attributes(partial),
                record("c", 82.0),
            ],
            Split::Synthetic,
        )
        .unwrap();
        save_dataset(&ds, &p).unwrap();
        let back = load_dataset(&p, &schema(), Split::Synthetic).unwrap();
        assert_eq!(back.records, ds.records);
    }

    #[test]
    fn non_numeric_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        let ds = Dataset::new(schema(), vec![record("a", 80.0), record("b", 90.0)], Split::Train).unwrap();
        save_dataset(&ds, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace("90.1", "abc");
        std::fs::write(&p, text).unwrap();
        match load_dataset(&p, &schema(), Split::Train) {
            Err(AuditError::Parse { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_record_id_is_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dup.csv");
        let ds = Dataset::new(schema(), vec![record("a", 80.0), record("b", 90.0)], Split::Train).unwrap();
        save_dataset(&ds, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replace("b,p-b", "a,p-b");
        std::fs::write(&p, text).unwrap();
        assert!(matches!(load_dataset(&p, &schema(), Split::Train), Err(AuditError::Integrity(_))));
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let ds = Dataset::new(schema(), vec![record("a", 80.0)], Split::Train).unwrap();
        save_dataset(&ds, &p).unwrap();
        let other = FeatureSchema::new(vec![FeatureSpec::new("hr", "bpm", 0.0, 300.0)], 4, 10).unwrap();
        assert!(matches!(load_dataset(&p, &other, Split::Train), Err(AuditError::Schema(_))));
    }
}
