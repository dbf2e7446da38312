use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{AuditError, Result};
use crate::seed::rng_from;

/// Partitions `ds` into `fractions.len()` datasets.
///
/// Groups (one per patient when `by_patient`, otherwise one per record) are
/// shuffled with `seed` and dealt out against the cumulative targets
/// `round(cumsum(fractions) * n)`. Each output keeps the input record order.
pub fn split_disjoint(ds: &Dataset, fractions: &[f64], seed: u64, by_patient: bool) -> Result<Vec<Dataset>> {
    if fractions.is_empty() {
        return Err(AuditError::Argument("fractions must be nonempty".into()));
    }
    if fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(AuditError::Argument("fractions must be non-negative".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(AuditError::Argument(format!("fractions sum to {total}, expected 1")));
    }
    if ds.is_empty() {
        return Err(AuditError::Argument("cannot split an empty dataset".into()));
    }

    let mut groups: Vec<Vec<usize>> = if by_patient {
        let mut by: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in ds.records.iter().enumerate() {
            by.entry(r.patient_id.as_str()).or_default().push(i);
        }
        by.into_values().collect()
    } else {
        (0..ds.len()).map(|i| vec![i]).collect()
    };
    groups.shuffle(&mut rng_from(seed));

    let n = ds.len() as f64;
    let mut cum = 0.0;
    let boundaries: Vec<f64> = fractions
        .iter()
        .map(|f| {
            cum += f;
            (cum * n).round()
        })
        .collect();

    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    let mut count = 0.0;
    for g in groups {
        let mid = count + g.len() as f64 / 2.0;
        let k = boundaries.iter().position(|&b| mid < b).unwrap_or(fractions.len() - 1);
        count += g.len() as f64;
        assigned[k].extend(g);
    }
    Ok(assigned
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            ds.subset(&idx, ds.split)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSchema, FeatureSpec, PatientRecord, Split};
    use ndarray::Array2;
    use proptest::prelude::*;

    fn make(n: usize, patient: impl Fn(usize) -> String) -> Dataset {
        let schema = FeatureSchema::new(vec![FeatureSpec::new("x", "u", -1e9, 1e9)], 1, 1).unwrap();
        let records = (0..n)
            .map(|i| PatientRecord::new(format!("r{i}"), patient(i), Array2::from_elem((1, 1), i as f64)))
            .collect();
        Dataset::new(schema, records, Split::Holdout).unwrap()
    }

    #[test]
    fn halves_of_one_hundred() {
        let ds = make(100, |i| format!("p{i}"));
        let parts = split_disjoint(&ds, &[0.5, 0.5], 7, true).unwrap();
        assert_eq!(parts[0].len(), 50);
        assert_eq!(parts[1].len(), 50);
    }

    #[test]
    fn one_patient_stays_together() {
        let ds = make(10, |_| "p".into());
        let parts = split_disjoint(&ds, &[0.3, 0.3, 0.4], 1, true).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Dataset::len).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 10).count(), 1);
        assert_eq!(sizes.iter().sum::<usize>(), 10);
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = make(37, |i| format!("p{}", i / 3));
        let a = split_disjoint(&ds, &[0.2, 0.8], 11, true).unwrap();
        let b = split_disjoint(&ds, &[0.2, 0.8], 11, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let ds = make(5, |i| format!("p{i}"));
        assert!(matches!(split_disjoint(&ds, &[0.5, 0.4], 0, false), Err(AuditError::Argument(_))));
        assert!(matches!(split_disjoint(&ds, &[], 0, false), Err(AuditError::Argument(_))));
    }

    proptest! {
        #[test]
        fn outputs_partition_input(n in 1usize..80, per_patient in 1usize..5, seed in any::<u64>(), cut in 0.0f64..1.0) {
            let ds = make(n, |i| format!("p{}", i / per_patient));
            let parts = split_disjoint(&ds, &[cut, 1.0 - cut], seed, true).unwrap();
            let mut ids: Vec<String> = parts.iter().flat_map(|p| p.records.iter().map(|r| r.record_id.clone())).collect();
            ids.sort();
            let mut want: Vec<String> = ds.records.iter().map(|r| r.record_id.clone()).collect();
            want.sort();
            prop_assert_eq!(ids, want);
            let pa: std::collections::HashSet<_> = parts[0].records.iter().map(|r| r.patient_id.clone()).collect();
            prop_assert!(parts[1].records.iter().all(|r| !pa.contains(&r.patient_id)));
        }
    }
}
