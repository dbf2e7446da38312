use synthaudit::dataset::{Dataset, FeatureSchema, FeatureSpec, Split};
use synthaudit::metrics::nrmse_min;
use synthaudit::refgen::{
    fit_process, generate, sample_process, FeatureProcess, GeneratorKind, GeneratorSpec, ProcessSpec,
};

fn lag1(ds: &Dataset, f: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for r in &ds.records {
        let row = r.timeseries.row(f);
        let m = row.mean().unwrap();
        for t in 0..row.len() {
            den += (row[t] - m).powi(2);
            if t + 1 < row.len() {
                num += (row[t] - m) * (row[t + 1] - m);
            }
        }
    }
    num / den
}

fn wide_spec(t: usize, seed: u64) -> ProcessSpec {
    let feats = vec![
        FeatureSpec::new("a", "u", -1e6, 1e6),
        FeatureSpec::new("b", "u", -1e6, 1e6),
    ];
    ProcessSpec {
        schema: FeatureSchema::new(feats, t, 5).unwrap(),
        features: vec![FeatureProcess::new(0.0, 1.0, 0.8, 1.0), FeatureProcess::new(10.0, 0.5, 0.5, 2.0)],
        level_correlation: 0.0,
        attributes: false,
        seed,
    }
}

#[test]
fn long_series_recover_ar_coefficient() {
    let d = sample_process(&wide_spec(288, 3), 500).unwrap();
    for (f, ar) in [(0, 0.8), (1, 0.5)] {
        let r = lag1(&d, f);
        // Within-record demeaning biases lag-1 down by about (1 + 3 ar) / T.
        let corrected = r + (1.0 + 3.0 * r) / 288.0;
        assert!((corrected - ar).abs() < 0.1, "feature {f}: {corrected} vs {ar}");
    }
}

#[test]
fn fitted_process_matches_moments() {
    let spec = wide_spec(96, 4);
    let d = sample_process(&spec, 800).unwrap();
    let fit = fit_process(&d, 0).unwrap();
    for (got, want) in fit.features.iter().zip(&spec.features) {
        assert!((got.ar - want.ar).abs() < 0.05, "{} vs {}", got.ar, want.ar);
        assert!((got.mean - want.mean).abs() < 0.2);
        assert!((got.stationary_sd() - want.stationary_sd()).abs() < 0.1 * want.stationary_sd());
        assert!((got.level_sd - want.level_sd).abs() < 0.25, "{} vs {}", got.level_sd, want.level_sd);
    }
}

#[test]
fn marginal_resampler_keeps_cell_means_and_breaks_autocorrelation() {
    let train = sample_process(&wide_spec(24, 5), 400).unwrap();
    let synth = generate(&GeneratorSpec::new(GeneratorKind::MarginalResampler, 9), &train, 4000).unwrap();
    for f in 0..2 {
        let sd = train.records.iter().map(|r| r.timeseries[[f, 0]]).fold((0.0, 0.0), |(s, q), v| (s + v, q + v * v));
        let n = train.len() as f64;
        let cell_sd = (sd.1 / n - (sd.0 / n).powi(2)).sqrt();
        for t in [0, 11, 23] {
            let m_train = train.records.iter().map(|r| r.timeseries[[f, t]]).sum::<f64>() / n;
            let m_syn = synth.records.iter().map(|r| r.timeseries[[f, t]]).sum::<f64>() / synth.len() as f64;
            assert!((m_train - m_syn).abs() < 4.0 * cell_sd / n.sqrt(), "f{f} t{t}: {m_train} vs {m_syn}");
        }
        assert!(lag1(&train, f) > 0.3);
        assert!(lag1(&synth, f).abs() < 0.1, "lag-1 survived: {}", lag1(&synth, f));
    }
}

#[test]
fn memorizer_copies_train_and_stays_within_bounds() {
    let spec = ProcessSpec::icu(12, 60, 6);
    let train = sample_process(&spec, 40).unwrap();
    let synth = generate(&GeneratorSpec::new(GeneratorKind::Memorizer, 1), &train, 100).unwrap();
    assert_eq!(synth.split, Split::Synthetic);
    assert_eq!(nrmse_min(&synth, &train).unwrap(), 0.0);
    for kind in GeneratorKind::ALL {
        let s = generate(&GeneratorSpec::new(kind, 2), &train, 50).unwrap();
        for r in &s.records {
            for (k, row) in r.timeseries.rows().into_iter().enumerate() {
                let b = &spec.schema.features[k];
                assert!(row.iter().all(|v| *v >= b.min_bound && *v <= b.max_bound), "{kind}");
            }
        }
    }
}

#[test]
fn generators_are_seed_deterministic() {
    let train = sample_process(&ProcessSpec::icu(8, 60, 1), 30).unwrap();
    for kind in GeneratorKind::ALL {
        let a = generate(&GeneratorSpec::new(kind, 77), &train, 20).unwrap();
        let b = generate(&GeneratorSpec::new(kind, 77), &train, 20).unwrap();
        let c = generate(&GeneratorSpec::new(kind, 78), &train, 20).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.records, c.records);
    }
}

#[test]
fn copying_generators_cover_every_training_record() {
    let train = sample_process(&ProcessSpec::icu(6, 60, 9), 50).unwrap();
    let synth = generate(&GeneratorSpec::new(GeneratorKind::Memorizer, 4), &train, 200).unwrap();
    for r in &train.records {
        assert!(synth.records.iter().any(|s| s.timeseries == r.timeseries));
    }
    assert_eq!(nrmse_min(&train, &synth).unwrap(), 0.0);
}
