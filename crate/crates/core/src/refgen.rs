//! Reference data: a stationary ICU-like stochastic process and four synthetic
//! data generators spanning memorisation to fresh sampling.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureSchema, MaritalStatus, PatientRecord, Sex, Split, StaticAttributes};
use crate::error::{AuditError, Result};
use crate::seed::{derive_seed, rng_from, STAGE_GENERATOR, STAGE_PROCESS};

/// Per-feature generating parameters: `mean + level + AR(1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureProcess {
    pub mean: f64,
    pub level_sd: f64,
    pub ar: f64,
    pub innovation_sd: f64,
}

impl FeatureProcess {
    pub fn new(mean: f64, level_sd: f64, ar: f64, innovation_sd: f64) -> Self {
        FeatureProcess {
            mean,
            level_sd,
            ar,
            innovation_sd,
        }
    }

    /// Standard deviation of the stationary AR(1) component.
    pub fn stationary_sd(&self) -> f64 {
        self.innovation_sd / (1.0 - self.ar * self.ar).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub schema: FeatureSchema,
    pub features: Vec<FeatureProcess>,
    /// Share of each record's level variance driven by one common factor.
    #[serde(default)]
    pub level_correlation: f64,
    #[serde(default)]
    pub attributes: bool,
    pub seed: u64,
}

const RACES: [(&str, f64); 5] = [
    ("white", 0.62),
    ("black", 0.14),
    ("hispanic", 0.08),
    ("asian", 0.05),
    ("other", 0.11),
];

impl ProcessSpec {
    /// Vital-sign and lab parameters for the nine-feature ICU schema.
    pub fn icu(time_points: usize, grid_step_minutes: u32, seed: u64) -> Self {
        let features = vec![
            FeatureProcess::new(62.0, 8.0, 0.9, 3.0),
            FeatureProcess::new(120.0, 14.0, 0.9, 5.0),
            FeatureProcess::new(19.0, 3.0, 0.8, 2.0),
            FeatureProcess::new(86.0, 12.0, 0.92, 3.0),
            FeatureProcess::new(96.5, 1.5, 0.7, 0.8),
            FeatureProcess::new(5.0, 3.0, 0.97, 0.3),
            FeatureProcess::new(140.0, 30.0, 0.85, 15.0),
            FeatureProcess::new(139.0, 3.5, 0.95, 0.5),
            FeatureProcess::new(37.0, 0.5, 0.9, 0.15),
        ];
        ProcessSpec {
            schema: FeatureSchema::icu(time_points, grid_step_minutes),
            features,
            level_correlation: 0.3,
            attributes: false,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ProcessSpec { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.features.len() != self.schema.n_features() {
            return Err(AuditError::Config(format!(
                "process has {} features, schema has {}",
                self.features.len(),
                self.schema.n_features()
            )));
        }
        for (p, f) in self.features.iter().zip(&self.schema.features) {
            if !(p.ar > 0.0 && p.ar < 1.0) {
                return Err(AuditError::Config(format!("AR coefficient for '{}' must lie in (0,1)", f.name)));
            }
            if !(p.level_sd >= 0.0 && p.innovation_sd >= 0.0 && p.mean.is_finite()) {
                return Err(AuditError::Config(format!("invalid scale parameters for '{}'", f.name)));
            }
        }
        if !(0.0..1.0).contains(&self.level_correlation) {
            return Err(AuditError::Config("level_correlation must lie in [0,1)".into()));
        }
        Ok(())
    }

    fn sample_record(&self, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let t_len = self.schema.time_points;
        let shared: f64 = StandardNormal.sample(rng);
        let (a, b) = (self.level_correlation.sqrt(), (1.0 - self.level_correlation).sqrt());
        let mut ts = Array2::zeros((self.features.len(), t_len));
        for (f, (p, spec)) in self.features.iter().zip(&self.schema.features).enumerate() {
            let own: f64 = StandardNormal.sample(rng);
            let level = p.level_sd * (a * shared + b * own);
            let z0: f64 = StandardNormal.sample(rng);
            let mut x = p.stationary_sd() * z0;
            for t in 0..t_len {
                if t > 0 {
                    let e: f64 = StandardNormal.sample(rng);
                    x = p.ar * x + p.innovation_sd * e;
                }
                ts[[f, t]] = (p.mean + level + x).clamp(spec.min_bound, spec.max_bound);
            }
        }
        ts
    }
}

fn sample_attributes(rng: &mut ChaCha8Rng) -> StaticAttributes {
    let sex = if rng.random_bool(0.45) { Sex::F } else { Sex::M };
    let age: f64 = Normal::new(64.0, 16.0).expect("valid").sample(rng);
    let marital = match rng.random_range(0..100) {
        0..35 => MaritalStatus::Married,
        35..65 => MaritalStatus::Single,
        65..78 => MaritalStatus::Widowed,
        78..88 => MaritalStatus::Divorced,
        _ => MaritalStatus::Missing,
    };
    let los: f64 = LogNormal::new(72f64.ln(), 0.8).expect("valid").sample(rng);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let race = RACES
        .iter()
        .find(|(_, p)| {
            acc += p;
            u < acc
        })
        .map_or("other", |(r, _)| r);
    StaticAttributes {
        sex,
        age: Some(age.clamp(18.0, 91.0).round() as u32),
        marital_status: marital,
        length_of_stay: Some((los * 10.0).round() / 10.0),
        race: Some(race.to_string()),
    }
}

/// `n` independent records with ids `{prefix}-{i}`.
pub fn sample_process_named(spec: &ProcessSpec, n: usize, prefix: &str, split: Split) -> Result<Dataset> {
    spec.validate()?;
    if n == 0 {
        return Err(AuditError::Argument("sample_process needs n >= 1".into()));
    }
    let records: Vec<PatientRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(derive_seed(spec.seed, &[STAGE_PROCESS, i as u64]));
            let ts = spec.sample_record(&mut rng);
            let id = format!("{prefix}-{i}");
            let rec = PatientRecord::new(id.clone(), id, ts);
            if spec.attributes {
                rec.with_attributes(sample_attributes(&mut rng))
            } else {
                rec
            }
        })
        .collect();
    Ok(Dataset::new(spec.schema.clone(), records, split)?.with_provenance(format!("process seed {}", spec.seed)))
}

pub fn sample_process(spec: &ProcessSpec, n: usize) -> Result<Dataset> {
    sample_process_named(spec, n, "proc", Split::Train)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Memorizer,
    Jitter,
    MarginalResampler,
    ProcessResampler,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::Memorizer,
        GeneratorKind::Jitter,
        GeneratorKind::MarginalResampler,
        GeneratorKind::ProcessResampler,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Memorizer => "memorizer",
            GeneratorKind::Jitter => "jitter",
            GeneratorKind::MarginalResampler => "marginal_resampler",
            GeneratorKind::ProcessResampler => "process_resampler",
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_jitter() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default = "default_jitter")]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        GeneratorSpec {
            kind,
            jitter_sigma: default_jitter(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(AuditError::Config("jitter_sigma must be nonnegative".into()));
        }
        if self.kind == GeneratorKind::Jitter && self.jitter_sigma == 0.0 {
            return Err(AuditError::Config("jitter generator needs jitter_sigma > 0".into()));
        }
        Ok(())
    }
}

fn empirical_ranges(train: &Dataset) -> Vec<f64> {
    let f = train.schema.n_features();
    let mut lo = vec![f64::INFINITY; f];
    let mut hi = vec![f64::NEG_INFINITY; f];
    for r in &train.records {
        for (k, row) in r.timeseries.rows().into_iter().enumerate() {
            for &v in row {
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
    }
    lo.iter().zip(&hi).map(|(l, h)| h - l).collect()
}

fn record_rng(spec: &GeneratorSpec, i: usize) -> ChaCha8Rng {
    rng_from(derive_seed(spec.seed, &[STAGE_GENERATOR, i as u64]))
}

fn pick<'a>(train: &'a Dataset, rng: &mut ChaCha8Rng) -> &'a PatientRecord {
    &train.records[rng.random_range(0..train.len())]
}

/// Attributes built field by field from independent draws over `train`.
fn marginal_attributes(train: &Dataset, rng: &mut ChaCha8Rng) -> Option<StaticAttributes> {
    if !train.has_attributes() {
        return None;
    }
    let mut field = || loop {
        if let Some(a) = &pick(train, rng).attributes {
            return a.clone();
        }
    };
    Some(StaticAttributes {
        sex: field().sex,
        age: field().age,
        marital_status: field().marital_status,
        length_of_stay: field().length_of_stay,
        race: field().race,
    })
}

/// Produces `n_synth` synthetic records with ids `synth-{i}`.
///
/// Copying generators emit each training record once, in shuffled order, before
/// drawing the remainder uniformly with replacement.
pub fn generate(spec: &GeneratorSpec, train: &Dataset, n_synth: usize) -> Result<Dataset> {
    spec.validate()?;
    if train.is_empty() {
        return Err(AuditError::Argument("generator needs a nonempty training set".into()));
    }
    train.ensure_complete()?;
    let schema = &train.schema;
    let process = match spec.kind {
        GeneratorKind::ProcessResampler => Some(fit_process(train, derive_seed(spec.seed, &[STAGE_PROCESS]))?),
        _ => None,
    };
    let ranges = empirical_ranges(train);
    let mut cover: Vec<usize> = (0..train.len()).collect();
    cover.shuffle(&mut rng_from(derive_seed(spec.seed, &[STAGE_GENERATOR, u64::MAX])));
    let source = |i: usize, rng: &mut ChaCha8Rng| match cover.get(i) {
        Some(&j) => &train.records[j],
        None => pick(train, rng),
    };
    let records: Vec<PatientRecord> = (0..n_synth)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(spec, i);
            let (ts, attrs) = match spec.kind {
                GeneratorKind::Memorizer => {
                    let src = source(i, &mut rng);
                    (src.timeseries.clone(), src.attributes.clone())
                }
                GeneratorKind::Jitter => {
                    let src = source(i, &mut rng);
                    let mut ts = src.timeseries.clone();
                    for ((f, _), v) in ts.indexed_iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        let b = &schema.features[f];
                        *v = (*v + spec.jitter_sigma * ranges[f] * e).clamp(b.min_bound, b.max_bound);
                    }
                    (ts, src.attributes.clone())
                }
                GeneratorKind::MarginalResampler => {
                    let ts = Array2::from_shape_fn((schema.n_features(), schema.time_points), |(f, t)| {
                        pick(train, &mut rng).timeseries[[f, t]]
                    });
                    (ts, marginal_attributes(train, &mut rng))
                }
                GeneratorKind::ProcessResampler => {
                    let p = process.as_ref().expect("fitted above");
                    let ts = p.sample_record(&mut rng);
                    (ts, marginal_attributes(train, &mut rng))
                }
            };
            let id = format!("synth-{i}");
            PatientRecord {
                attributes: attrs,
                ..PatientRecord::new(id.clone(), id, ts)
            }
        })
        .collect();
    Ok(Dataset::new(schema.clone(), records, Split::Synthetic)?
        .with_provenance(format!("{} seed {}", spec.kind, spec.seed)))
}

/// Fraction of the stationary variance that survives subtracting a record's
/// own mean over `t` steps of an AR(1) with coefficient `phi`.
fn within_fraction(phi: f64, t: usize) -> f64 {
    let n = t as f64;
    let mut s = 0.0;
    let mut pk = 1.0;
    for k in 1..t {
        pk *= phi;
        s += (1.0 - k as f64 / n) * pk;
    }
    1.0 - (1.0 + 2.0 * s) / n
}

/// Closed-form AR(1) moment fit per feature (mean, within and between
/// variance, bias-corrected lag-1 autocorrelation).
pub fn fit_process(train: &Dataset, seed: u64) -> Result<ProcessSpec> {
    train.ensure_complete()?;
    let (f_len, t_len) = (train.schema.n_features(), train.schema.time_points);
    if t_len < 3 {
        return Err(AuditError::Fit("process fit needs at least 3 time points".into()));
    }
    let n = train.len() as f64;
    let mut features = Vec::with_capacity(f_len);
    for f in 0..f_len {
        let mut rec_means = Vec::with_capacity(train.len());
        let (mut ss0, mut ss1) = (0.0, 0.0);
        for r in &train.records {
            let row = r.timeseries.row(f);
            let m = row.sum() / t_len as f64;
            rec_means.push(m);
            for t in 0..t_len {
                let d = row[t] - m;
                ss0 += d * d;
                if t + 1 < t_len {
                    ss1 += d * (row[t + 1] - m);
                }
            }
        }
        let grand = crate::util::mean(&rec_means);
        let within = ss0 / (n * t_len as f64);
        let r1 = if ss0 > 0.0 { ss1 / ss0 } else { 0.0 };
        let phi = (r1 + (1.0 + 3.0 * r1) / t_len as f64).clamp(0.01, 0.99);
        let g = within_fraction(phi, t_len);
        let stat_var = within / g;
        let between = if rec_means.len() > 1 { crate::util::sample_std(&rec_means).powi(2) } else { 0.0 };
        let level_var = (between - stat_var * (1.0 - g)).max(0.0);
        features.push(FeatureProcess::new(grand, level_var.sqrt(), phi, (stat_var * (1.0 - phi * phi)).sqrt()));
    }
    Ok(ProcessSpec {
        schema: train.schema.clone(),
        features,
        level_correlation: 0.0,
        attributes: false,
        seed,
    })
}
