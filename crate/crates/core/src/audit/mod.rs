//! The audit pipeline: build member and nonmember test sets, fit and score
//! every attack, threshold at the median, and aggregate bootstrapped metrics
//! over generators and training sizes.

mod config;
mod report;

use std::collections::HashSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{fit_attack, fit_attack_pca, AttackName, AttackSpec, DataMode};
use crate::dataset::{ensure_disjoint, Dataset, Split};
use crate::error::{AuditError, Result};
use crate::metrics::{
    bootstrap_metrics, bootstrap_overfit, median_threshold, overfit_terms, LabeledEntry, LabeledScores,
    MetricEstimate, MetricKind,
};
use crate::refgen::{generate, sample_process_named, GeneratorKind, GeneratorSpec, ProcessSpec};
use crate::seed::{
    derive_seed, rng_from, STAGE_ATTACK, STAGE_AUDIT, STAGE_BOOTSTRAP, STAGE_EXTERNAL_AUX, STAGE_GENERATOR,
    STAGE_HOLDOUT_POOL, STAGE_OVERFIT, STAGE_SANITY, STAGE_SUBSAMPLE, STAGE_TRAIN_POOL,
};

pub use config::{AuditConfig, FileInputs, LoadedFiles, ProcessConfig};
pub use report::{emit_report, load_report, render_heatmap};

/// Where an audit's auxiliary records came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxSource {
    Internal,
    External,
}

impl AuxSource {
    pub fn as_str(self) -> &'static str {
        match self {
            AuxSource::Internal => "internal",
            AuxSource::External => "external",
        }
    }
}

/// Labeled scores of one attack, or why it failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub attack: AttackName,
    pub result: std::result::Result<LabeledScores, String>,
}

/// Output of one run of the audit pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditRun {
    pub aux_ids: Vec<String>,
    pub member_ids: Vec<String>,
    pub nonmember_ids: Vec<String>,
    pub outcomes: Vec<AttackOutcome>,
}

/// Test-set construction for one audit.
struct Partition {
    aux: Dataset,
    nonmembers: Dataset,
}

fn partition_holdout(holdout: &Dataset, n_aux: usize, n_nonmembers: usize, seed: u64) -> Result<Partition> {
    if n_aux + n_nonmembers > holdout.len() {
        return Err(AuditError::Config(format!(
            "holdout has {} records but N_aux + |train| = {}",
            holdout.len(),
            n_aux + n_nonmembers
        )));
    }
    let mut idx: Vec<usize> = (0..holdout.len()).collect();
    idx.shuffle(&mut rng_from(seed));
    Ok(Partition {
        aux: holdout.subset(&idx[..n_aux], Split::Aux),
        nonmembers: holdout.subset(&idx[n_aux..n_aux + n_nonmembers], Split::Test),
    })
}

fn combine(members: &Dataset, nonmembers: &Dataset) -> Result<Dataset> {
    let records = members.records.iter().chain(&nonmembers.records).cloned().collect();
    Dataset::new(members.schema.clone(), records, Split::Test)
}

/// Options for one pipeline execution beyond the config.
struct RunOptions<'a> {
    seed: u64,
    attacks: &'a [AttackName],
    external_aux: Option<&'a Dataset>,
    /// Synthetic records may coincide with training records (sanity checks).
    allow_train_overlap: bool,
}

fn run_pipeline(cfg: &AuditConfig, synth: &Dataset, train: &Dataset, holdout: &Dataset, opts: &RunOptions<'_>) -> Result<AuditRun> {
    if train.is_empty() || synth.is_empty() {
        return Err(AuditError::Config("train and synthetic sets must be nonempty".into()));
    }
    if opts.allow_train_overlap {
        ensure_disjoint(&[("train", train), ("holdout", holdout)])?;
        ensure_disjoint(&[("synthetic", synth), ("holdout", holdout)])?;
    } else {
        ensure_disjoint(&[("train", train), ("holdout", holdout), ("synthetic", synth)])?;
    }
    let part = partition_holdout(holdout, cfg.n_aux, train.len(), derive_seed(opts.seed, &[STAGE_AUDIT]))?;
    let aux = match opts.external_aux {
        Some(ext) => {
            if ext.schema != train.schema {
                return Err(AuditError::Config("external auxiliary data does not share the training schema".into()));
            }
            ensure_disjoint(&[("external_aux", ext), ("train", train), ("holdout", holdout)])?;
            ext
        }
        None => &part.aux,
    };
    let test = combine(train, &part.nonmembers)?;
    let aux_ids: HashSet<&str> = aux.record_ids();
    let test_ids = test.record_ids();
    assert!(aux_ids.is_disjoint(&test_ids), "auxiliary and test records overlap");
    assert!(train.records.iter().all(|r| test_ids.contains(r.record_id.as_str())));

    let params = &cfg.attack;
    let specs: Vec<AttackSpec> = opts
        .attacks
        .iter()
        .enumerate()
        .map(|(i, a)| AttackSpec::new(*a, params.mode, derive_seed(opts.seed, &[STAGE_ATTACK, i as u64])))
        .collect();
    let pca = if specs.iter().any(|s| s.uses_pca) {
        Some(fit_attack_pca(synth, params.mode, params.pca_components).map_err(|e| e.to_string()))
    } else {
        None
    };
    let members: HashSet<&str> = train.record_ids();
    let outcomes = specs
        .iter()
        .map(|spec| {
            let result = (|| -> std::result::Result<LabeledScores, String> {
                let pca = match (&pca, spec.uses_pca) {
                    (Some(Err(e)), true) => return Err(format!("PCA fit failed: {e}")),
                    (Some(Ok(p)), true) => Some(p),
                    _ => None,
                };
                let aux = spec.uses_aux.then_some(aux);
                let fitted = fit_attack(spec, params, synth, aux, pca).map_err(|e| e.to_string())?;
                let scores = fitted.score(&test).map_err(|e| e.to_string())?;
                if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
                    return Err(format!("non-finite score for record {}", test.records[i].record_id));
                }
                let (_, predicted) = median_threshold(&scores).map_err(|e| e.to_string())?;
                Ok(LabeledScores {
                    entries: test
                        .records
                        .iter()
                        .zip(scores)
                        .zip(predicted)
                        .map(|((r, score), predicted)| LabeledEntry {
                            record_id: r.record_id.clone(),
                            member: members.contains(r.record_id.as_str()),
                            score,
                            predicted,
                        })
                        .collect(),
                })
            })();
            if let Err(e) = &result {
                log::warn!("{} failed: {e}", spec.name);
            }
            AttackOutcome {
                attack: spec.name,
                result,
            }
        })
        .collect();
    Ok(AuditRun {
        aux_ids: aux.records.iter().map(|r| r.record_id.clone()).collect(),
        member_ids: train.records.iter().map(|r| r.record_id.clone()).collect(),
        nonmember_ids: part.nonmembers.records.iter().map(|r| r.record_id.clone()).collect(),
        outcomes,
    })
}

/// One audit of `synth` against `train`, with auxiliary and nonmember records
/// drawn from `holdout` under a seeded shuffle.
pub fn run_attack_audit(cfg: &AuditConfig, synth: &Dataset, train: &Dataset, holdout: &Dataset) -> Result<AuditRun> {
    let roster = cfg.roster();
    run_pipeline(
        cfg,
        synth,
        train,
        holdout,
        &RunOptions {
            seed: cfg.seed,
            attacks: &roster,
            external_aux: None,
            allow_train_overlap: false,
        },
    )
}

/// The audit with (a seeded `fraction` of) the training data posing as synthetic data.
pub fn run_sanity_check(cfg: &AuditConfig, train: &Dataset, holdout: &Dataset, fraction: f64) -> Result<AuditRun> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AuditError::Config(format!("sanity fraction {fraction} outside (0, 1]")));
    }
    let keep = ((fraction * train.len() as f64).round() as usize).clamp(1, train.len());
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut rng_from(derive_seed(cfg.seed, &[STAGE_SANITY])));
    let mut chosen = idx[..keep].to_vec();
    chosen.sort_unstable();
    let synth = train.subset(&chosen, Split::Synthetic);
    let roster = cfg.roster();
    run_pipeline(
        cfg,
        &synth,
        train,
        holdout,
        &RunOptions {
            seed: cfg.seed,
            attacks: &roster,
            external_aux: None,
            allow_train_overlap: true,
        },
    )
}

/// Metrics of one (generator, attack, size) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub generator: String,
    pub attack: AttackName,
    pub train_size: usize,
    pub n_synth: usize,
    pub aux_source: AuxSource,
    pub metrics: Vec<MetricEstimate>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn metric(&self, kind: MetricKind) -> Option<&MetricEstimate> {
        self.metrics.iter().find(|m| m.name == kind.as_str())
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverfitResult {
    pub generator: String,
    pub train_size: usize,
    pub estimate: Option<MetricEstimate>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub command: String,
    pub cells: usize,
    pub failed_cells: usize,
}

/// Everything a sweep produced. Contains no wall-clock data, so identical
/// inputs give identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub config: AuditConfig,
    pub cells: Vec<CellResult>,
    pub overfit: Vec<OverfitResult>,
    pub metadata: RunMetadata,
}

impl AuditReport {
    fn new(cfg: &AuditConfig, command: &str, cells: Vec<CellResult>, overfit: Vec<OverfitResult>) -> Self {
        let failed_cells = cells.iter().filter(|c| c.failed()).count() + overfit.iter().filter(|o| o.error.is_some()).count();
        // Where the report is written does not change its contents.
        let config = AuditConfig { out_dir: PathBuf::new(), ..cfg.clone() };
        AuditReport {
            config,
            metadata: RunMetadata {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                cells: cells.len(),
                failed_cells,
            },
            cells,
            overfit,
        }
    }

    pub fn has_failures(&self) -> bool {
        self.metadata.failed_cells > 0
    }

    pub fn cell(&self, generator: &str, attack: AttackName, train_size: usize, aux: AuxSource) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.generator == generator && c.attack == attack && c.train_size == train_size && c.aux_source == aux)
    }

    /// Bootstrap mean AUROC of a cell, if it succeeded.
    pub fn auroc(&self, generator: &str, attack: AttackName, train_size: usize) -> Option<f64> {
        self.cell(generator, attack, train_size, AuxSource::Internal)?
            .metric(MetricKind::Auroc)
            .map(|m| m.boot_mean)
    }

    pub fn overfit_for(&self, generator: &str, train_size: usize) -> Option<f64> {
        self.overfit
            .iter()
            .find(|o| o.generator == generator && o.train_size == train_size)?
            .estimate
            .as_ref()
            .map(|e| e.boot_mean)
    }
}

fn cells_from_run(
    cfg: &AuditConfig,
    run: &AuditRun,
    generator: &str,
    train_size: usize,
    n_synth: usize,
    aux_source: AuxSource,
    boot_seed: u64,
) -> Vec<CellResult> {
    run.outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let (metrics, error) = match &o.result {
                Ok(ls) => match bootstrap_metrics(ls, &MetricKind::ALL, cfg.bootstrap, derive_seed(boot_seed, &[i as u64])) {
                    Ok(m) => (m, None),
                    Err(e) => (Vec::new(), Some(e.to_string())),
                },
                Err(e) => (Vec::new(), Some(e.clone())),
            };
            CellResult {
                generator: generator.to_string(),
                attack: o.attack,
                train_size,
                n_synth,
                aux_source,
                metrics,
                error,
            }
        })
        .collect()
}

fn failed_cells(roster: &[AttackName], generator: &str, n: usize, n_synth: usize, aux: AuxSource, err: &str) -> Vec<CellResult> {
    roster
        .iter()
        .map(|a| CellResult {
            generator: generator.to_string(),
            attack: *a,
            train_size: n,
            n_synth,
            aux_source: aux,
            metrics: Vec::new(),
            error: Some(err.to_string()),
        })
        .collect()
}

/// Training and holdout pools for a sweep.
pub struct Pools {
    pub train: Dataset,
    pub holdout: Dataset,
    pub process: Option<ProcessSpec>,
}

/// Builds the pools from the configured files, or samples them from the reference process.
pub fn prepare_pools(cfg: &AuditConfig) -> Result<Pools> {
    cfg.validate()?;
    if let Some(files) = cfg.load_files()? {
        if cfg.max_size() > files.train.len() {
            return Err(AuditError::Config(format!(
                "sweep size {} exceeds the {} training records",
                cfg.max_size(),
                files.train.len()
            )));
        }
        return Ok(Pools {
            train: files.train,
            holdout: files.holdout,
            process: None,
        });
    }
    let spec = cfg.process.spec(0);
    let n_max = cfg.max_size();
    let train = sample_process_named(&spec.with_seed(derive_seed(cfg.seed, &[STAGE_TRAIN_POOL])), n_max, "train", Split::Train)?;
    let holdout = sample_process_named(
        &spec.with_seed(derive_seed(cfg.seed, &[STAGE_HOLDOUT_POOL])),
        cfg.n_aux + n_max,
        "holdout",
        Split::Holdout,
    )?;
    Ok(Pools {
        train,
        holdout,
        process: Some(spec),
    })
}

/// The first `n` training records under the size-specific shuffle.
pub fn subsample_train(cfg: &AuditConfig, pool: &Dataset, n: usize) -> Result<Dataset> {
    if n > pool.len() {
        return Err(AuditError::Config(format!("size {n} exceeds the {} training records", pool.len())));
    }
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut rng_from(derive_seed(cfg.seed, &[STAGE_SUBSAMPLE, n as u64])));
    let mut chosen = idx[..n].to_vec();
    chosen.sort_unstable();
    Ok(pool.subset(&chosen, Split::Train))
}

fn generator_index(kind: GeneratorKind) -> u64 {
    GeneratorKind::ALL.iter().position(|g| *g == kind).expect("listed") as u64
}

fn cell_seed(cfg: &AuditConfig, stage: u64, generator: u64, n: usize) -> u64 {
    derive_seed(cfg.seed, &[stage, generator, n as u64])
}

fn synthesize(cfg: &AuditConfig, kind: GeneratorKind, train: &Dataset) -> Result<Dataset> {
    let spec = GeneratorSpec {
        kind,
        jitter_sigma: cfg.jitter_sigma,
        seed: cell_seed(cfg, STAGE_GENERATOR, generator_index(kind), train.len()),
    };
    generate(&spec, train, cfg.n_synth_for(train.len()))
}

fn overfit_cell(cfg: &AuditConfig, generator: &str, gi: u64, synth: &Dataset, train: &Dataset, run: &AuditRun, holdout: &Dataset) -> OverfitResult {
    let result = (|| -> Result<MetricEstimate> {
        if cfg.attack.mode == DataMode::Attributes {
            return Err(AuditError::Config("overfit score is computed on time series only".into()));
        }
        let ids: HashSet<&str> = run.nonmember_ids.iter().map(String::as_str).collect();
        let idx: Vec<usize> = holdout
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| ids.contains(r.record_id.as_str()))
            .map(|(i, _)| i)
            .collect();
        let nonmembers = holdout.subset(&idx, Split::Holdout);
        let terms = overfit_terms(synth, train, &nonmembers, cfg.overfit_norm)?;
        bootstrap_overfit(&terms, cfg.bootstrap, cell_seed(cfg, STAGE_OVERFIT, gi, train.len()))
    })();
    match result {
        Ok(e) => OverfitResult {
            generator: generator.to_string(),
            train_size: train.len(),
            estimate: Some(e),
            error: None,
        },
        Err(e) => OverfitResult {
            generator: generator.to_string(),
            train_size: train.len(),
            estimate: None,
            error: Some(e.to_string()),
        },
    }
}

fn sweep_cell(cfg: &AuditConfig, pools: &Pools, kind: GeneratorKind, n: usize, roster: &[AttackName]) -> (Vec<CellResult>, OverfitResult) {
    let gi = generator_index(kind);
    let label = kind.as_str();
    let n_synth = cfg.n_synth_for(n);
    let fail = |e: &AuditError| {
        log::warn!("cell {label} N={n} failed: {e}");
        (
            failed_cells(roster, label, n, n_synth, AuxSource::Internal, &e.to_string()),
            OverfitResult {
                generator: label.to_string(),
                train_size: n,
                estimate: None,
                error: Some(e.to_string()),
            },
        )
    };
    let prepared = subsample_train(cfg, &pools.train, n).and_then(|train| {
        let synth = synthesize(cfg, kind, &train)?;
        let run = run_pipeline(
            cfg,
            &synth,
            &train,
            &pools.holdout,
            &RunOptions {
                seed: cell_seed(cfg, STAGE_AUDIT, gi, n),
                attacks: roster,
                external_aux: None,
                allow_train_overlap: false,
            },
        )?;
        Ok((train, synth, run))
    });
    match prepared {
        Err(e) => fail(&e),
        Ok((train, synth, run)) => {
            log::info!("cell {label} N={n}: scored {} attacks", run.outcomes.len());
            let cells = cells_from_run(cfg, &run, label, n, synth.len(), AuxSource::Internal, cell_seed(cfg, STAGE_BOOTSTRAP, gi, n));
            let overfit = overfit_cell(cfg, label, gi, &synth, &train, &run, &pools.holdout);
            (cells, overfit)
        }
    }
}

/// Runs every (generator, size) cell and assembles the report in grid order.
pub fn run_sweep(cfg: &AuditConfig) -> Result<AuditReport> {
    let pools = prepare_pools(cfg)?;
    run_sweep_on(cfg, &pools, "sweep")
}

pub fn run_sweep_on(cfg: &AuditConfig, pools: &Pools, command: &str) -> Result<AuditReport> {
    let roster = cfg.roster();
    let grid: Vec<(GeneratorKind, usize)> = cfg
        .generators
        .iter()
        .flat_map(|g| cfg.sizes.iter().map(move |n| (*g, *n)))
        .collect();
    let results: Vec<(Vec<CellResult>, OverfitResult)> = grid
        .par_iter()
        .map(|(g, n)| sweep_cell(cfg, pools, *g, *n, &roster))
        .collect();
    let (cells, overfit): (Vec<Vec<CellResult>>, Vec<OverfitResult>) = results.into_iter().unzip();
    Ok(AuditReport::new(cfg, command, cells.into_iter().flatten().collect(), overfit))
}

/// Audit of externally supplied synthetic data at the full training size.
pub fn run_provided(cfg: &AuditConfig, synth: &Dataset, train: &Dataset, holdout: &Dataset) -> Result<AuditReport> {
    let run = run_attack_audit(cfg, synth, train, holdout)?;
    let cells = cells_from_run(cfg, &run, "provided", train.len(), synth.len(), AuxSource::Internal, derive_seed(cfg.seed, &[STAGE_BOOTSTRAP]));
    let overfit = overfit_cell(cfg, "provided", 0, synth, train, &run, holdout);
    Ok(AuditReport::new(cfg, "audit", cells, vec![overfit]))
}

/// Sanity scenarios for every configured fraction at each sweep size.
pub fn run_sanity_report(cfg: &AuditConfig) -> Result<AuditReport> {
    let pools = prepare_pools(cfg)?;
    let roster = cfg.roster();
    let grid: Vec<(f64, usize)> = cfg
        .sanity_fractions
        .iter()
        .flat_map(|f| cfg.sizes.iter().map(move |n| (*f, *n)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(fraction, n)| {
            let label = format!("train_copy_{:.2}", fraction);
            let run = subsample_train(cfg, &pools.train, n).and_then(|train| {
                let sub_cfg = AuditConfig {
                    seed: cell_seed(cfg, STAGE_SANITY, 0, n),
                    ..cfg.clone()
                };
                run_sanity_check(&sub_cfg, &train, &pools.holdout, fraction)
            });
            let n_synth = ((fraction * n as f64).round() as usize).max(1);
            match run {
                Ok(run) => cells_from_run(cfg, &run, &label, n, n_synth, AuxSource::Internal, cell_seed(cfg, STAGE_BOOTSTRAP, 99, n)),
                Err(e) => failed_cells(&roster, &label, n, n_synth, AuxSource::Internal, &e.to_string()),
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(AuditReport::new(cfg, "sanity", cells, Vec::new()))
}

/// An external auxiliary set drawn from the reference process under its own
/// seed, optionally shifted in mean.
pub fn sample_external_aux(cfg: &AuditConfig, n: usize) -> Result<Dataset> {
    let mut spec = cfg.process.spec(derive_seed(cfg.seed, &[STAGE_EXTERNAL_AUX]));
    let shift = cfg.process.external_shift_sd;
    if shift != 0.0 {
        for p in &mut spec.features {
            let sd = (p.level_sd.powi(2) + p.stationary_sd().powi(2)).sqrt();
            p.mean += shift * sd;
        }
    }
    sample_process_named(&spec, n, "extaux", Split::Aux)
}

/// Aux-requiring attacks run twice per cell: with the internal partition of
/// the holdout, and with `external_aux`. Test sets are identical in both runs.
pub fn run_external_aux(cfg: &AuditConfig, external_aux: &Dataset) -> Result<AuditReport> {
    let pools = prepare_pools(cfg)?;
    run_external_aux_on(cfg, &pools, external_aux)
}

pub fn run_external_aux_on(cfg: &AuditConfig, pools: &Pools, external_aux: &Dataset) -> Result<AuditReport> {
    if external_aux.schema != pools.train.schema {
        return Err(AuditError::Config("external auxiliary data does not share the training schema".into()));
    }
    let roster: Vec<AttackName> = cfg.roster().into_iter().filter(|a| a.requires_aux()).collect();
    if roster.is_empty() {
        return Err(AuditError::Config("no auxiliary attacks in the roster".into()));
    }
    let grid: Vec<(GeneratorKind, usize)> = cfg
        .generators
        .iter()
        .flat_map(|g| cfg.sizes.iter().map(move |n| (*g, *n)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(kind, n)| {
            let gi = generator_index(kind);
            let label = kind.as_str();
            let n_synth = cfg.n_synth_for(n);
            let prepared = subsample_train(cfg, &pools.train, n).and_then(|train| {
                let synth = synthesize(cfg, kind, &train)?;
                Ok((train, synth))
            });
            let (train, synth) = match prepared {
                Ok(v) => v,
                Err(e) => {
                    let mut out = failed_cells(&roster, label, n, n_synth, AuxSource::Internal, &e.to_string());
                    out.extend(failed_cells(&roster, label, n, n_synth, AuxSource::External, &e.to_string()));
                    return out;
                }
            };
            [(AuxSource::Internal, None), (AuxSource::External, Some(external_aux))]
                .into_iter()
                .flat_map(|(source, ext)| {
                    let run = run_pipeline(
                        cfg,
                        &synth,
                        &train,
                        &pools.holdout,
                        &RunOptions {
                            seed: cell_seed(cfg, STAGE_AUDIT, gi, n),
                            attacks: &roster,
                            external_aux: ext,
                            allow_train_overlap: false,
                        },
                    );
                    match run {
                        Ok(run) => cells_from_run(cfg, &run, label, n, synth.len(), source, cell_seed(cfg, STAGE_BOOTSTRAP, gi, n)),
                        Err(e) => failed_cells(&roster, label, n, synth.len(), source, &e.to_string()),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(AuditReport::new(cfg, "external-aux", cells, Vec::new()))
}
