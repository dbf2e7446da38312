use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use synthaudit::audit::{
    emit_report, load_report, prepare_pools, run_external_aux_on, run_provided, run_sanity_report, run_sweep_on,
    sample_external_aux, AuditConfig, AuditReport,
};
use synthaudit::dataset::save_dataset;
use synthaudit::refgen::{generate, GeneratorSpec};
use synthaudit::seed::{derive_seed, STAGE_GENERATOR};
use synthaudit::{AuditError, Result};

#[derive(Parser)]
#[command(name = "synthaudit", version, about = "Membership-inference audits of synthetic time-series data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Audit provided synthetic data, or the first configured generator.
    Audit(Common),
    /// Every generator at every training size.
    Sweep(Common),
    /// Training data posing as synthetic data, at each sanity fraction.
    Sanity(Common),
    /// Auxiliary attacks with internal versus external auxiliary data.
    ExternalAux(Common),
    /// Write reference training, holdout, auxiliary and synthetic datasets.
    Gen(Common),
    /// Re-render outputs from a saved report.json.
    Report {
        /// Path to report.json.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<AuditConfig> {
    let mut cfg = match &c.config {
        Some(p) => AuditConfig::load(p)?,
        None => AuditConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(AuditError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| AuditError::Config(e.to_string()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn finish(report: &AuditReport, cfg: &AuditConfig) -> Result<bool> {
    emit_report(report, &cfg.out_dir)?;
    log::info!(
        "wrote {} cells ({} failed) to {}",
        report.metadata.cells,
        report.metadata.failed_cells,
        cfg.out_dir.display()
    );
    Ok(!report.has_failures())
}

fn run(cmd: Command) -> Result<bool> {
    let started = Instant::now();
    let ok = match cmd {
        Command::Audit(c) => {
            let cfg = load_config(&c)?;
            let report = match cfg.load_files()? {
                Some(files) if files.synthetic.is_some() => {
                    let synth = files.synthetic.as_ref().expect("checked");
                    run_provided(&cfg, synth, &files.train, &files.holdout)?
                }
                _ => {
                    let single = AuditConfig {
                        generators: cfg.generators.iter().take(1).copied().collect(),
                        ..cfg.clone()
                    };
                    run_sweep_on(&single, &prepare_pools(&single)?, "audit")?
                }
            };
            finish(&report, &cfg)?
        }
        Command::Sweep(c) => {
            let cfg = load_config(&c)?;
            let report = run_sweep_on(&cfg, &prepare_pools(&cfg)?, "sweep")?;
            finish(&report, &cfg)?
        }
        Command::Sanity(c) => {
            let cfg = load_config(&c)?;
            finish(&run_sanity_report(&cfg)?, &cfg)?
        }
        Command::ExternalAux(c) => {
            let cfg = load_config(&c)?;
            let pools = prepare_pools(&cfg)?;
            let ext = match cfg.load_files()?.and_then(|f| f.external_aux) {
                Some(d) => d,
                None if pools.process.is_some() => sample_external_aux(&cfg, cfg.n_aux)?,
                None => return Err(AuditError::Config("files.external_aux is required with file inputs".into())),
            };
            finish(&run_external_aux_on(&cfg, &pools, &ext)?, &cfg)?
        }
        Command::Gen(c) => {
            let cfg = load_config(&c)?;
            let pools = prepare_pools(&cfg)?;
            let dir = &cfg.out_dir;
            std::fs::create_dir_all(dir).map_err(|e| AuditError::Io {
                path: dir.clone(),
                source: e,
            })?;
            pools.train.schema.save_json(dir.join("schema.json"))?;
            save_dataset(&pools.train, dir.join("train.csv"))?;
            save_dataset(&pools.holdout, dir.join("holdout.csv"))?;
            if pools.process.is_some() {
                save_dataset(&sample_external_aux(&cfg, cfg.n_aux.max(1))?, dir.join("external_aux.csv"))?;
            }
            for (gi, kind) in cfg.generators.iter().enumerate() {
                let spec = GeneratorSpec {
                    kind: *kind,
                    jitter_sigma: cfg.jitter_sigma,
                    seed: derive_seed(cfg.seed, &[STAGE_GENERATOR, gi as u64]),
                };
                let synth = generate(&spec, &pools.train, cfg.n_synth_for(pools.train.len()))?;
                save_dataset(&synth, dir.join(format!("synthetic_{kind}.csv")))?;
            }
            log::info!("datasets written to {}", dir.display());
            true
        }
        Command::Report { input, out } => {
            let report = load_report(&input)?;
            emit_report(&report, &out)?;
            !report.has_failures()
        }
    };
    log::info!("finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some cells failed; see the report for details");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
