use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacks::{AttackName, AttackParams, DataMode};
use crate::dataset::{load_dataset, Dataset, FeatureSchema, Split};
use crate::error::{AuditError, Result};
use crate::metrics::OverfitNorm;
use crate::refgen::{GeneratorKind, ProcessSpec};

/// Parameters of the built-in reference process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    pub time_points: usize,
    pub grid_step_minutes: u32,
    pub level_correlation: f64,
    pub attributes: bool,
    /// Mean offset of the generated external auxiliary set, in marginal
    /// standard deviations per feature.
    pub external_shift_sd: f64,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig {
            time_points: 48,
            grid_step_minutes: 60,
            level_correlation: 0.3,
            attributes: false,
            external_shift_sd: 0.0,
        }
    }
}

impl ProcessConfig {
    pub fn spec(&self, seed: u64) -> ProcessSpec {
        let mut spec = ProcessSpec::icu(self.time_points, self.grid_step_minutes, seed);
        spec.level_correlation = self.level_correlation;
        spec.attributes = self.attributes;
        spec
    }
}

/// Preprocessed CSV inputs, used instead of the reference process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileInputs {
    pub schema: PathBuf,
    pub train: PathBuf,
    pub holdout: PathBuf,
    #[serde(default)]
    pub synthetic: Option<PathBuf>,
    #[serde(default)]
    pub external_aux: Option<PathBuf>,
}

fn default_seed() -> u64 {
    2024
}

fn default_out() -> PathBuf {
    PathBuf::from("audit-out")
}

fn default_sizes() -> Vec<usize> {
    vec![50, 100, 250, 500, 1000, 2000]
}

fn default_attacks() -> Vec<AttackName> {
    AttackName::ALL.to_vec()
}

fn default_generators() -> Vec<GeneratorKind> {
    GeneratorKind::ALL.to_vec()
}

fn default_n_aux() -> usize {
    500
}

fn default_bootstrap() -> usize {
    100
}

fn default_n_synth_max() -> usize {
    2000
}

fn default_n_synth_factor() -> usize {
    4
}

fn default_jitter() -> f64 {
    0.02
}

fn default_fractions() -> Vec<f64> {
    vec![1.0, 0.8]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackName>,
    #[serde(default = "default_generators")]
    pub generators: Vec<GeneratorKind>,
    #[serde(default = "default_n_aux")]
    pub n_aux: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Fixed synthetic size; when absent `min(n_synth_max, n_synth_factor * N)`.
    #[serde(default)]
    pub n_synth: Option<usize>,
    #[serde(default = "default_n_synth_max")]
    pub n_synth_max: usize,
    #[serde(default = "default_n_synth_factor")]
    pub n_synth_factor: usize,
    #[serde(default = "default_jitter")]
    pub jitter_sigma: f64,
    #[serde(default)]
    pub overfit_norm: OverfitNorm,
    #[serde(default = "default_fractions")]
    pub sanity_fractions: Vec<f64>,
    #[serde(default)]
    pub attack: AttackParams,
    #[serde(default)]
    pub process: ProcessConfig,
    #[serde(default)]
    pub files: Option<FileInputs>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl AuditConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AuditConfig = toml::from_str(text).map_err(|e| AuditError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(files) = &mut cfg.files {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [&mut files.schema, &mut files.train, &mut files.holdout]
                .into_iter()
                .chain(files.synthetic.as_mut())
                .chain(files.external_aux.as_mut())
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AuditError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AuditError::Config(m.to_string()));
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("sizes must be a nonempty list of positive training sizes");
        }
        if self.attacks.is_empty() {
            return bad("attack roster is empty");
        }
        if self.bootstrap == 0 {
            return bad("bootstrap must be at least 1");
        }
        if self.n_aux == 0 && self.attacks.iter().any(|a| a.requires_aux()) {
            return bad("n_aux must be positive when auxiliary attacks are configured");
        }
        if self.files.as_ref().is_none_or(|f| f.synthetic.is_none()) && self.generators.is_empty() {
            return bad("no generators configured");
        }
        if self.n_synth == Some(0) || self.n_synth_max == 0 || self.n_synth_factor == 0 {
            return bad("synthetic sizes must be positive");
        }
        if self.generators.contains(&GeneratorKind::Jitter) && !(self.jitter_sigma > 0.0 && self.jitter_sigma.is_finite()) {
            return bad("jitter_sigma must be positive");
        }
        if self.sanity_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return bad("sanity fractions must lie in (0, 1]");
        }
        if self.attack.pca_components == 0 {
            return bad("pca_components must be positive");
        }
        if self.attack.mode == DataMode::Attributes && self.files.is_none() && !self.process.attributes {
            return bad("attribute mode needs process.attributes = true");
        }
        if self.files.is_none() {
            self.process.spec(0).validate()?;
        }
        Ok(())
    }

    pub fn max_size(&self) -> usize {
        self.sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn n_synth_for(&self, n_train: usize) -> usize {
        self.n_synth.unwrap_or_else(|| self.n_synth_max.min(self.n_synth_factor * n_train))
    }

    /// Attacks runnable in the configured data mode.
    pub fn roster(&self) -> Vec<AttackName> {
        self.attacks
            .iter()
            .copied()
            .filter(|a| {
                let ok = !(self.attack.mode == DataMode::Attributes && *a == AttackName::GanleakDtw);
                if !ok {
                    log::warn!("{a} skipped: DTW is disabled for attribute data");
                }
                ok
            })
            .collect()
    }

    /// Loads the schema and CSV inputs named in `files`.
    pub fn load_files(&self) -> Result<Option<LoadedFiles>> {
        let Some(f) = &self.files else { return Ok(None) };
        let schema = FeatureSchema::load_json(&f.schema)?;
        let train = load_dataset(&f.train, &schema, Split::Train)?;
        let holdout = load_dataset(&f.holdout, &schema, Split::Holdout)?;
        let synthetic = f
            .synthetic
            .as_ref()
            .map(|p| load_dataset(p, &schema, Split::Synthetic))
            .transpose()?;
        let external_aux = f
            .external_aux
            .as_ref()
            .map(|p| load_dataset(p, &schema, Split::Aux))
            .transpose()?;
        Ok(Some(LoadedFiles {
            train,
            holdout,
            synthetic,
            external_aux,
        }))
    }
}

pub struct LoadedFiles {
    pub train: Dataset,
    pub holdout: Dataset,
    pub synthetic: Option<Dataset>,
    pub external_aux: Option<Dataset>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = AuditConfig::default();
        assert_eq!(c.seed, 2024);
        assert_eq!(c.sizes, vec![50, 100, 250, 500, 1000, 2000]);
        assert_eq!(c.attacks.len(), 9);
        assert_eq!(c.generators.len(), 4);
        assert_eq!(c.bootstrap, 100);
        assert_eq!(c.n_synth_for(50), 200);
        assert_eq!(c.n_synth_for(2000), 2000);
        assert_eq!(c.process.time_points, 48);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_errors() {
        let c = AuditConfig::from_toml("seed = 7\nsizes = [10, 20]\nattacks = [\"mc_theta\"]\n[attack]\nflow_epochs = 5\n").unwrap();
        assert_eq!((c.seed, c.attack.flow_epochs, c.attack.pca_components), (7, 5, 40));
        let back = AuditConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(matches!(AuditConfig::from_toml("sizes = []"), Err(AuditError::Config(_))));
        assert!(AuditConfig::from_toml("bogus = 1").is_err());
        assert!(AuditConfig::from_toml("attacks = [\"nope\"]").is_err());
    }
}
