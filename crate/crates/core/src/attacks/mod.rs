//! Membership-inference attacks. Every attack is fitted on synthetic data (and
//! auxiliary real data where needed) and scores records so that higher means
//! more likely to have been in the generator's training set.

mod classifier;
mod encode;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::density::{fit_flow_with, fit_kde, mc_threshold, Density, FlowConfig, LogDensity};
use crate::distance::{DistanceKind, PointRef, PointSet};
use crate::error::{AuditError, Result};
use crate::preprocess::PcaModel;
use crate::seed::derive_seed;
use crate::util::sigmoid;

pub use classifier::{train_logan_classifier, ClassifierConfig, ClassifierModel};
pub use encode::{fit_attack_pca, DataMode, Encoder, Representation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackName {
    McTheta,
    GanleakChen,
    GanleakBreugel,
    GanleakDtw,
    GanleakCal,
    DomiasEq1,
    DomiasKde,
    DomiasBnaf,
    LoganPb,
}

impl AttackName {
    pub const ALL: [AttackName; 9] = [
        AttackName::McTheta,
        AttackName::GanleakChen,
        AttackName::GanleakBreugel,
        AttackName::GanleakDtw,
        AttackName::GanleakCal,
        AttackName::DomiasEq1,
        AttackName::DomiasKde,
        AttackName::DomiasBnaf,
        AttackName::LoganPb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackName::McTheta => "mc_theta",
            AttackName::GanleakChen => "ganleak_chen",
            AttackName::GanleakBreugel => "ganleak_breugel",
            AttackName::GanleakDtw => "ganleak_dtw",
            AttackName::GanleakCal => "ganleak_cal",
            AttackName::DomiasEq1 => "domias_eq1",
            AttackName::DomiasKde => "domias_kde",
            AttackName::DomiasBnaf => "domias_bnaf",
            AttackName::LoganPb => "logan_pb",
        }
    }

    /// Partial black-box attacks that need auxiliary real records.
    pub fn requires_aux(self) -> bool {
        matches!(
            self,
            AttackName::GanleakCal | AttackName::DomiasKde | AttackName::DomiasBnaf | AttackName::LoganPb
        )
    }

    /// Attacks scored purely from distances to synthetic records.
    pub fn is_distance_based(self) -> bool {
        matches!(
            self,
            AttackName::McTheta
                | AttackName::GanleakChen
                | AttackName::GanleakBreugel
                | AttackName::GanleakDtw
                | AttackName::GanleakCal
        )
    }

    pub fn default_uses_pca(self, mode: DataMode) -> bool {
        mode == DataMode::TimeSeries && !matches!(self, AttackName::GanleakDtw | AttackName::LoganPb)
    }

    pub fn default_distance(self) -> DistanceKind {
        if self == AttackName::GanleakDtw {
            DistanceKind::Dtw
        } else {
            DistanceKind::Euclidean
        }
    }
}

impl fmt::Display for AttackName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackName {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        AttackName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| AuditError::Config(format!("unknown attack '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub name: AttackName,
    pub uses_aux: bool,
    pub uses_pca: bool,
    pub distance: DistanceKind,
    #[serde(default)]
    pub rng_seed: u64,
}

impl AttackSpec {
    pub fn new(name: AttackName, mode: DataMode, rng_seed: u64) -> Self {
        AttackSpec {
            name,
            uses_aux: name.requires_aux(),
            uses_pca: name.default_uses_pca(mode),
            distance: name.default_distance(),
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.uses_aux != self.name.requires_aux() {
            return Err(AuditError::Config(format!(
                "{}: uses_aux must be {}",
                self.name,
                self.name.requires_aux()
            )));
        }
        if self.name == AttackName::GanleakDtw && self.distance != DistanceKind::Dtw {
            return Err(AuditError::Config("ganleak_dtw requires the dtw distance".into()));
        }
        if self.distance == DistanceKind::Dtw {
            if !self.name.is_distance_based() {
                return Err(AuditError::Config(format!("{} does not use a distance", self.name)));
            }
            if self.uses_pca {
                return Err(AuditError::Config(format!("{}: DTW cannot run on PCA projections", self.name)));
            }
        }
        Ok(())
    }
}

fn default_pca_components() -> usize {
    40
}

fn default_k() -> usize {
    5
}

fn default_true() -> bool {
    true
}

/// Hyperparameters shared by all attacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackParams {
    pub mode: DataMode,
    #[serde(default = "default_pca_components")]
    pub pca_components: usize,
    /// Neighbourhood size for the GAN-Leak minimum.
    #[serde(default = "default_k")]
    pub neighbours: usize,
    pub dtw_band: Option<usize>,
    /// Recompute the Monte-Carlo radius from the batch being scored.
    #[serde(default = "default_true")]
    pub theta_from_targets: bool,
    pub flow_epochs: usize,
    pub classifier_epochs: usize,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            mode: DataMode::TimeSeries,
            pca_components: default_pca_components(),
            neighbours: default_k(),
            dtw_band: None,
            theta_from_targets: true,
            flow_epochs: FlowConfig::default().epochs,
            classifier_epochs: ClassifierConfig::default().epochs,
        }
    }
}

/// Fraction of synthetic points within distance `theta` of `x` (closed ball).
pub fn attack_mc(x: PointRef<'_>, synthetic: &PointSet, theta: f64) -> Result<f64> {
    if synthetic.is_empty() {
        return Err(AuditError::Argument("no synthetic records".into()));
    }
    let d = synthetic.distances_from(x)?;
    Ok(d.iter().filter(|&&v| v <= theta).count() as f64 / d.len() as f64)
}

/// Negated minimum over the `k` nearest synthetic distances. That minimum is
/// the nearest distance for every `k >= 1`, so `k` never changes the score.
pub fn attack_ganleak_chen(x: PointRef<'_>, synthetic: &PointSet, _k: usize) -> Result<f64> {
    Ok(-min_distance(x, synthetic)?)
}

/// `exp(-min distance)`.
pub fn attack_ganleak_breugel(x: PointRef<'_>, synthetic: &PointSet) -> Result<f64> {
    Ok((-min_distance(x, synthetic)?).exp())
}

/// `sigmoid(-(d_synthetic - d_aux))` with the auxiliary records used directly.
pub fn attack_ganleak_cal(x: PointRef<'_>, synthetic: &PointSet, aux: &PointSet) -> Result<f64> {
    Ok(sigmoid(-(min_distance(x, synthetic)? - min_distance(x, aux)?)))
}

/// `log P_G(x)`.
pub fn attack_domias_eq1(x: &[f64], g: &impl LogDensity) -> Result<f64> {
    check_dim(x, g.dim())?;
    Ok(g.log_density(x))
}

/// `log P_G(x) - log P_R(x)`.
pub fn attack_domias_ratio(x: &[f64], g: &impl LogDensity, r: &impl LogDensity) -> Result<f64> {
    check_dim(x, g.dim())?;
    check_dim(x, r.dim())?;
    Ok(g.log_density(x) - r.log_density(x))
}

/// Classifier probability of the synthetic class.
pub fn attack_logan_pb(x: &[f64], m: &ClassifierModel) -> Result<f64> {
    check_dim(x, m.dim())?;
    Ok(m.predict(x))
}

fn check_dim(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(AuditError::Argument(format!("record has dimension {}, model expects {d}", x.len())));
    }
    Ok(())
}

fn min_distance(x: PointRef<'_>, set: &PointSet) -> Result<f64> {
    set.knn_from(x, 1)?
        .first()
        .copied()
        .ok_or_else(|| AuditError::Argument("empty reference set".into()))
}

/// Everything an attack learned at fit time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackState {
    MonteCarlo { synthetic: PointSet, theta: f64 },
    Nearest { synthetic: PointSet, neighbours: usize },
    Exponential { synthetic: PointSet },
    Calibrated { synthetic: PointSet, aux: PointSet },
    Density { g: Density },
    DensityRatio { g: Density, r: Density },
    Classifier { model: ClassifierModel },
}

/// A fitted attack, independent of any test data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedAttack {
    pub spec: AttackSpec,
    pub params: AttackParams,
    pub representation: Representation,
    pub state: AttackState,
}

/// Median over synthetic points of the distance to their nearest other synthetic point.
fn leave_one_out_theta(set: &PointSet) -> Result<f64> {
    if set.len() < 2 {
        return Ok(0.0);
    }
    let nn: Vec<f64> = (0..set.len())
        .into_par_iter()
        .map(|i| set.knn_from(set.get(i), 2).map(|v| v[1]))
        .collect::<Result<_>>()?;
    Ok(crate::util::median(&nn).expect("nonempty"))
}

/// Fits `spec` on `synthetic` (plus `aux` when required). `pca` must be given
/// exactly when the spec projects, and must come from [`fit_attack_pca`].
pub fn fit_attack(
    spec: &AttackSpec,
    params: &AttackParams,
    synthetic: &Dataset,
    aux: Option<&Dataset>,
    pca: Option<&PcaModel>,
) -> Result<FittedAttack> {
    spec.validate()?;
    if spec.distance == DistanceKind::Dtw && params.mode == DataMode::Attributes {
        return Err(AuditError::Config(format!("{} needs time series; DTW is disabled for attributes", spec.name)));
    }
    let aux = match (spec.uses_aux, aux) {
        (true, None) => return Err(AuditError::Config(format!("{} requires auxiliary data", spec.name))),
        (true, Some(a)) if a.is_empty() => return Err(AuditError::Config(format!("{}: auxiliary set is empty", spec.name))),
        (true, a) => a,
        (false, _) => None,
    };
    if spec.uses_pca != pca.is_some() {
        return Err(AuditError::Config(format!(
            "{}: PCA model must be supplied iff uses_pca is set",
            spec.name
        )));
    }
    if synthetic.is_empty() {
        return Err(AuditError::Fit("synthetic dataset is empty".into()));
    }
    let encoder = Encoder::fit(synthetic, params.mode)?;
    if let Some(p) = pca {
        if p.dim != encoder.dim() {
            return Err(AuditError::Config(format!(
                "PCA expects {} columns, representation has {}",
                p.dim,
                encoder.dim()
            )));
        }
    }
    let representation = Representation {
        encoder,
        pca: pca.cloned(),
    };
    let dtw = spec.distance == DistanceKind::Dtw;
    let points = |ds: &Dataset| representation.point_set(ds, dtw, params.dtw_band);
    let aux_ds = || aux.expect("checked above");

    let state = match spec.name {
        AttackName::McTheta => {
            let synthetic = points(synthetic)?;
            let theta = leave_one_out_theta(&synthetic)?;
            AttackState::MonteCarlo { synthetic, theta }
        }
        AttackName::GanleakChen | AttackName::GanleakDtw => AttackState::Nearest {
            synthetic: points(synthetic)?,
            neighbours: params.neighbours.max(1),
        },
        AttackName::GanleakBreugel => AttackState::Exponential {
            synthetic: points(synthetic)?,
        },
        AttackName::GanleakCal => AttackState::Calibrated {
            synthetic: points(synthetic)?,
            aux: points(aux_ds())?,
        },
        AttackName::DomiasEq1 => AttackState::Density {
            g: Density::Kde(fit_kde(representation.vectors(synthetic)?.view())?),
        },
        AttackName::DomiasKde => AttackState::DensityRatio {
            g: Density::Kde(fit_kde(representation.vectors(synthetic)?.view())?),
            r: Density::Kde(fit_kde(representation.vectors(aux_ds())?.view())?),
        },
        AttackName::DomiasBnaf => {
            let cfg = |label: u64| FlowConfig {
                epochs: params.flow_epochs,
                seed: derive_seed(spec.rng_seed, &[label]),
                ..FlowConfig::default()
            };
            AttackState::DensityRatio {
                g: Density::Flow(fit_flow_with(representation.vectors(synthetic)?.view(), &cfg(1))?),
                r: Density::Flow(fit_flow_with(representation.vectors(aux_ds())?.view(), &cfg(2))?),
            }
        }
        AttackName::LoganPb => {
            let cfg = ClassifierConfig {
                epochs: params.classifier_epochs,
                seed: spec.rng_seed,
                ..ClassifierConfig::default()
            };
            let s = representation.vectors(synthetic)?;
            let a = representation.vectors(aux_ds())?;
            AttackState::Classifier {
                model: train_logan_classifier(s.view(), a.view(), &cfg)?,
            }
        }
    };
    Ok(FittedAttack {
        spec: spec.clone(),
        params: params.clone(),
        representation,
        state,
    })
}

impl FittedAttack {
    /// Scores every record of `targets`, in order.
    pub fn score(&self, targets: &Dataset) -> Result<Vec<f64>> {
        let dtw = self.spec.distance == DistanceKind::Dtw;
        let band = self.params.dtw_band;
        let rows = |f: &(dyn Fn(&[f64]) -> Result<f64> + Sync)| -> Result<Vec<f64>> {
            let x = self.representation.vectors(targets)?;
            (0..x.nrows())
                .into_par_iter()
                .map(|i| f(x.row(i).as_slice().expect("standard layout")))
                .collect()
        };
        let each = |q: &PointSet, f: &(dyn Fn(PointRef<'_>) -> Result<f64> + Sync)| -> Result<Vec<f64>> {
            (0..q.len()).into_par_iter().map(|i| f(q.get(i))).collect()
        };
        match &self.state {
            AttackState::MonteCarlo { synthetic, theta } => {
                let q = self.representation.point_set(targets, dtw, band)?;
                let theta = if self.params.theta_from_targets {
                    mc_threshold(&q, synthetic)?
                } else {
                    *theta
                };
                each(&q, &|x| attack_mc(x, synthetic, theta))
            }
            AttackState::Nearest { synthetic, neighbours } => {
                let q = self.representation.point_set(targets, dtw, band)?;
                each(&q, &|x| attack_ganleak_chen(x, synthetic, *neighbours))
            }
            AttackState::Exponential { synthetic } => {
                let q = self.representation.point_set(targets, dtw, band)?;
                each(&q, &|x| attack_ganleak_breugel(x, synthetic))
            }
            AttackState::Calibrated { synthetic, aux } => {
                let q = self.representation.point_set(targets, dtw, band)?;
                each(&q, &|x| attack_ganleak_cal(x, synthetic, aux))
            }
            AttackState::Density { g } => rows(&|x| attack_domias_eq1(x, g)),
            AttackState::DensityRatio { g, r } => rows(&|x| attack_domias_ratio(x, g, r)),
            AttackState::Classifier { model } => rows(&|x| attack_logan_pb(x, model)),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Restores a fitted attack, rebuilding search caches.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut fa: FittedAttack = serde_json::from_str(text)?;
        match &mut fa.state {
            AttackState::MonteCarlo { synthetic, .. }
            | AttackState::Nearest { synthetic, .. }
            | AttackState::Exponential { synthetic } => synthetic.prepare(),
            AttackState::Calibrated { synthetic, aux } => {
                synthetic.prepare();
                aux.prepare();
            }
            _ => {}
        }
        Ok(fa)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn pts(v: &[f64]) -> PointSet {
        PointSet::Vectors(Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap())
    }

    #[test]
    fn mc_examples() {
        let s = pts(&[-2.0, -0.5, 0.5, 3.0]);
        assert_eq!(attack_mc(PointRef::Vector(&[0.0]), &s, 1.0).unwrap(), 0.5);
        assert_eq!(attack_mc(PointRef::Vector(&[0.0]), &s, 10.0).unwrap(), 1.0);
        assert_eq!(attack_mc(PointRef::Vector(&[100.0]), &s, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn ganleak_examples() {
        let s = pts(&[1.0, 2.0, 3.0]);
        assert_eq!(attack_ganleak_chen(PointRef::Vector(&[0.0]), &s, 5).unwrap(), -1.0);
        assert_eq!(attack_ganleak_chen(PointRef::Vector(&[2.0]), &s, 5).unwrap(), 0.0);
        assert_eq!(attack_ganleak_breugel(PointRef::Vector(&[2.0]), &s).unwrap(), 1.0);
        let b = attack_ganleak_breugel(PointRef::Vector(&[0.0]), &s).unwrap();
        assert!((b - (-1f64).exp()).abs() < 1e-15);
        let cal = attack_ganleak_cal(PointRef::Vector(&[0.0]), &pts(&[1.0]), &pts(&[3.0])).unwrap();
        assert!((cal - 0.880_797_077_977_882_3).abs() < 1e-12);
        let even = attack_ganleak_cal(PointRef::Vector(&[0.0]), &pts(&[1.0]), &pts(&[-1.0])).unwrap();
        assert_eq!(even, 0.5);
    }

    #[test]
    fn spec_defaults_and_validation() {
        for name in AttackName::ALL {
            let spec = AttackSpec::new(name, DataMode::TimeSeries, 0);
            spec.validate().unwrap();
            assert_eq!(spec.uses_aux, name.requires_aux());
            assert_eq!(name.as_str().parse::<AttackName>().unwrap(), name);
        }
        let mut bad = AttackSpec::new(AttackName::DomiasKde, DataMode::TimeSeries, 0);
        bad.uses_aux = false;
        assert!(matches!(bad.validate(), Err(AuditError::Config(_))));
        let mut bad = AttackSpec::new(AttackName::GanleakDtw, DataMode::TimeSeries, 0);
        bad.uses_pca = true;
        assert!(bad.validate().is_err());
        assert!("nope".parse::<AttackName>().is_err());
        assert!(!AttackSpec::new(AttackName::McTheta, DataMode::Attributes, 0).uses_pca);
    }
}
