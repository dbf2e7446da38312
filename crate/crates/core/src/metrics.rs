//! Attack metrics with bootstrap estimates, and the NRMSE overfitting gap.

use ndarray::ArrayView2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{AuditError, Result};
use crate::util::{mean, sample_std};

/// One scored test record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub record_id: String,
    pub member: bool,
    pub score: f64,
    pub predicted: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub entries: Vec<LabeledEntry>,
}

impl LabeledScores {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_members(&self) -> usize {
        self.entries.iter().filter(|e| e.member).count()
    }

    fn obs(&self) -> Vec<Obs> {
        self.entries.iter().map(Obs::from).collect()
    }
}

/// Id-free view used by the metric kernels and the bootstrap.
#[derive(Clone, Copy, Debug)]
struct Obs {
    member: bool,
    score: f64,
    predicted: bool,
}

impl From<&LabeledEntry> for Obs {
    fn from(e: &LabeledEntry) -> Self {
        Obs {
            member: e.member,
            score: e.score,
            predicted: e.predicted,
        }
    }
}

/// Median of `scores` (mean of the central pair for even counts) and the
/// labels `score > median`.
pub fn median_threshold(scores: &[f64]) -> Result<(f64, Vec<bool>)> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(AuditError::Argument("scores contain NaN".into()));
    }
    let tau = crate::util::median(scores).ok_or_else(|| AuditError::Argument("no scores to threshold".into()))?;
    Ok((tau, scores.iter().map(|&s| s > tau).collect()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Tied member/nonmember pairs count one half.
    #[default]
    Half,
    /// Only strictly ordered pairs count.
    Strict,
}

fn check_classes(obs: &[Obs]) -> Result<(usize, usize)> {
    let pos = obs.iter().filter(|o| o.member).count();
    let neg = obs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(AuditError::Argument(format!(
            "both classes required, got {pos} members and {neg} nonmembers"
        )));
    }
    Ok((pos, neg))
}

fn accuracy_obs(obs: &[Obs]) -> Result<f64> {
    if obs.is_empty() {
        return Err(AuditError::Argument("accuracy of an empty score set".into()));
    }
    Ok(obs.iter().filter(|o| o.member == o.predicted).count() as f64 / obs.len() as f64)
}

fn tpr_fpr_obs(obs: &[Obs]) -> Result<(f64, f64)> {
    let (pos, neg) = check_classes(obs)?;
    let tp = obs.iter().filter(|o| o.member && o.predicted).count();
    let fp = obs.iter().filter(|o| !o.member && o.predicted).count();
    Ok((tp as f64 / pos as f64, fp as f64 / neg as f64))
}

/// Sort-based Mann-Whitney count; exact because it works on integer pair counts.
fn auroc_obs(obs: &[Obs], mode: TieMode) -> Result<f64> {
    let (pos, neg) = check_classes(obs)?;
    if obs.iter().any(|o| o.score.is_nan()) {
        return Err(AuditError::Argument("scores contain NaN".into()));
    }
    let mut sorted: Vec<(f64, bool)> = obs.iter().map(|o| (o.score, o.member)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut correct, mut ties, mut neg_below) = (0u128, 0u128, 0u128);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        correct += p * neg_below;
        ties += p * n;
        neg_below += n;
        i = j;
    }
    let pairs = pos as u128 * neg as u128;
    Ok(match mode {
        TieMode::Half => (2 * correct + ties) as f64 / (2 * pairs) as f64,
        TieMode::Strict => correct as f64 / pairs as f64,
    })
}

pub fn accuracy(ls: &LabeledScores) -> Result<f64> {
    accuracy_obs(&ls.obs())
}

pub fn tpr_fpr(ls: &LabeledScores) -> Result<(f64, f64)> {
    tpr_fpr_obs(&ls.obs())
}

/// Tie-corrected AUROC.
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    auroc_obs(&ls.obs(), TieMode::Half)
}

pub fn auroc_with(ls: &LabeledScores, mode: TieMode) -> Result<f64> {
    auroc_obs(&ls.obs(), mode)
}

/// AUROC from separate member and nonmember score lists.
pub fn auroc_scores(members: &[f64], nonmembers: &[f64], mode: TieMode) -> Result<f64> {
    let obs: Vec<Obs> = members
        .iter()
        .map(|&s| (s, true))
        .chain(nonmembers.iter().map(|&s| (s, false)))
        .map(|(score, member)| Obs {
            member,
            score,
            predicted: false,
        })
        .collect();
    auroc_obs(&obs, mode)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Auroc,
    Accuracy,
    Tpr,
    Fpr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Auroc, MetricKind::Accuracy, MetricKind::Tpr, MetricKind::Fpr];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Auroc => "auroc",
            MetricKind::Accuracy => "accuracy",
            MetricKind::Tpr => "tpr",
            MetricKind::Fpr => "fpr",
        }
    }

    fn eval(self, obs: &[Obs]) -> Result<f64> {
        match self {
            MetricKind::Auroc => auroc_obs(obs, TieMode::Half),
            MetricKind::Accuracy => accuracy_obs(obs),
            MetricKind::Tpr => tpr_fpr_obs(obs).map(|r| r.0),
            MetricKind::Fpr => tpr_fpr_obs(obs).map(|r| r.1),
        }
    }

    pub fn evaluate(self, ls: &LabeledScores) -> Result<f64> {
        self.eval(&ls.obs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub name: String,
    pub point: f64,
    pub boot_mean: f64,
    pub boot_stderr: f64,
    pub replicates: usize,
}

impl MetricEstimate {
    fn from_replicates(name: &str, point: f64, values: &[f64]) -> Self {
        if values.iter().all(|v| *v == values[0]) {
            return MetricEstimate {
                name: name.to_string(),
                point,
                boot_mean: values[0],
                boot_stderr: 0.0,
                replicates: values.len(),
            };
        }
        MetricEstimate {
            name: name.to_string(),
            point,
            boot_mean: mean(values),
            boot_stderr: if values.len() > 1 { sample_std(values) } else { 0.0 },
            replicates: values.len(),
        }
    }
}

const MAX_REDRAWS: usize = 100;

/// Draws `k` resamples of `n` indices; replicates that lose a class are redrawn.
fn resample_indices(obs: &[Obs], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(AuditError::Argument("bootstrap needs K >= 1".into()));
    }
    check_classes(obs)?;
    let n = obs.len();
    let mut rng = crate::seed::rng_from(seed);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut attempts = 0;
        loop {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let members = idx.iter().filter(|&&i| obs[i].member).count();
            if members > 0 && members < n {
                out.push(idx);
                break;
            }
            attempts += 1;
            if attempts >= MAX_REDRAWS {
                return Err(AuditError::Estimation(format!(
                    "{MAX_REDRAWS} consecutive single-class bootstrap replicates"
                )));
            }
        }
    }
    Ok(out)
}

/// Bootstrap of an arbitrary metric over resampled entries.
pub fn bootstrap<M>(ls: &LabeledScores, name: &str, metric: M, k: usize, seed: u64) -> Result<MetricEstimate>
where
    M: Fn(&LabeledScores) -> Result<f64>,
{
    let point = metric(ls)?;
    let idx = resample_indices(&ls.obs(), k, seed)?;
    let values = idx
        .iter()
        .map(|ix| {
            metric(&LabeledScores {
                entries: ix.iter().map(|&i| ls.entries[i].clone()).collect(),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MetricEstimate::from_replicates(name, point, &values))
}

/// Bootstrap of several built-in metrics sharing the same resamples.
pub fn bootstrap_metrics(ls: &LabeledScores, kinds: &[MetricKind], k: usize, seed: u64) -> Result<Vec<MetricEstimate>> {
    let obs = ls.obs();
    let idx = resample_indices(&obs, k, seed)?;
    let mut values = vec![Vec::with_capacity(k); kinds.len()];
    let mut buf = Vec::with_capacity(obs.len());
    for ix in &idx {
        buf.clear();
        buf.extend(ix.iter().map(|&i| obs[i]));
        for (vals, kind) in values.iter_mut().zip(kinds) {
            vals.push(kind.eval(&buf)?);
        }
    }
    kinds
        .iter()
        .zip(&values)
        .map(|(kind, vals)| Ok(MetricEstimate::from_replicates(kind.as_str(), kind.eval(&obs)?, vals)))
        .collect()
}

/// `(1/F) * sum_f sqrt(mean_t (a - b)^2) / norm_f` over `F x T` matrices.
pub fn nrmse_pair(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, norm: &[f64]) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(AuditError::Argument(format!("shape mismatch {:?} vs {:?}", a.dim(), b.dim())));
    }
    if norm.len() != a.nrows() {
        return Err(AuditError::Argument("norm length differs from feature count".into()));
    }
    if let Some(f) = norm.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(AuditError::Argument(format!("norm for feature {f} is not positive")));
    }
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(AuditError::Argument("empty series".into()));
    }
    Ok(nrmse_unchecked(a, b, norm))
}

fn nrmse_unchecked(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, norm: &[f64]) -> f64 {
    let t = a.ncols() as f64;
    let total: f64 = a
        .rows()
        .into_iter()
        .zip(b.rows())
        .zip(norm)
        .map(|((ra, rb), n)| {
            let ss: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
            (ss / t).sqrt() / n
        })
        .sum();
    total / a.nrows() as f64
}

/// Per-feature `max - min` over every record and time point of the given sets.
pub fn feature_ranges(sets: &[&Dataset]) -> Result<Vec<f64>> {
    let first = sets.first().ok_or_else(|| AuditError::Argument("no datasets".into()))?;
    let f = first.schema.n_features();
    if sets.iter().any(|d| d.schema != first.schema) {
        return Err(AuditError::Schema("datasets do not share a schema".into()));
    }
    let mut lo = vec![f64::INFINITY; f];
    let mut hi = vec![f64::NEG_INFINITY; f];
    for rec in sets.iter().flat_map(|d| &d.records) {
        for (k, row) in rec.timeseries.rows().into_iter().enumerate() {
            for &v in row {
                if v.is_nan() {
                    return Err(AuditError::Argument(format!("record {} has missing values", rec.record_id)));
                }
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
    }
    let ranges: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| h - l).collect();
    if let Some(k) = ranges.iter().position(|r| !(*r > 0.0)) {
        return Err(AuditError::Argument(format!(
            "feature '{}' is constant, so its range is zero",
            first.schema.features[k].name
        )));
    }
    Ok(ranges)
}

/// For each record of `d1`, its minimum NRMSE to any record of `d2`.
pub fn nrmse_min_per_record(d1: &Dataset, d2: &Dataset, norm: &[f64]) -> Result<Vec<f64>> {
    if d1.is_empty() || d2.is_empty() {
        return Err(AuditError::Argument("nrmse_min needs two nonempty datasets".into()));
    }
    if d1.schema != d2.schema {
        return Err(AuditError::Schema("datasets do not share a schema".into()));
    }
    if norm.len() != d1.schema.n_features() || norm.iter().any(|v| !(*v > 0.0)) {
        return Err(AuditError::Argument("norm must be positive per feature".into()));
    }
    Ok(d1
        .records
        .par_iter()
        .map(|r1| {
            d2.records
                .iter()
                .map(|r2| nrmse_unchecked(r1.timeseries.view(), r2.timeseries.view(), norm))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

/// Mean over `d1` of the minimal NRMSE to `d2`, normalised by ranges over `d1 ∪ d2`.
pub fn nrmse_min(d1: &Dataset, d2: &Dataset) -> Result<f64> {
    let norm = feature_ranges(&[d1, d2])?;
    Ok(mean(&nrmse_min_per_record(d1, d2, &norm)?))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverfitNorm {
    /// Each term normalised over its own pair of datasets.
    #[default]
    PerTerm,
    /// One normalisation over synthetic, train and holdout together.
    Shared,
}

/// Per-record minima behind both terms of the overfit score.
#[derive(Clone, Debug, PartialEq)]
pub struct OverfitTerms {
    pub holdout_minima: Vec<f64>,
    pub train_minima: Vec<f64>,
}

impl OverfitTerms {
    pub fn score(&self) -> f64 {
        mean(&self.holdout_minima) - mean(&self.train_minima)
    }
}

pub fn overfit_terms(synth: &Dataset, train: &Dataset, holdout: &Dataset, mode: OverfitNorm) -> Result<OverfitTerms> {
    let (norm_h, norm_t) = match mode {
        OverfitNorm::PerTerm => (feature_ranges(&[holdout, synth])?, feature_ranges(&[train, synth])?),
        OverfitNorm::Shared => {
            let n = feature_ranges(&[synth, train, holdout])?;
            (n.clone(), n)
        }
    };
    Ok(OverfitTerms {
        holdout_minima: nrmse_min_per_record(holdout, synth, &norm_h)?,
        train_minima: nrmse_min_per_record(train, synth, &norm_t)?,
    })
}

/// `nrmse_min(holdout, synth) - nrmse_min(train, synth)`.
pub fn overfit_score(synth: &Dataset, train: &Dataset, holdout: &Dataset, mode: OverfitNorm) -> Result<f64> {
    Ok(overfit_terms(synth, train, holdout, mode)?.score())
}

/// Bootstrap of the overfit score, resampling each term's records independently.
pub fn bootstrap_overfit(terms: &OverfitTerms, k: usize, seed: u64) -> Result<MetricEstimate> {
    if k == 0 {
        return Err(AuditError::Argument("bootstrap needs K >= 1".into()));
    }
    let mut rng = crate::seed::rng_from(seed);
    let draw = |v: &[f64], rng: &mut rand_chacha::ChaCha8Rng| {
        (0..v.len()).map(|_| v[rng.random_range(0..v.len())]).sum::<f64>() / v.len() as f64
    };
    let values: Vec<f64> = (0..k)
        .map(|_| {
            let h = draw(&terms.holdout_minima, &mut rng);
            h - draw(&terms.train_minima, &mut rng)
        })
        .collect();
    Ok(MetricEstimate::from_replicates("overfit", terms.score(), &values))
}
