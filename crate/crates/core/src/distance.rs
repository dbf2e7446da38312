//! Distance kernels: Euclidean distance on vectors and multivariate dynamic
//! time warping on `F x T` series.
//!
//! Nearest-neighbour queries over DTW use lower bounds (endpoint cells and
//! per-feature bounding boxes) plus early abandoning; results are identical
//! to an exhaustive scan.

use std::collections::BinaryHeap;

use ndarray::{Array2, ArrayView2};
use ordered::OrdF64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    #[default]
    Euclidean,
    Dtw,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(AuditError::Argument(format!(
            "euclidean: lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    Ok(squared_euclidean(a, b).sqrt())
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// A multivariate series stored feature-major (`F` rows of `len` samples).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    n_features: usize,
    len: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn new(n_features: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if n_features == 0 || len == 0 {
            return Err(AuditError::Argument("series must be nonempty".into()));
        }
        if data.len() != n_features * len {
            return Err(AuditError::Argument(format!(
                "series data has {} values, expected {} x {}",
                data.len(),
                n_features,
                len
            )));
        }
        Ok(Self { n_features, len, data })
    }

    pub fn from_matrix(m: ArrayView2<'_, f64>) -> Result<Self> {
        let (f, t) = m.dim();
        Self::new(f, t, m.iter().copied().collect())
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn row(&self, f: usize) -> &[f64] {
        &self.data[f * self.len..(f + 1) * self.len]
    }

    #[inline]
    fn at(&self, f: usize, t: usize) -> f64 {
        self.data[f * self.len + t]
    }

    fn column_distance(&self, i: usize, other: &Series, j: usize) -> f64 {
        let mut acc = 0.0;
        for f in 0..self.n_features {
            let d = self.at(f, i) - other.at(f, j);
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Cost of the lockstep alignment, summed in the same order as the DP.
    fn diagonal_cost(&self, other: &Series) -> f64 {
        (0..self.len).fold(0.0, |acc, t| self.column_distance(t, other, t) + acc)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        (0..self.n_features)
            .map(|f| {
                let r = self.row(f);
                (
                    r.iter().copied().fold(f64::INFINITY, f64::min),
                    r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            })
            .unzip()
    }
}

/// Unconstrained multivariate DTW (symmetric1 step pattern, Euclidean local cost).
pub fn dtw(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    dtw_banded(a, b, None)
}

/// DTW restricted to `|i - j| <= max(band, |Ta - Tb|)` when `band` is set.
pub fn dtw_banded(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, band: Option<usize>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(AuditError::Argument(format!(
            "dtw: feature counts differ ({} vs {})",
            a.nrows(),
            b.nrows()
        )));
    }
    let (sa, sb) = (Series::from_matrix(a)?, Series::from_matrix(b)?);
    Ok(dtw_series(&sa, &sb, band, f64::INFINITY, &mut DtwScratch::default()))
}

#[derive(Default)]
struct DtwScratch {
    prev: Vec<f64>,
    curr: Vec<f64>,
    cost: Vec<f64>,
    /// `rest[i]`: lower bound on the cost still to pay after row `i`.
    rest: Vec<f64>,
}

/// Returns the DTW cost, or `INFINITY` once every partial path plus the
/// remaining-row bound in `s.rest` exceeds `cutoff`. `s.rest` must hold `a.len`
/// entries when `cutoff` is finite.
fn dtw_series(a: &Series, b: &Series, band: Option<usize>, cutoff: f64, s: &mut DtwScratch) -> f64 {
    let (ta, tb) = (a.len, b.len);
    if cutoff.is_infinite() {
        s.rest.clear();
        s.rest.resize(ta, 0.0);
    }
    let cutoff = cutoff * (1.0 + 1e-9);
    let radius = band.map(|r| r.max(ta.abs_diff(tb)));
    s.prev.clear();
    s.prev.resize(tb, f64::INFINITY);
    s.curr.clear();
    s.curr.resize(tb, f64::INFINITY);
    s.cost.resize(tb, 0.0);

    for i in 0..ta {
        let (lo, hi) = match radius {
            Some(r) => (i.saturating_sub(r), (i + r + 1).min(tb)),
            None => (0, tb),
        };
        let cost = &mut s.cost[lo..hi];
        cost.iter_mut().for_each(|c| *c = 0.0);
        for f in 0..a.n_features {
            let x = a.at(f, i);
            for (c, y) in cost.iter_mut().zip(&b.row(f)[lo..hi]) {
                let d = x - y;
                *c += d * d;
            }
        }
        cost.iter_mut().for_each(|c| *c = c.sqrt());

        let curr = &mut s.curr;
        let prev = &s.prev;
        if let Some(r) = radius {
            // Cells outside this row's window must read as unreachable next row.
            let prev_lo = i.saturating_sub(r + 1);
            for v in &mut curr[prev_lo..lo] {
                *v = f64::INFINITY;
            }
            if hi < tb {
                curr[hi] = f64::INFINITY;
            }
        }
        // Row -1 is unreachable except for a virtual origin diagonal to (0, 0).
        let mut diag = match (i, lo) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            _ => prev[lo - 1],
        };
        let mut left = f64::INFINITY;
        let mut row_min = f64::INFINITY;
        for ((c, &up), out) in s.cost[lo..hi].iter().zip(&prev[lo..hi]).zip(&mut curr[lo..hi]) {
            let v = c + diag.min(up).min(left);
            diag = up;
            left = v;
            *out = v;
            row_min = row_min.min(v);
        }
        if row_min + s.rest[i] > cutoff {
            return f64::INFINITY;
        }
        std::mem::swap(&mut s.prev, &mut s.curr);
    }
    s.prev[tb - 1]
}

mod ordered {
    /// Total order wrapper for heap use.
    #[derive(Clone, Copy, Debug, PartialEq)]
    pub struct OrdF64(pub f64);
    impl Eq for OrdF64 {}
    impl PartialOrd for OrdF64 {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for OrdF64 {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}

/// A collection of series with cached bounding boxes for pruned DTW search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    series: Vec<Series>,
    band: Option<usize>,
    #[serde(skip)]
    boxes: Vec<(Vec<f64>, Vec<f64>)>,
}

impl SeriesSet {
    pub fn new(series: Vec<Series>, band: Option<usize>) -> Result<Self> {
        if let Some(first) = series.first() {
            if series.iter().any(|s| s.n_features != first.n_features) {
                return Err(AuditError::Argument("series in a set must share F".into()));
            }
        }
        let boxes = series.iter().map(Series::bounding_box).collect();
        Ok(Self { series, band, boxes })
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn band(&self) -> Option<usize> {
        self.band
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    fn ensure_boxes(&mut self) {
        if self.boxes.len() != self.series.len() {
            self.boxes = self.series.iter().map(Series::bounding_box).collect();
        }
    }

    fn lower_bound(&self, q: &Series, q_box: &(Vec<f64>, Vec<f64>), j: usize) -> f64 {
        let c = &self.series[j];
        let mut kim = q.column_distance(0, c, 0);
        if q.len > 1 || c.len > 1 {
            kim += q.column_distance(q.len - 1, c, c.len - 1);
        }
        let to_box = |s: &Series, bx: &(Vec<f64>, Vec<f64>)| -> f64 {
            (0..s.len)
                .map(|t| {
                    let mut acc = 0.0;
                    for f in 0..s.n_features {
                        let v = s.at(f, t);
                        let e = (bx.0[f] - v).max(v - bx.1[f]).max(0.0);
                        acc += e * e;
                    }
                    acc.sqrt()
                })
                .sum()
        };
        kim.max(to_box(q, &self.boxes[j])).max(to_box(c, q_box))
    }

    /// Suffix sums of each later query column's distance to candidate `j`'s box;
    /// every warping path visits each of those columns at least once.
    fn fill_rest(&self, q: &Series, j: usize, rest: &mut Vec<f64>) {
        let bx = &self.boxes[j];
        rest.clear();
        rest.resize(q.len, 0.0);
        let mut acc = 0.0;
        for t in (1..q.len).rev() {
            let mut e2 = 0.0;
            for f in 0..q.n_features {
                let v = q.at(f, t);
                let e = (bx.0[f] - v).max(v - bx.1[f]).max(0.0);
                e2 += e * e;
            }
            acc += e2.sqrt();
            rest[t - 1] = acc;
        }
    }

    /// The `k` smallest DTW distances from `q` to members of the set, ascending.
    pub fn knn(&self, q: &Series, k: usize) -> Vec<f64> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let q_box = q.bounding_box();
        let mut order: Vec<(f64, usize)> = (0..self.len()).map(|j| (self.lower_bound(q, &q_box, j), j)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        // The diagonal path bounds DTW from above, so the k-th smallest diagonal
        // cost caps the k-th nearest distance before any DP runs.
        let mut bound = if self.series.iter().all(|c| c.len == q.len) {
            let mut diag: Vec<f64> = self.series.iter().map(|c| q.diagonal_cost(c)).collect();
            diag.select_nth_unstable_by(k - 1, f64::total_cmp);
            diag[k - 1]
        } else {
            f64::INFINITY
        };
        let mut heap: BinaryHeap<OrdF64> = BinaryHeap::with_capacity(k + 1);
        let mut scratch = DtwScratch::default();
        for (lb, j) in order {
            if lb > bound * (1.0 + 1e-12) {
                break;
            }
            if bound.is_finite() {
                self.fill_rest(q, j, &mut scratch.rest);
            }
            let d = dtw_series(q, &self.series[j], self.band, bound, &mut scratch);
            if d.is_finite() && (heap.len() < k || d < heap.peek().expect("nonempty").0) {
                heap.push(OrdF64(d));
                if heap.len() > k {
                    heap.pop();
                }
                if heap.len() == k {
                    bound = bound.min(heap.peek().expect("nonempty").0);
                }
            }
        }
        let mut out: Vec<f64> = heap.into_iter().map(|v| v.0).collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// A reference set of points under one distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PointSet {
    Vectors(Array2<f64>),
    Series(SeriesSet),
}

#[derive(Clone, Copy, Debug)]
pub enum PointRef<'a> {
    Vector(&'a [f64]),
    Series(&'a Series),
}

impl PointSet {
    pub fn len(&self) -> usize {
        match self {
            PointSet::Vectors(m) => m.nrows(),
            PointSet::Series(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> DistanceKind {
        match self {
            PointSet::Vectors(_) => DistanceKind::Euclidean,
            PointSet::Series(_) => DistanceKind::Dtw,
        }
    }

    pub fn get(&self, i: usize) -> PointRef<'_> {
        match self {
            PointSet::Vectors(m) => PointRef::Vector(m.row(i).to_slice().expect("standard layout")),
            PointSet::Series(s) => PointRef::Series(&s.series[i]),
        }
    }

    /// Rebuilds caches that are not serialized.
    pub fn prepare(&mut self) {
        if let PointSet::Series(s) = self {
            s.ensure_boxes();
        }
    }

    fn check(&self, x: PointRef<'_>) -> Result<()> {
        match (self, x) {
            (PointSet::Vectors(m), PointRef::Vector(v)) if v.len() == m.ncols() => Ok(()),
            (PointSet::Series(s), PointRef::Series(q)) => match s.series.first() {
                Some(first) if first.n_features != q.n_features => {
                    Err(AuditError::Argument("query and reference series differ in F".into()))
                }
                _ => Ok(()),
            },
            _ => Err(AuditError::Argument("query does not match the point set's representation".into())),
        }
    }

    /// Distances from `x` to every point, in set order.
    pub fn distances_from(&self, x: PointRef<'_>) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(match (self, x) {
            (PointSet::Vectors(m), PointRef::Vector(v)) => m
                .outer_iter()
                .map(|row| squared_euclidean(row.as_slice().expect("standard layout"), v).sqrt())
                .collect(),
            (PointSet::Series(s), PointRef::Series(q)) => {
                let mut scratch = DtwScratch::default();
                s.series
                    .iter()
                    .map(|c| dtw_series(q, c, s.band, f64::INFINITY, &mut scratch))
                    .collect()
            }
            _ => unreachable!(),
        })
    }

    /// The `min(k, len)` smallest distances from `x`, ascending.
    pub fn knn_from(&self, x: PointRef<'_>, k: usize) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(match (self, x) {
            (PointSet::Vectors(m), PointRef::Vector(v)) => {
                let k = k.min(m.nrows());
                let mut d2: Vec<f64> = m
                    .outer_iter()
                    .map(|row| squared_euclidean(row.as_slice().expect("standard layout"), v))
                    .collect();
                if k == 0 {
                    return Ok(Vec::new());
                }
                if k < d2.len() {
                    d2.select_nth_unstable_by(k - 1, f64::total_cmp);
                    d2.truncate(k);
                }
                d2.sort_by(f64::total_cmp);
                d2.into_iter().map(f64::sqrt).collect()
            }
            (PointSet::Series(s), PointRef::Series(q)) => s.knn(q, k),
            _ => unreachable!(),
        })
    }

    /// Nearest distance from each point of `queries`, computed in parallel.
    pub fn nearest_batch(&self, queries: &PointSet) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(AuditError::Argument("reference set is empty".into()));
        }
        (0..queries.len())
            .into_par_iter()
            .map(|i| self.knn_from(queries.get(i), 1).map(|v| v[0]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!((euclidean(&[1.0; 3], &[2.0; 3]).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert!(euclidean(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dtw_examples() {
        let a = array![[0.0, 0.0, 0.0]];
        let b = array![[1.0, 1.0, 1.0]];
        assert_eq!(dtw(a.view(), b.view()).unwrap(), 3.0);
        assert_eq!(dtw(a.view(), a.view()).unwrap(), 0.0);
        let a = array![[0.0, 1.0]];
        let b = array![[0.0, 0.0, 1.0]];
        assert_eq!(dtw(a.view(), b.view()).unwrap(), 0.0);
    }

    #[test]
    fn dtw_rejects_empty_and_mismatched() {
        let e = Array2::<f64>::zeros((1, 0));
        let a = array![[1.0]];
        assert!(dtw(e.view(), a.view()).is_err());
        let b = array![[1.0], [2.0]];
        assert!(dtw(a.view(), b.view()).is_err());
    }

    #[test]
    fn wide_band_equals_unconstrained() {
        let a = array![[0.0, 1.0, 2.0, 1.0], [1.0, 0.5, 0.0, 2.0]];
        let b = array![[1.0, 2.0, 2.0, 0.0, 1.0], [0.0, 0.0, 1.0, 1.0, 2.0]];
        let full = dtw(a.view(), b.view()).unwrap();
        assert_eq!(dtw_banded(a.view(), b.view(), Some(10)).unwrap(), full);
        let narrow = dtw_banded(a.view(), b.view(), Some(0)).unwrap();
        assert!(narrow >= full, "{narrow} < {full}");
    }

    fn series_strategy(f: usize) -> impl Strategy<Value = Array2<f64>> {
        (1usize..8).prop_flat_map(move |t| {
            proptest::collection::vec(-3.0f64..3.0, f * t).prop_map(move |v| Array2::from_shape_vec((f, t), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn euclidean_is_a_metric(a in proptest::collection::vec(-5.0f64..5.0, 4),
                                 b in proptest::collection::vec(-5.0f64..5.0, 4),
                                 c in proptest::collection::vec(-5.0f64..5.0, 4)) {
            let ab = euclidean(&a, &b).unwrap();
            prop_assert_eq!(ab, euclidean(&b, &a).unwrap());
            prop_assert_eq!(euclidean(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= euclidean(&a, &c).unwrap() + euclidean(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn dtw_symmetric_and_bounded_by_lockstep(a in series_strategy(2), b in series_strategy(2)) {
            let ab = dtw(a.view(), b.view()).unwrap();
            prop_assert_eq!(ab, dtw(b.view(), a.view()).unwrap());
            prop_assert_eq!(dtw(a.view(), a.view()).unwrap(), 0.0);
            if a.ncols() == b.ncols() {
                let lockstep: f64 = (0..a.ncols())
                    .map(|t| euclidean(&a.column(t).to_vec(), &b.column(t).to_vec()).unwrap())
                    .sum();
                prop_assert!(ab <= lockstep + 1e-12);
            }
        }

        #[test]
        fn pruned_knn_matches_exhaustive(q in series_strategy(3),
                                         refs in proptest::collection::vec(series_strategy(3), 1..12),
                                         k in 1usize..4) {
            let set = PointSet::Series(SeriesSet::new(
                refs.iter().map(|m| Series::from_matrix(m.view()).unwrap()).collect(), None).unwrap());
            let qs = Series::from_matrix(q.view()).unwrap();
            let mut all = set.distances_from(PointRef::Series(&qs)).unwrap();
            all.sort_by(f64::total_cmp);
            all.truncate(k);
            prop_assert_eq!(set.knn_from(PointRef::Series(&qs), k).unwrap(), all);
        }
    }

    #[test]
    fn vector_knn_is_sorted_prefix() {
        let set = PointSet::Vectors(array![[1.0], [2.0], [3.0], [-0.5]]);
        assert_eq!(set.knn_from(PointRef::Vector(&[0.0]), 2).unwrap(), vec![0.5, 1.0]);
        assert_eq!(set.knn_from(PointRef::Vector(&[0.0]), 9).unwrap().len(), 4);
        assert!(set.knn_from(PointRef::Vector(&[0.0, 1.0]), 1).is_err());
    }
}
