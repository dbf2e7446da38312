#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use statrs::distribution::{Continuous, Normal};

/// Pairwise AUROC with half credit for ties.
pub fn brute_auroc(members: &[f64], nonmembers: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &m in members {
        for &n in nonmembers {
            if m > n {
                wins += 1.0;
            } else if m == n {
                wins += 0.5;
            }
        }
    }
    wins / (members.len() * nonmembers.len()) as f64
}

/// Memoised recursion over the warping lattice.
pub fn dtw_oracle(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    fn cost(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, i: usize, j: usize) -> f64 {
        a.column(i)
            .iter()
            .zip(b.column(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
    fn go(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, i: usize, j: usize, memo: &mut Vec<Vec<Option<f64>>>) -> f64 {
        if let Some(v) = memo[i][j] {
            return v;
        }
        let here = cost(a, b, i, j);
        let v = match (i, j) {
            (0, 0) => here,
            (0, _) => here + go(a, b, 0, j - 1, memo),
            (_, 0) => here + go(a, b, i - 1, 0, memo),
            _ => {
                let best = go(a, b, i - 1, j - 1, memo)
                    .min(go(a, b, i - 1, j, memo))
                    .min(go(a, b, i, j - 1, memo));
                here + best
            }
        };
        memo[i][j] = Some(v);
        v
    }
    let (ta, tb) = (a.ncols(), b.ncols());
    let mut memo = vec![vec![None; tb]; ta];
    go(a, b, ta - 1, tb - 1, &mut memo)
}

/// Minimum over every monotone warping path, enumerated explicitly.
pub fn dtw_paths(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    fn walk(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, i: usize, j: usize, acc: f64, best: &mut f64) {
        let c: f64 = a
            .column(i)
            .iter()
            .zip(b.column(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let acc = acc + c;
        if i + 1 == a.ncols() && j + 1 == b.ncols() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.ncols() {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.ncols() {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.ncols() && j + 1 < b.ncols() {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(a, b, 0, 0, 0.0, &mut best);
    best
}

/// Product-kernel log density: one log kernel per data point, then a shifted log-sum-exp.
pub fn naive_kde(points: &Array2<f64>, h: &[f64], q: &[f64]) -> f64 {
    let mut logs = Vec::with_capacity(points.nrows());
    for row in points.outer_iter() {
        let mut lk = 0.0;
        for j in 0..q.len() {
            lk += Normal::new(row[j], h[j]).unwrap().ln_pdf(q[j]);
        }
        logs.push(lk);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in &logs {
        sum += (l - top).exp();
    }
    top + sum.ln() - (points.nrows() as f64).ln()
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}
