//! Masked autoregressive flow: each block is an affine MADE layer followed by an
//! elementwise gated-tanh bijection. Blocks share the variable order, so the whole
//! map has a lower-triangular Jacobian with positive diagonal.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LogDensity;
use crate::error::{AuditError, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub blocks: usize,
    pub hidden_multiplier: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            blocks: 2,
            hidden_multiplier: 4,
            epochs: 200,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Block {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w_mu: Array2<f64>,
    b_mu: Array1<f64>,
    w_al: Array2<f64>,
    b_al: Array1<f64>,
    rho: Array1<f64>,
}

impl Block {
    fn zeros(d: usize, h: usize) -> Self {
        Block {
            w1: Array2::zeros((h, d)),
            b1: Array1::zeros(h),
            w_mu: Array2::zeros((d, h)),
            b_mu: Array1::zeros(d),
            w_al: Array2::zeros((d, h)),
            b_al: Array1::zeros(d),
            rho: Array1::zeros(d),
        }
    }

    fn params_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w_mu.as_slice_mut().unwrap(),
            self.b_mu.as_slice_mut().unwrap(),
            self.w_al.as_slice_mut().unwrap(),
            self.b_al.as_slice_mut().unwrap(),
            self.rho.as_slice_mut().unwrap(),
        ]
    }

    fn params(&self) -> [&[f64]; 7] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w_mu.as_slice().unwrap(),
            self.b_mu.as_slice().unwrap(),
            self.w_al.as_slice().unwrap(),
            self.b_al.as_slice().unwrap(),
            self.rho.as_slice().unwrap(),
        ]
    }
}

/// MADE masks: `m1` is hidden×input, `m2` is output×hidden.
fn masks(d: usize, h: usize) -> (Array2<f64>, Array2<f64>) {
    let span = d.saturating_sub(1).max(1);
    let hidden_deg: Vec<usize> = (0..h).map(|k| k % span + 1).collect();
    let m1 = Array2::from_shape_fn((h, d), |(k, i)| f64::from(u8::from(hidden_deg[k] >= i + 1)));
    let m2 = Array2::from_shape_fn((d, h), |(i, k)| f64::from(u8::from(i + 1 > hidden_deg[k])));
    (m1, m2)
}

struct Cache {
    x: Array2<f64>,
    hh: Array2<f64>,
    e: Array2<f64>,
    v: Array2<f64>,
    t: Array2<f64>,
    s: Array2<f64>,
    g: Array1<f64>,
}

fn block_forward(b: &Block, x: Array2<f64>) -> (Array2<f64>, Array1<f64>, Cache) {
    let mut hh = x.dot(&b.w1.t()) + &b.b1;
    hh.mapv_inplace(f64::tanh);
    let mu = hh.dot(&b.w_mu.t()) + &b.b_mu;
    let al = hh.dot(&b.w_al.t()) + &b.b_al;
    let e = al.mapv(|a| (-a).exp());
    let v = (&x - &mu) * &e;
    let t = v.mapv(f64::tanh);
    let s = t.mapv(|t| 1.0 - t * t);
    let g = b.rho.mapv(|r| r.exp_m1());
    let y = &v + &(&t * &g);
    let mut logdet = Array1::zeros(x.nrows());
    Zip::from(&mut logdet)
        .and(al.rows())
        .and(s.rows())
        .for_each(|ld, al_r, s_r| {
            *ld = al_r
                .iter()
                .zip(s_r)
                .zip(&g)
                .map(|((a, s), g)| -a + (g * s).ln_1p())
                .sum();
        });
    (y, logdet, Cache { x, hh, e, v, t, s, g })
}

/// Backward through one block. `gy` is dL/dY; the loss also contains
/// `-c * sum(logdet)`. Returns dL/dX and accumulates parameter gradients.
fn block_backward(b: &Block, cache: &Cache, gy: &Array2<f64>, c: f64, grad: &mut Block, m1: &Array2<f64>, m2: &Array2<f64>) -> Array2<f64> {
    let Cache { x, hh, e, v, t, s, g } = cache;
    let mut gv = gy.clone();
    let mut g_g = Array1::<f64>::zeros(g.len());
    for (((mut gv_r, t_r), s_r), gy_r) in gv.rows_mut().into_iter().zip(t.rows()).zip(s.rows()).zip(gy.rows()) {
        for j in 0..g.len() {
            let one_gs = 1.0 + g[j] * s_r[j];
            gv_r[j] = gy_r[j] * one_gs + c * 2.0 * g[j] * t_r[j] * s_r[j] / one_gs;
            g_g[j] += gy_r[j] * t_r[j] - c * s_r[j] / one_gs;
        }
    }
    grad.rho += &(&g_g * &b.rho.mapv(f64::exp));
    let gx_direct = &gv * e;
    let g_mu = -&gx_direct;
    let g_al = (-&gv * v).mapv(|z| z + c);
    grad.b_mu += &g_mu.sum_axis(Axis(0));
    grad.b_al += &g_al.sum_axis(Axis(0));
    grad.w_mu += &(g_mu.t().dot(hh) * m2);
    grad.w_al += &(g_al.t().dot(hh) * m2);
    let mut g_a1 = g_mu.dot(&b.w_mu) + g_al.dot(&b.w_al);
    g_a1 *= &hh.mapv(|h| 1.0 - h * h);
    grad.b1 += &g_a1.sum_axis(Axis(0));
    grad.w1 += &(g_a1.t().dot(x) * m1);
    gx_direct + g_a1.dot(&b.w1)
}

/// A trained (or identity-initialised) flow density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    dim: usize,
    hidden: usize,
    blocks: Vec<Block>,
    shift: Array1<f64>,
    scale: Array1<f64>,
    pub seed: u64,
    pub epochs: usize,
    pub train_log_likelihood: f64,
    pub loss_history: Vec<f64>,
}

impl FlowModel {
    /// Identity map with a standard-normal base: `log p(q) = log N(q; 0, I)`.
    pub fn identity(cfg: &FlowConfig, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(AuditError::Fit("flow needs at least one dimension".into()));
        }
        if cfg.blocks == 0 || cfg.hidden_multiplier == 0 {
            return Err(AuditError::Argument("flow needs at least one block and hidden unit".into()));
        }
        let hidden = cfg.hidden_multiplier * dim;
        let (m1, _) = masks(dim, hidden);
        let mut rng = crate::seed::rng_from(cfg.seed);
        let bound = 1.0 / (dim as f64).sqrt();
        let blocks = (0..cfg.blocks)
            .map(|_| {
                let mut b = Block::zeros(dim, hidden);
                b.w1 = Array2::from_shape_simple_fn((hidden, dim), || rng.random_range(-bound..bound)) * &m1;
                b
            })
            .collect();
        Ok(FlowModel {
            dim,
            hidden,
            blocks,
            shift: Array1::zeros(dim),
            scale: Array1::ones(dim),
            seed: cfg.seed,
            epochs: 0,
            train_log_likelihood: f64::NAN,
            loss_history: Vec::new(),
        })
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.params().into_iter().flatten().copied().collect::<Vec<_>>()).collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params_flat().len() {
            return Err(AuditError::Argument("parameter vector has the wrong length".into()));
        }
        let mut it = p.iter();
        for b in &mut self.blocks {
            for slot in b.params_mut() {
                for v in slot.iter_mut() {
                    *v = *it.next().unwrap();
                }
            }
        }
        Ok(())
    }

    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.shift) / &self.scale
    }

    fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }

    /// Per-row log-density plus the caches needed for backprop.
    fn forward(&self, x: ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>, Vec<Cache>) {
        let mut z = self.standardize(x);
        let mut logp = Array1::from_elem(x.nrows(), -self.log_scale_sum());
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (y, ld, cache) = block_forward(b, z);
            logp += &ld;
            caches.push(cache);
            z = y;
        }
        let half_d_ln2pi = 0.5 * self.dim as f64 * LN_2PI;
        for (lp, row) in logp.iter_mut().zip(z.rows()) {
            *lp += -0.5 * row.dot(&row) - half_d_ln2pi;
        }
        (logp, z, caches)
    }

    /// Backprop of `L = -c * sum(log p)`; returns parameter gradients and dL/dx.
    fn backward(&self, z: &Array2<f64>, caches: &[Cache], c: f64) -> (Vec<Block>, Array2<f64>) {
        let (m1, m2) = masks(self.dim, self.hidden);
        let mut g = z * c;
        let mut grads: Vec<Block> = self.blocks.iter().map(|_| Block::zeros(self.dim, self.hidden)).collect();
        for k in (0..self.blocks.len()).rev() {
            g = block_backward(&self.blocks[k], &caches[k], &g, c, &mut grads[k], &m1, &m2);
        }
        (grads, g / &self.scale)
    }

    /// Mean negative log-likelihood over rows of `x` and its gradient with
    /// respect to `params_flat()`.
    pub fn neg_log_likelihood_grad(&self, x: ArrayView2<'_, f64>) -> (f64, Vec<f64>) {
        let n = x.nrows() as f64;
        let (logp, z, caches) = self.forward(x);
        let (grads, _) = self.backward(&z, &caches, 1.0 / n);
        let flat = grads.iter().flat_map(|b| b.params().into_iter().flatten().copied().collect::<Vec<_>>()).collect();
        (-logp.sum() / n, flat)
    }

    /// Log-densities of every row.
    pub fn log_density_batch(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        self.forward(x).0
    }

    /// Gradient of `log p` at `q` with respect to `q`.
    pub fn log_density_grad(&self, q: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, q.len()), q).expect("row vector");
        let (_, z, caches) = self.forward(x);
        let (_, gx) = self.backward(&z, &caches, -1.0);
        gx.into_raw_vec_and_offset().0
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        crate::util::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl LogDensity for FlowModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, q: &[f64]) -> f64 {
        let x = ArrayView2::from_shape((1, q.len()), q).expect("row vector");
        self.forward(x).0[0]
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = B1 * *m + (1.0 - B1) * g;
            *v = B2 * *v + (1.0 - B2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
        }
    }
}

/// Maximum-likelihood fit with default architecture.
pub fn fit_flow(x: ArrayView2<'_, f64>, epochs: usize, seed: u64) -> Result<FlowModel> {
    fit_flow_with(x, &FlowConfig { epochs, seed, ..FlowConfig::default() })
}

pub fn fit_flow_with(x: ArrayView2<'_, f64>, cfg: &FlowConfig) -> Result<FlowModel> {
    let (n, d) = x.dim();
    if n < 16 {
        return Err(AuditError::Fit(format!("flow needs at least 16 points, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AuditError::Fit("flow training data contains non-finite values".into()));
    }
    let mut model = FlowModel::identity(cfg, d)?;
    model.shift = x.mean_axis(Axis(0)).expect("n > 0");
    model.scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 });

    let mut params = model.params_flat();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = model.neg_log_likelihood_grad(x);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(AuditError::Training {
                epoch,
                message: format!("non-finite flow loss {loss}"),
            });
        }
        model.loss_history.push(loss);
        adam.step(&mut params, &grad);
        model.set_params_flat(&params)?;
    }
    let final_ll = model.log_density_batch(x).mean().expect("n > 0");
    if !final_ll.is_finite() {
        return Err(AuditError::Training {
            epoch: cfg.epochs,
            message: "non-finite log-likelihood after training".into(),
        });
    }
    model.train_log_likelihood = final_ll;
    model.epochs = cfg.epochs;
    Ok(model)
}

pub fn flow_log_density(m: &FlowModel, q: &[f64]) -> Result<f64> {
    if q.len() != m.dim {
        return Err(AuditError::Argument(format!("query has dimension {}, flow has {}", q.len(), m.dim)));
    }
    Ok(m.log_density(q))
}
