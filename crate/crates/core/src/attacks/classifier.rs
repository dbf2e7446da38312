//! The partial black-box discriminator: a 64-64 ReLU network trained to tell
//! synthetic (label 1) from auxiliary (label 0) records.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::util::{sigmoid, softplus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 64,
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Params {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array1<f64>,
    b3: Array1<f64>,
}

impl Params {
    fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
            self.w3.as_slice().unwrap(),
            self.b3.as_slice().unwrap(),
        ]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
            self.w3.as_slice_mut().unwrap(),
            self.b3.as_slice_mut().unwrap(),
        ]
    }

    fn zeros_like(&self) -> Self {
        Params {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.len()),
            w3: Array1::zeros(self.w3.len()),
            b3: Array1::zeros(1),
        }
    }
}

/// Trained discriminator with its own input standardisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    shift: Array1<f64>,
    scale: Array1<f64>,
    params: Params,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

struct Forward {
    x: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    z: Array1<f64>,
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn forward(p: &Params, x: Array2<f64>) -> Forward {
    let a1 = x.dot(&p.w1.t()) + &p.b1;
    let h1 = relu(&a1);
    let a2 = h1.dot(&p.w2.t()) + &p.b2;
    let h2 = relu(&a2);
    let z = h2.dot(&p.w3) + p.b3[0];
    Forward { x, a1, h1, a2, h2, z }
}

/// Mean binary cross-entropy with logits, and its gradient.
fn loss_and_grad(p: &Params, x: Array2<f64>, y: &[f64]) -> (f64, Params) {
    let f = forward(p, x);
    let n = y.len() as f64;
    let loss = f.z.iter().zip(y).map(|(z, y)| softplus(*z) - y * z).sum::<f64>() / n;
    let dz: Array1<f64> = f.z.iter().zip(y).map(|(z, y)| (sigmoid(*z) - y) / n).collect();
    let mut g = p.zeros_like();
    g.w3 = f.h2.t().dot(&dz);
    g.b3[0] = dz.sum();
    let outer = dz.view().insert_axis(Axis(1)).dot(&p.w3.view().insert_axis(Axis(0)));
    let ga2 = outer * f.a2.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    g.w2 = ga2.t().dot(&f.h1);
    g.b2 = ga2.sum_axis(Axis(0));
    let ga1 = ga2.dot(&p.w2) * f.a1.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    g.w1 = ga1.t().dot(&f.x);
    g.b1 = ga1.sum_axis(Axis(0));
    (loss, g)
}

fn standardizer(x: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let shift = x.mean_axis(Axis(0)).expect("nonempty");
    let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (shift, scale)
}

impl ClassifierModel {
    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Logits for each row of `x`.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let xs = (&x - &self.shift) / &self.scale;
        forward(&self.params, xs).z
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.logits(v)[0]
    }

    /// Probability of the synthetic class.
    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Mean training loss and gradient over parameters, for diagnostics.
    pub fn loss_grad(&self, x: ArrayView2<'_, f64>, y: &[f64]) -> (f64, Vec<f64>) {
        let xs = (&x - &self.shift) / &self.scale;
        let (loss, g) = loss_and_grad(&self.params, xs, y);
        (loss, g.slices().into_iter().flatten().copied().collect())
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.params.slices().into_iter().flatten().copied().collect()
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params_flat().len() {
            return Err(AuditError::Argument("parameter vector has the wrong length".into()));
        }
        let mut it = p.iter();
        for slot in self.params.slices_mut() {
            for v in slot.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

/// Mini-batch Adam on binary cross-entropy, deterministic given `cfg.seed`.
pub fn train_logan_classifier(
    synthetic: ArrayView2<'_, f64>,
    aux: ArrayView2<'_, f64>,
    cfg: &ClassifierConfig,
) -> Result<ClassifierModel> {
    if synthetic.nrows() == 0 || aux.nrows() == 0 {
        return Err(AuditError::Fit("classifier needs both synthetic and auxiliary records".into()));
    }
    if synthetic.ncols() != aux.ncols() || synthetic.ncols() == 0 {
        return Err(AuditError::Fit("synthetic and auxiliary widths differ".into()));
    }
    if cfg.batch_size == 0 || cfg.hidden == 0 {
        return Err(AuditError::Argument("batch size and hidden width must be positive".into()));
    }
    let x = concatenate(Axis(0), &[synthetic, aux]).expect("same width");
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AuditError::Fit("classifier inputs contain non-finite values".into()));
    }
    let y: Vec<f64> = (0..x.nrows()).map(|i| if i < synthetic.nrows() { 1.0 } else { 0.0 }).collect();
    let (shift, scale) = standardizer(x.view());
    let xs = (&x - &shift) / &scale;

    let (d, h) = (x.ncols(), cfg.hidden);
    let mut rng = crate::seed::rng_from(cfg.seed);
    let mut he = |rows: usize, cols: usize| {
        let dist = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("positive sd");
        Array2::from_shape_simple_fn((rows, cols), || dist.sample(&mut rng))
    };
    let w1 = he(h, d);
    let w2 = he(h, h);
    let w3 = he(1, h).into_shape_with_order(h).expect("vector");
    let mut params = Params {
        w1,
        b1: Array1::zeros(h),
        w2,
        b2: Array1::zeros(h),
        w3,
        b3: Array1::zeros(1),
    };

    let n_params: usize = params.slices().iter().map(|s| s.len()).sum();
    let (mut m, mut v) = (vec![0.0; n_params], vec![0.0; n_params]);
    let (b1c, b2c) = (0.9f64, 0.999f64);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, g) = loss_and_grad(&params, xb, &yb);
            if !loss.is_finite() {
                return Err(AuditError::Training {
                    epoch,
                    message: format!("non-finite classifier loss {loss}"),
                });
            }
            step += 1;
            let (c1, c2) = (1.0 - b1c.powi(step), 1.0 - b2c.powi(step));
            let grads: Vec<f64> = g.slices().into_iter().flatten().copied().collect();
            let mut k = 0;
            for slot in params.slices_mut() {
                for p in slot.iter_mut() {
                    m[k] = b1c * m[k] + (1.0 - b1c) * grads[k];
                    v[k] = b2c * v[k] + (1.0 - b2c) * grads[k] * grads[k];
                    *p -= cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + 1e-8);
                    k += 1;
                }
            }
        }
    }
    let full = forward(&params, xs);
    let final_loss = full.z.iter().zip(&y).map(|(z, y)| softplus(*z) - y * z).sum::<f64>() / y.len() as f64;
    if !final_loss.is_finite() {
        return Err(AuditError::Training {
            epoch: cfg.epochs,
            message: "non-finite final classifier loss".into(),
        });
    }
    let correct = full.z.iter().zip(&y).filter(|(z, y)| (**z > 0.0) == (**y > 0.5)).count();
    Ok(ClassifierModel {
        shift,
        scale,
        params,
        seed: cfg.seed,
        epochs: cfg.epochs,
        final_loss,
        train_accuracy: correct as f64 / y.len() as f64,
    })
}
