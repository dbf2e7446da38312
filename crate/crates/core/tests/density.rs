use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{Continuous, Normal};
use synthaudit::density::{fit_flow, fit_kde, flow_log_density, kde_log_density, FlowConfig, FlowModel, LogDensity};
use synthaudit::seed::rng_from;

fn naive_kde(points: &Array2<f64>, h: &[f64], q: &[f64]) -> f64 {
    let n = points.nrows() as f64;
    let total: f64 = points
        .outer_iter()
        .map(|row| {
            row.iter()
                .zip(q)
                .zip(h)
                .map(|((x, qv), hj)| Normal::new(*x, *hj).unwrap().pdf(*qv))
                .product::<f64>()
        })
        .sum();
    (total / n).ln()
}

#[test]
fn kde_matches_naive_summation() {
    let mut rng = rng_from(11);
    for (n, d) in [(5, 1), (40, 2), (100, 3)] {
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-2.0..2.0));
        let m = fit_kde(x.view()).unwrap();
        for _ in 0..20 {
            let q: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let got = kde_log_density(&m, &q).unwrap();
            let want = naive_kde(&x, &m.bandwidth, &q);
            assert!(((got - want) / want).abs() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn kde_pure_under_repeated_queries() {
    let mut rng = rng_from(12);
    let x = Array2::from_shape_simple_fn((30, 2), || rng.random_range(-1.0..1.0));
    let m = fit_kde(x.view()).unwrap();
    let q = [0.2, -0.4];
    let first = m.log_density(&q);
    let _ = m.log_density(&[5.0, 5.0]);
    assert_eq!(first, m.log_density(&q));
}

fn trained_flow(d: usize, seed: u64) -> (FlowModel, Array2<f64>) {
    let mut rng = rng_from(seed);
    let x = Array2::from_shape_fn((64, d), |(_, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        (j as f64 + 1.0) * z + 0.3 * z * z
    });
    (fit_flow(x.view(), 40, seed).unwrap(), x)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn flow_input_gradient_matches_finite_differences() {
    let (m, _) = trained_flow(3, 4);
    for q in [[0.1, -0.3, 0.8], [1.5, 2.0, -2.5], [-4.0, 0.0, 3.0]] {
        let g = m.log_density_grad(&q);
        for j in 0..3 {
            let h = 1e-5;
            let (mut up, mut dn) = (q, q);
            up[j] += h;
            dn[j] -= h;
            let fd = (m.log_density(&up) - m.log_density(&dn)) / (2.0 * h);
            assert!(rel_close(g[j], fd, 1e-4), "dim {j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn flow_parameter_gradient_matches_finite_differences() {
    let (mut m, x) = trained_flow(3, 9);
    let (_, grad) = m.neg_log_likelihood_grad(x.view());
    let p0 = m.params_flat();
    let mut rng = rng_from(1);
    let mut checked = 0;
    for _ in 0..400 {
        let k = rng.random_range(0..p0.len());
        // Masked autoregressive weights are pinned at zero and carry no gradient.
        if p0[k] == 0.0 && grad[k] == 0.0 {
            continue;
        }
        let h = 1e-5;
        let mut p = p0.clone();
        p[k] += h;
        m.set_params_flat(&p).unwrap();
        let up = m.neg_log_likelihood_grad(x.view()).0;
        p[k] -= 2.0 * h;
        m.set_params_flat(&p).unwrap();
        let dn = m.neg_log_likelihood_grad(x.view()).0;
        let fd = (up - dn) / (2.0 * h);
        if fd.abs() < 1e-7 && grad[k].abs() < 1e-7 {
            continue;
        }
        checked += 1;
        assert!(rel_close(grad[k], fd, 1e-4), "param {k}: {} vs {fd}", grad[k]);
    }
    assert!(checked > 50);
}

#[test]
fn flow_fits_independent_uniforms_flatly() {
    let mut rng = rng_from(21);
    let x = Array2::from_shape_simple_fn((512, 2), || rng.random::<f64>());
    let m = fit_flow(x.view(), 200, 3).unwrap();
    let probe = Array2::from_shape_simple_fn((400, 2), || rng.random_range(0.05..0.95));
    let ld = m.log_density_batch(probe.view());
    let std = ld.std(1.0);
    assert!(std < 0.5, "std of log-density {std}");
}

#[test]
fn flow_log_density_finite_in_box() {
    let (m, _) = trained_flow(4, 13);
    let mut rng = rng_from(5);
    for _ in 0..200 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..=10.0)).collect();
        assert!(flow_log_density(&m, &q).unwrap().is_finite());
    }
    for corner in [[10.0; 4], [-10.0; 4]] {
        assert!(m.log_density(&corner).is_finite());
    }
}

#[test]
fn flow_loss_smoothed_non_increasing() {
    let mut rng = rng_from(31);
    let x = Array2::from_shape_fn((256, 3), |(_, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        2.0 * z + j as f64
    });
    let m = fit_flow(x.view(), 200, 0).unwrap();
    let smooth: Vec<f64> = m.loss_history.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    for w in smooth.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "smoothed loss rose {} -> {}", w[0], w[1]);
    }
    assert!(m.loss_history.iter().all(|l| l.is_finite()));
}

#[test]
fn identity_flow_matches_standard_normal() {
    let m = FlowModel::identity(&FlowConfig::default(), 2).unwrap();
    let n = Normal::standard();
    for q in [[0.0, 0.0], [1.3, -0.7], [6.0, 2.0]] {
        let want = n.ln_pdf(q[0]) + n.ln_pdf(q[1]);
        assert!((m.log_density(&q) - want).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kde_invariant_to_point_order(
        pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..20),
        q in (-6.0f64..6.0, -6.0f64..6.0),
        rot in 0usize..20,
    ) {
        let a = Array2::from_shape_fn((pts.len(), 2), |(i, j)| if j == 0 { pts[i].0 } else { pts[i].1 });
        let mut shuffled = pts.clone();
        shuffled.rotate_left(rot % pts.len());
        shuffled.reverse();
        let b = Array2::from_shape_fn((pts.len(), 2), |(i, j)| if j == 0 { shuffled[i].0 } else { shuffled[i].1 });
        let (ma, mb) = (fit_kde(a.view()).unwrap(), fit_kde(b.view()).unwrap());
        let (la, lb) = (ma.log_density(&[q.0, q.1]), mb.log_density(&[q.0, q.1]));
        prop_assert!((la - lb).abs() <= 1e-9 * la.abs().max(1.0));
    }
}
