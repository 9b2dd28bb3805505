//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use archsel_core::bayesopt::{GpModel, KernelKind};
use archsel_core::nn::ops;
use archsel_core::nn::{LayerSpec, NetworkState};
use archsel_core::Tensor;
use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        diff
    } else {
        diff / denom
    }
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn randn(rng: &mut StdRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn project(y: &Tensor, r: &[f64]) -> f64 {
    y.data().iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Worst relative error of one gradient-check family.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub kind: &'static str,
    pub instances: usize,
    pub worst: f64,
}

fn conv_instance(rng: &mut StdRng) -> f64 {
    let k = [3, 5, 7][rng.gen_range(0..3)];
    let (n, ci, co) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
    let (h, w) = (k + rng.gen_range(0..4), k + rng.gen_range(0..4));
    let xs = [n, ci, h, w];
    let ws = [co, ci, k, k];
    let x = randn(rng, xs.iter().product(), 1.0);
    let wt = randn(rng, ws.iter().product(), 0.3);
    let b = randn(rng, co, 0.3);
    let out_len = n * co * (h - k + 1) * (w - k + 1);
    let r = randn(rng, out_len, 1.0);
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let y = ops::conv2d_forward(&tensor(&xs, x.to_vec()), &tensor(&ws, wt.to_vec()), &tensor(&[co], b.to_vec())).unwrap();
        project(&y, &r)
    };
    let g = ops::conv2d_backward(&tensor(&[n, co, h - k + 1, w - k + 1], r.clone()), &tensor(&xs, x.clone()), &tensor(&ws, wt.clone())).unwrap();
    let gi = numeric_grad(&x, |v| loss(v, &wt, &b));
    let gw = numeric_grad(&wt, |v| loss(&x, v, &b));
    let gb = numeric_grad(&b, |v| loss(&x, &wt, v));
    rel_err(g.input.unwrap().data(), &gi)
        .max(rel_err(g.weights.data(), &gw))
        .max(rel_err(g.bias.data(), &gb))
}

fn dense_instance(rng: &mut StdRng) -> f64 {
    let (n, i, o) = (rng.gen_range(1..4), rng.gen_range(1..7), rng.gen_range(1..7));
    let x = randn(rng, n * i, 1.0);
    let wt = randn(rng, o * i, 0.5);
    let b = randn(rng, o, 0.5);
    let r = randn(rng, n * o, 1.0);
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let y = ops::dense_forward(&tensor(&[n, i], x.to_vec()), &tensor(&[o, i], wt.to_vec()), &tensor(&[o], b.to_vec())).unwrap();
        project(&y, &r)
    };
    let g = ops::dense_backward(&tensor(&[n, o], r.clone()), &tensor(&[n, i], x.clone()), &tensor(&[o, i], wt.clone())).unwrap();
    rel_err(g.input.unwrap().data(), &numeric_grad(&x, |v| loss(v, &wt, &b)))
        .max(rel_err(g.weights.data(), &numeric_grad(&wt, |v| loss(&x, v, &b))))
        .max(rel_err(g.bias.data(), &numeric_grad(&b, |v| loss(&x, &wt, v))))
}

fn pool_instance(rng: &mut StdRng) -> f64 {
    let s = [rng.gen_range(1..3), rng.gen_range(1..3), rng.gen_range(2..8), rng.gen_range(2..8)];
    let len: usize = s.iter().product();
    // Distinct values at least 0.1 apart keep every window's argmax stable under the step.
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let x: Vec<f64> = order.iter().map(|&o| o as f64 * 0.1 + rng.gen_range(0.0..0.01)).collect();
    let (y, arg) = ops::maxpool2x2_forward(&tensor(&s, x.clone())).unwrap();
    let r = randn(rng, y.len(), 1.0);
    let g = ops::maxpool2x2_backward(&Tensor::new(y.shape().to_vec(), r.clone()).unwrap(), &arg, &s).unwrap();
    let num = numeric_grad(&x, |v| project(&ops::maxpool2x2_forward(&tensor(&s, v.to_vec())).unwrap().0, &r));
    rel_err(g.data(), &num)
}

fn relu_instance(rng: &mut StdRng) -> f64 {
    let n = rng.gen_range(1..40);
    // Stay clear of the kink at 0.
    let x: Vec<f64> = (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    let r = randn(rng, n, 1.0);
    let g = ops::relu_backward(&tensor(&[n], r.clone()), &tensor(&[n], x.clone()));
    rel_err(g.data(), &numeric_grad(&x, |v| project(&ops::relu_forward(&tensor(&[n], v.to_vec())), &r)))
}

fn tanh_instance(rng: &mut StdRng) -> f64 {
    let n = rng.gen_range(1..40);
    let x = randn(rng, n, 1.5);
    let r = randn(rng, n, 1.0);
    let y = ops::tanh_forward(&tensor(&[n], x.clone()));
    let g = ops::tanh_backward(&tensor(&[n], r.clone()), &y);
    rel_err(g.data(), &numeric_grad(&x, |v| project(&ops::tanh_forward(&tensor(&[n], v.to_vec())), &r)))
}

fn flatten_instance(rng: &mut StdRng) -> f64 {
    let s = [rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..5), rng.gen_range(1..5)];
    let len: usize = s.iter().product();
    let x = randn(rng, len, 1.0);
    let r = randn(rng, len, 1.0);
    // Backward of a flatten is the reshape of the upstream gradient.
    let analytic = Tensor::new(vec![s[0], len / s[0]], r.clone()).unwrap().reshape(&s).unwrap();
    let num = numeric_grad(&x, |v| project(&ops::flatten(&tensor(&s, v.to_vec())), &r));
    rel_err(analytic.data(), &num)
}

fn xent_instance(rng: &mut StdRng) -> f64 {
    let k = rng.gen_range(2..11);
    let z = randn(rng, k, 3.0);
    let label = rng.gen_range(0..k);
    let (_, g) = ops::softmax_cross_entropy(&z, label).unwrap();
    let num = numeric_grad(&z, |v| ops::softmax_cross_entropy(v, label).unwrap().0);
    rel_err(&g, &num)
}

fn network_instance(rng: &mut StdRng) -> f64 {
    let act = if rng.gen_bool(0.5) { LayerSpec::Tanh } else { LayerSpec::Relu };
    let layers = vec![
        LayerSpec::Conv2d { out_channels: 2, kernel_size: 3 },
        act,
        LayerSpec::MaxPool2x2,
        LayerSpec::Conv2d { out_channels: 3, kernel_size: 3 },
        LayerSpec::Tanh,
        LayerSpec::Flatten,
        LayerSpec::Dense { units: 5 },
        act,
        LayerSpec::Dense { units: 3 },
    ];
    let mut net = NetworkState::new(layers, [2, 9, 9]).unwrap();
    net.init(rng.gen());
    let n = 2;
    let x = tensor(&[n, 2, 9, 9], randn(rng, n * 162, 1.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
    let loss_of = |net: &NetworkState| {
        let logits = net.forward(&x).unwrap();
        ops::softmax_cross_entropy_batch(&logits, &labels).unwrap().0
    };
    let (logits, caches) = net.forward_train(0, &x).unwrap();
    let (_, g) = ops::softmax_cross_entropy_batch(&logits, &labels).unwrap();
    let grads = net.backward(0, 0, &caches, g).unwrap();
    let mut worst: f64 = 0.0;
    for (li, lg) in grads.iter().enumerate() {
        let Some(lg) = lg else { continue };
        for which in 0..2 {
            let base: Vec<f64> = {
                let p = net.params()[li].as_ref().unwrap();
                if which == 0 { p.weight.data().to_vec() } else { p.bias.data().to_vec() }
            };
            let mut probe = net.clone();
            let num = numeric_grad(&base, |v| {
                let p = probe.params_mut()[li].as_mut().unwrap();
                let t = if which == 0 { &mut p.weight } else { &mut p.bias };
                t.data_mut().copy_from_slice(v);
                loss_of(&probe)
            });
            let ana = if which == 0 { lg.weight.data() } else { lg.bias.data() };
            worst = worst.max(rel_err(ana, &num));
        }
    }
    worst
}

/// Runs `instances` random checks per layer kind.
pub fn gradient_suite(instances: usize, seed: u64) -> Vec<GradReport> {
    let kinds: [(&'static str, fn(&mut StdRng) -> f64); 8] = [
        ("conv2d", conv_instance),
        ("maxpool2x2", pool_instance),
        ("dense", dense_instance),
        ("relu", relu_instance),
        ("tanh", tanh_instance),
        ("flatten", flatten_instance),
        ("softmax_xent", xent_instance),
        ("network", network_instance),
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, (kind, f))| {
            let mut rng = StdRng::seed_from_u64(seed.wrapping_add(i as u64 * 7919));
            let worst = (0..instances).map(|_| f(&mut rng)).fold(0.0, f64::max);
            GradReport { kind, instances, worst }
        })
        .collect()
}

fn oracle_kernel(kind: KernelKind, a: &[f64], b: &[f64], ls: &[f64], sf2: f64) -> f64 {
    let r2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    match kind {
        KernelKind::SquaredExponential => sf2 * (-0.5 * r2).exp(),
        KernelKind::Matern52 => {
            let r = r2.sqrt();
            sf2 * (1.0 + 5f64.sqrt() * r + 5.0 * r2 / 3.0) * (-(5f64.sqrt()) * r).exp()
        }
    }
}

/// Posterior mean and variance by explicit matrix inversion.
pub fn dense_gp_predict(model: &GpModel, x: &[f64]) -> (f64, f64) {
    let xs = model.inputs();
    let n = xs.len();
    let h = model.hyper();
    let k = DMatrix::from_fn(n, n, |i, j| {
        oracle_kernel(model.kernel(), &xs[i], &xs[j], &h.lengthscales, h.signal_var) + if i == j { h.nugget } else { 0.0 }
    });
    let kinv = k.try_inverse().expect("invertible covariance");
    let (m, s) = (model.mean(), model.scale());
    let ys = DVector::from_iterator(n, model.targets().iter().map(|y| (y - m) / s));
    let ks = DVector::from_iterator(n, xs.iter().map(|xi| oracle_kernel(model.kernel(), xi, x, &h.lengthscales, h.signal_var)));
    let mu = m + s * ks.dot(&(&kinv * &ys));
    let var = s * s * (h.signal_var - ks.dot(&(&kinv * &ks)));
    (mu, var.max(0.0))
}

/// Monte-Carlo estimate of `E[max(f_min − Y, 0)]`, `Y ~ N(mu, sigma²)`,
/// and its standard error.
pub fn mc_expected_improvement(mu: f64, sigma: f64, f_min: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..samples {
        let z: f64 = rng.sample(StandardNormal);
        let v = (f_min - (mu + sigma * z)).max(0.0);
        s += v;
        s2 += v * v;
    }
    let n = samples as f64;
    let mean = s / n;
    let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}
