use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::network::{LayerParams, NetworkState};
use super::ops::softmax_cross_entropy_batch;
use super::NnError;
use crate::data::Dataset;
use crate::rng::{derive_seed, SeedRng};
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// `true` = layer not updated. Empty means nothing is frozen.
    pub freeze_mask: Vec<bool>,
}

impl TrainConfig {
    pub fn validate(&self, layers: usize) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !self.freeze_mask.is_empty() && self.freeze_mask.len() != layers {
            return Err(NnError::InvalidConfig(format!(
                "freeze_mask has {} entries for {layers} layers",
                self.freeze_mask.len()
            )));
        }
        Ok(())
    }

    fn frozen(&self, layer: usize) -> bool {
        self.freeze_mask.get(layer).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    /// A loss or update went non-finite; the network holds the last finite
    /// parameters and `history` stops at the last completed epoch.
    pub diverged: bool,
}

/// Minibatch SGD with classical momentum: `v ← μ·v − η·g`, `w ← w + v`,
/// on the mean softmax cross-entropy of each batch.
///
/// Epoch `e` visits samples in the order of a Fisher-Yates shuffle seeded
/// with `derive_seed(cfg.seed, e)`. Layers flagged in `freeze_mask` are
/// never written. When every layer below some index is frozen their outputs
/// are computed once up front and reused, which gives the same result as
/// running them every batch.
pub fn train(net: &mut NetworkState, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, NnError> {
    cfg.validate(net.layers().len())?;
    if train.is_empty() || val.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    check_dataset(net, train)?;
    check_dataset(net, val)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { history, diverged: false });
    }

    let n_layers = net.layers().len();
    let first_trainable = (0..n_layers)
        .find(|&i| net.layers()[i].has_params() && !cfg.frozen(i))
        .unwrap_or(n_layers);
    let start = first_trainable;
    let train_x = features(net, start, train.images())?;
    let val_x = features(net, start, val.images())?;

    let n = train.len();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        for (i, o) in order.iter_mut().enumerate() {
            *o = i;
        }
        SeedRng::new(derive_seed(cfg.seed, epoch as u64)).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = train_x.gather_rows(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| train.labels()[i]).collect();
            let (logits, caches) = net.forward_train(start, &x)?;
            let (loss, grad) = softmax_cross_entropy_batch(&logits, &labels)?;
            if !loss.is_finite() {
                return Ok(TrainOutcome { history, diverged: true });
            }
            loss_sum += loss * batch.len() as f64;
            if start == n_layers {
                continue;
            }
            let grads = net.backward(start, first_trainable, &caches, grad)?;
            if !sgd_step(net, &grads, cfg) {
                return Ok(TrainOutcome { history, diverged: true });
            }
        }
        let val_error = error_rate(net, start, &val_x, val.labels())?;
        history.push(EpochStats {
            train_loss: loss_sum / n as f64,
            val_error,
        });
    }
    Ok(TrainOutcome { history, diverged: false })
}

fn check_dataset(net: &NetworkState, ds: &Dataset) -> Result<(), NnError> {
    if ds.sample_shape() != net.input_shape() || ds.num_classes() != net.num_outputs() {
        return Err(NnError::ShapeMismatch {
            op: "train",
            detail: format!(
                "network takes {:?} -> {} classes, dataset is {:?} with {} classes",
                net.input_shape(),
                net.num_outputs(),
                ds.sample_shape(),
                ds.num_classes()
            ),
        });
    }
    Ok(())
}

/// Outputs of layers `0..start` for every sample, computed in chunks.
fn features(net: &NetworkState, start: usize, images: &Tensor) -> Result<Tensor, NnError> {
    if start == 0 {
        return Ok(images.clone());
    }
    let n = images.shape()[0];
    let mut data = Vec::new();
    let mut shape = None;
    for lo in (0..n).step_by(EVAL_CHUNK) {
        let hi = (lo + EVAL_CHUNK).min(n);
        let y = net.forward_range(0, start, &images.slice_rows(lo, hi))?;
        shape.get_or_insert_with(|| y.shape().to_vec());
        if data.is_empty() {
            data.reserve_exact(y.len() / (hi - lo) * n);
        }
        data.extend_from_slice(y.data());
    }
    let mut shape = shape.expect("non-empty dataset");
    shape[0] = n;
    Ok(Tensor::new(shape, data).expect("feature shape"))
}

/// Applies one momentum step to every unfrozen layer, or nothing at all if
/// any updated value would be non-finite.
fn sgd_step(net: &mut NetworkState, grads: &[Option<LayerParams>], cfg: &TrainConfig) -> bool {
    let (lr, mu) = (cfg.learning_rate, cfg.momentum);
    let active = |i: usize| !cfg.frozen(i) && grads[i].is_some();
    // First pass only checks, so a failed step leaves the network untouched.
    for i in (0..grads.len()).filter(|&i| active(i)) {
        let g = grads[i].as_ref().expect("filtered");
        let p = net.params()[i].as_ref().expect("params for gradient");
        let v = net.momentum()[i].as_ref().expect("momentum for gradient");
        let ok = |w: &Tensor, v: &Tensor, g: &Tensor| all_updates_finite(w.data(), v.data(), g.data(), lr, mu);
        if !(ok(&p.weight, &v.weight, &g.weight) && ok(&p.bias, &v.bias, &g.bias)) {
            return false;
        }
    }
    for i in (0..grads.len()).filter(|&i| active(i)) {
        let g = grads[i].as_ref().expect("filtered");
        let mut p = net.params_mut()[i].take().expect("params for gradient");
        let v = net.momentum_mut()[i].as_mut().expect("momentum for gradient");
        let step = |w: &mut Tensor, v: &mut Tensor, g: &Tensor| {
            for ((w, v), &g) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
                *v = mu * *v - lr * g;
                *w += *v;
            }
        };
        step(&mut p.weight, &mut v.weight, &g.weight);
        step(&mut p.bias, &mut v.bias, &g.bias);
        net.params_mut()[i] = Some(p);
    }
    true
}

/// `0·x` is zero for finite `x` and NaN otherwise, so independent lane
/// sums of it stay zero exactly when every updated value is finite.
fn all_updates_finite(w: &[f64], v: &[f64], g: &[f64], lr: f64, mu: f64) -> bool {
    const LANES: usize = 8;
    let mut acc = [0.0f64; LANES];
    let (wc, vc, gc) = (w.chunks_exact(LANES), v.chunks_exact(LANES), g.chunks_exact(LANES));
    let tail = wc.remainder().iter().zip(vc.remainder()).zip(gc.remainder());
    for ((w, v), g) in wc.zip(vc).zip(gc) {
        for j in 0..LANES {
            let nv = mu * v[j] - lr * g[j];
            acc[j] += 0.0 * nv + 0.0 * (w[j] + nv);
        }
    }
    let mut rest = 0.0;
    for ((&w, &v), &g) in tail {
        let nv = mu * v - lr * g;
        rest += 0.0 * nv + 0.0 * (w + nv);
    }
    acc.iter().sum::<f64>() + rest == 0.0
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn error_rate(net: &NetworkState, start: usize, x: &Tensor, labels: &[usize]) -> Result<f64, NnError> {
    let n = labels.len();
    let k = net.num_outputs();
    let mut wrong = 0usize;
    for lo in (0..n).step_by(EVAL_CHUNK) {
        let hi = (lo + EVAL_CHUNK).min(n);
        let logits = net.forward_range(start, net.layers().len(), &x.slice_rows(lo, hi))?;
        for (row, &label) in logits.data().chunks_exact(k).zip(&labels[lo..hi]) {
            // NaN logits never win a comparison, so they fall to class 0.
            wrong += usize::from(argmax(row) != label);
        }
    }
    Ok(wrong as f64 / n as f64)
}

/// Fraction of samples whose arg-max logit differs from the label (ties go
/// to the lowest class index).
pub fn evaluate(net: &NetworkState, ds: &Dataset) -> Result<f64, NnError> {
    if ds.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    check_dataset(net, ds)?;
    error_rate(net, 0, ds.images(), ds.labels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SplitTag};
    use crate::nn::LayerSpec;
    use alloc::vec;

    fn blobs(n_per_class: usize, seed: u64) -> Dataset {
        // Two Gaussian blobs in 2-d, shaped [N, 2, 1, 1].
        let mut rng = SeedRng::new(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..2 * n_per_class {
            let k = i % 2;
            let c = if k == 0 { -1.5 } else { 1.5 };
            data.push(c + 0.5 * rng.gaussian());
            data.push(-c + 0.5 * rng.gaussian());
            labels.push(k);
        }
        let images = Tensor::new(vec![2 * n_per_class, 2, 1, 1], data).unwrap();
        Dataset::new("blobs", SplitTag::Train, images, labels, 2).unwrap()
    }

    fn dense_net() -> NetworkState {
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Tanh,
            LayerSpec::Dense { units: 2 },
        ];
        let mut net = NetworkState::new(layers, [2, 1, 1]).unwrap();
        net.init(1);
        net
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            batch_size: 16,
            epochs,
            seed: 3,
            freeze_mask: vec![],
        }
    }

    #[test]
    fn zero_epochs_is_noop() {
        let mut net = dense_net();
        let before = net.clone();
        let out = train(&mut net, &blobs(50, 1), &blobs(50, 2), &cfg(0)).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn separable_blobs_are_learned() {
        let mut net = dense_net();
        let out = train(&mut net, &blobs(200, 1), &blobs(100, 2), &cfg(10)).unwrap();
        assert!(!out.diverged);
        assert_eq!(out.history.len(), 10);
        assert!(out.history[9].val_error <= 0.05, "{:?}", out.history);
    }

    #[test]
    fn full_freeze_leaves_params_untouched() {
        let mut net = dense_net();
        let before = net.clone();
        let mut c = cfg(3);
        c.freeze_mask = vec![true; 4];
        let out = train(&mut net, &blobs(50, 1), &blobs(20, 2), &c).unwrap();
        assert_eq!(out.history.len(), 3);
        for (a, b) in net.params().iter().zip(before.params()) {
            assert!(a.as_ref().unwrap_or(&dummy()).bits_eq(b.as_ref().unwrap_or(&dummy())));
        }
    }

    fn dummy() -> LayerParams {
        LayerParams {
            weight: Tensor::zeros(&[1]),
            bias: Tensor::zeros(&[1]),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (tr, va) = (blobs(60, 1), blobs(20, 2));
        let mut a = dense_net();
        let mut b = dense_net();
        let ha = train(&mut a, &tr, &va, &cfg(3)).unwrap();
        let hb = train(&mut b, &tr, &va, &cfg(3)).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn huge_learning_rate_diverges_gracefully() {
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 2 },
        ];
        let mut net = NetworkState::new(layers, [2, 1, 1]).unwrap();
        net.init(1);
        let mut c = cfg(5);
        c.learning_rate = 1e200;
        c.momentum = 0.0;
        let out = train(&mut net, &blobs(50, 1), &blobs(20, 2), &c).unwrap();
        assert!(out.diverged);
        assert!(net.params().iter().flatten().all(|p| p.weight.is_finite() && p.bias.is_finite()));
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        // All-zero weights give equal logits, so every sample is called 0.
        let ds = synthesize(10, 5, 1, 3, 3, 0.1, 1).unwrap();
        let layers = vec![LayerSpec::Flatten, LayerSpec::Dense { units: 10 }];
        let net = NetworkState::new(layers, [1, 3, 3]).unwrap();
        assert!((evaluate(&net, &ds).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn memorizes_single_sample() {
        let ds = synthesize(3, 1, 1, 2, 2, 0.0, 1).unwrap().head(1);
        let layers = vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3 }];
        let mut net = NetworkState::new(layers, [1, 2, 2]).unwrap();
        net.init(4);
        let mut c = cfg(50);
        c.batch_size = 1;
        train(&mut net, &ds, &ds, &c).unwrap();
        assert_eq!(evaluate(&net, &ds).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let mut net = dense_net();
        let mut c = cfg(1);
        c.momentum = 1.0;
        assert!(matches!(
            train(&mut net, &blobs(5, 1), &blobs(5, 1), &c),
            Err(NnError::InvalidConfig(_))
        ));
        let mut c = cfg(1);
        c.freeze_mask = vec![true];
        assert!(train(&mut net, &blobs(5, 1), &blobs(5, 1), &c).is_err());
    }
}
