use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ops;
use super::NnError;
use crate::rng::SeedRng;
use crate::tensor::Tensor;

/// One layer of a sequential network. The loss (softmax cross-entropy) is
/// applied by the trainer on top of the last layer, not listed here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { out_channels: usize, kernel_size: usize },
    #[serde(rename = "maxpool2x2")]
    MaxPool2x2,
    Dense { units: usize },
    Relu,
    Tanh,
    Flatten,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    fn is_feature_layer(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::MaxPool2x2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }

    pub fn bits_eq(&self, other: &LayerParams) -> bool {
        self.weight.bits_eq(&other.weight) && self.bias.bits_eq(&other.bias)
    }
}

/// Whatever a layer's backward pass needs from its forward pass.
#[derive(Debug, Clone)]
pub enum ActivationCache {
    Input(Tensor),
    Output(Tensor),
    Pool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Reshape(Vec<usize>),
}

/// A sequential network: parameters, momentum buffers and the split
/// between the convolutional feature extractor and the dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    layers: Vec<LayerSpec>,
    input_shape: [usize; 3],
    /// Per-layer output shape, without the batch axis.
    shapes: Vec<Vec<usize>>,
    params: Vec<Option<LayerParams>>,
    momentum: Vec<Option<LayerParams>>,
    split_index: usize,
}

impl NetworkState {
    /// Checks the shape algebra and allocates zeroed parameters.
    pub fn new(layers: Vec<LayerSpec>, input_shape: [usize; 3]) -> Result<Self, NnError> {
        let err = |detail| NnError::ShapeMismatch { op: "network", detail };
        if input_shape.contains(&0) {
            return Err(err(format!("input shape {input_shape:?} has a zero extent")));
        }
        let mut shape = input_shape.to_vec();
        let mut shapes = Vec::with_capacity(layers.len());
        let mut params = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            let mut p = None;
            shape = match (*layer, shape.as_slice()) {
                (LayerSpec::Conv2d { out_channels, kernel_size }, &[c, h, w]) => {
                    if out_channels == 0 || ![3, 5, 7].contains(&kernel_size) {
                        return Err(err(format!(
                            "layer {i}: conv needs out_channels >= 1 and kernel in {{3,5,7}}"
                        )));
                    }
                    if kernel_size > h || kernel_size > w {
                        return Err(err(format!("layer {i}: kernel {kernel_size} exceeds {h}x{w} input")));
                    }
                    p = Some(LayerParams {
                        weight: Tensor::zeros(&[out_channels, c, kernel_size, kernel_size]),
                        bias: Tensor::zeros(&[out_channels]),
                    });
                    vec![out_channels, h - kernel_size + 1, w - kernel_size + 1]
                }
                (LayerSpec::MaxPool2x2, &[c, h, w]) => {
                    if h < 2 || w < 2 {
                        return Err(err(format!("layer {i}: cannot pool a {h}x{w} map")));
                    }
                    vec![c, h / 2, w / 2]
                }
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (LayerSpec::Dense { units }, &[f]) => {
                    if units == 0 {
                        return Err(err(format!("layer {i}: dense needs units >= 1")));
                    }
                    p = Some(LayerParams {
                        weight: Tensor::zeros(&[units, f]),
                        bias: Tensor::zeros(&[units]),
                    });
                    vec![units]
                }
                (LayerSpec::Relu | LayerSpec::Tanh, s) => s.to_vec(),
                (l, s) => return Err(err(format!("layer {i}: {l:?} cannot take input {s:?}"))),
            };
            shapes.push(shape.clone());
            params.push(p);
        }
        if shape.len() != 1 {
            return Err(err(format!("network must end in a flat output, got {shape:?}")));
        }
        let split_index = layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Dense { .. }))
            .unwrap_or(layers.len());
        if layers[split_index..].iter().any(LayerSpec::is_feature_layer) {
            return Err(err("conv/pool layer after the first dense layer".into()));
        }
        let momentum = params.iter().map(|p| p.as_ref().map(LayerParams::zeros_like)).collect();
        Ok(Self {
            layers,
            input_shape,
            shapes,
            params,
            momentum,
            split_index,
        })
    }

    /// Glorot-uniform weights, `U[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases and zero momentum. Draws go layer by layer in row-major
    /// order from one generator seeded with `seed`.
    pub fn init(&mut self, seed: u64) {
        let mut rng = SeedRng::new(seed);
        for (layer, p) in self.layers.iter().zip(self.params.iter_mut()) {
            let Some(p) = p else { continue };
            let (fan_in, fan_out) = match (*layer, p.weight.shape()) {
                (LayerSpec::Conv2d { .. }, &[co, ci, k, _]) => (ci * k * k, co * k * k),
                (_, &[o, i]) => (i, o),
                _ => unreachable!("parameter shapes are fixed in new()"),
            };
            let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            for w in p.weight.data_mut() {
                *w = rng.uniform_range(-a, a);
            }
            p.bias.data_mut().fill(0.0);
        }
        for m in self.momentum.iter_mut().flatten() {
            m.weight.data_mut().fill(0.0);
            m.bias.data_mut().fill(0.0);
        }
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    /// Per-layer output shapes (no batch axis).
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn num_outputs(&self) -> usize {
        self.shapes.last().map_or(0, |s| s[0])
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.params
    }

    pub fn momentum(&self) -> &[Option<LayerParams>] {
        &self.momentum
    }

    pub(crate) fn momentum_mut(&mut self) -> &mut [Option<LayerParams>] {
        &mut self.momentum
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// Freeze mask covering every layer before the split index.
    pub fn feature_freeze_mask(&self) -> Vec<bool> {
        (0..self.layers.len()).map(|i| i < self.split_index).collect()
    }

    fn check_input(&self, start: usize, x: &Tensor) -> Result<(), NnError> {
        let expected: &[usize] = if start == 0 { &self.input_shape } else { &self.shapes[start - 1] };
        let s = x.shape();
        let ok = s.len() == expected.len() + 1 && &s[1..] == expected;
        if !ok {
            return Err(NnError::ShapeMismatch {
                op: "forward",
                detail: format!("layer {start} expects [N, {expected:?}], got {s:?}"),
            });
        }
        Ok(())
    }

    fn forward_layer(&self, i: usize, x: Tensor, keep: bool) -> Result<(Tensor, Option<ActivationCache>), NnError> {
        let p = self.params[i].as_ref();
        Ok(match self.layers[i] {
            LayerSpec::Conv2d { .. } => {
                let p = p.expect("conv params");
                let y = ops::conv2d_forward(&x, &p.weight, &p.bias)?;
                (y, keep.then_some(ActivationCache::Input(x)))
            }
            LayerSpec::Dense { .. } => {
                let p = p.expect("dense params");
                let y = ops::dense_forward(&x, &p.weight, &p.bias)?;
                (y, keep.then_some(ActivationCache::Input(x)))
            }
            LayerSpec::MaxPool2x2 => {
                let (y, argmax) = ops::maxpool2x2_forward(&x)?;
                let cache = keep.then(|| ActivationCache::Pool {
                    argmax,
                    input_shape: x.shape().to_vec(),
                });
                (y, cache)
            }
            LayerSpec::Relu if keep => {
                let y = ops::relu_forward(&x);
                (y, Some(ActivationCache::Input(x)))
            }
            LayerSpec::Relu => (ops::relu_in_place(x), None),
            LayerSpec::Tanh => {
                let y = ops::tanh_forward(&x);
                let cache = keep.then(|| ActivationCache::Output(y.clone()));
                (y, cache)
            }
            LayerSpec::Flatten => {
                let shape = x.shape().to_vec();
                (ops::flatten(&x), keep.then_some(ActivationCache::Reshape(shape)))
            }
        })
    }

    /// Runs layers `start..end` on a batch whose shape matches the input
    /// of layer `start`.
    pub fn forward_range(&self, start: usize, end: usize, x: &Tensor) -> Result<Tensor, NnError> {
        self.check_input(start, x)?;
        let mut a = x.clone();
        for i in start..end {
            a = self.forward_layer(i, a, false)?.0;
        }
        Ok(a)
    }

    /// Logits `[N, K]` for a `[N, C, H, W]` batch.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.forward_range(0, self.layers.len(), x)
    }

    /// Forward from layer `start`, keeping what backward needs.
    pub fn forward_train(&self, start: usize, x: &Tensor) -> Result<(Tensor, Vec<ActivationCache>), NnError> {
        self.check_input(start, x)?;
        let mut a = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len() - start);
        for i in start..self.layers.len() {
            let (y, c) = self.forward_layer(i, a, true)?;
            caches.push(c.expect("cache requested"));
            a = y;
        }
        Ok((a, caches))
    }

    /// Parameter gradients for layers `start..`, given the loss gradient at
    /// the output. No work is done below `stop` (the lowest layer whose
    /// parameters are wanted).
    pub fn backward(
        &self,
        start: usize,
        stop: usize,
        caches: &[ActivationCache],
        grad_output: Tensor,
    ) -> Result<Vec<Option<LayerParams>>, NnError> {
        let mut grads: Vec<Option<LayerParams>> = vec![None; self.layers.len()];
        let mut g = grad_output;
        let stop = stop.max(start);
        for i in (stop..self.layers.len()).rev() {
            let need_input = i > stop;
            let cache = &caches[i - start];
            match (self.layers[i], cache) {
                (LayerSpec::Conv2d { .. }, ActivationCache::Input(x)) => {
                    let p = self.params[i].as_ref().expect("conv params");
                    let r = ops::conv2d_backward_impl(&g, x, &p.weight, need_input)?;
                    grads[i] = Some(LayerParams {
                        weight: r.weights,
                        bias: r.bias,
                    });
                    match r.input {
                        Some(gi) => g = gi,
                        None => break,
                    }
                }
                (LayerSpec::Dense { .. }, ActivationCache::Input(x)) => {
                    let p = self.params[i].as_ref().expect("dense params");
                    let r = ops::dense_backward_impl(&g, x, &p.weight, need_input)?;
                    grads[i] = Some(LayerParams {
                        weight: r.weights,
                        bias: r.bias,
                    });
                    match r.input {
                        Some(gi) => g = gi,
                        None => break,
                    }
                }
                (LayerSpec::MaxPool2x2, ActivationCache::Pool { argmax, input_shape }) => {
                    g = ops::maxpool2x2_backward(&g, argmax, input_shape)?;
                }
                (LayerSpec::Relu, ActivationCache::Input(x)) => g = ops::relu_backward(&g, x),
                (LayerSpec::Tanh, ActivationCache::Output(y)) => g = ops::tanh_backward(&g, y),
                (LayerSpec::Flatten, ActivationCache::Reshape(shape)) => {
                    g = g.reshape(shape).map_err(|e| NnError::ShapeMismatch {
                        op: "flatten_backward",
                        detail: format!("{e}"),
                    })?;
                }
                (l, _) => {
                    return Err(NnError::ShapeMismatch {
                        op: "backward",
                        detail: format!("layer {i} ({l:?}) has a foreign activation cache"),
                    })
                }
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lenet() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d { out_channels: 4, kernel_size: 5 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2x2,
            LayerSpec::Conv2d { out_channels: 8, kernel_size: 3 },
            LayerSpec::Tanh,
            LayerSpec::MaxPool2x2,
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 16 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 10 },
        ]
    }

    #[test]
    fn shapes_and_split() {
        let net = NetworkState::new(lenet(), [1, 28, 28]).unwrap();
        assert_eq!(net.shapes()[0], vec![4, 24, 24]);
        assert_eq!(net.shapes()[2], vec![4, 12, 12]);
        assert_eq!(net.shapes()[5], vec![8, 5, 5]);
        assert_eq!(net.shapes()[6], vec![200]);
        assert_eq!(net.split_index(), 7);
        assert_eq!(net.num_outputs(), 10);
        assert_eq!(net.param_count(), (4 * 25 + 4) + (8 * 4 * 9 + 8) + (200 * 16 + 16) + (16 * 10 + 10));
    }

    #[test]
    fn rejects_conv_after_dense() {
        let layers = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 4 },
            LayerSpec::Conv2d { out_channels: 1, kernel_size: 3 },
        ];
        assert!(NetworkState::new(layers, [1, 4, 4]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let mut a = NetworkState::new(lenet(), [1, 28, 28]).unwrap();
        let mut b = a.clone();
        a.init(9);
        b.init(9);
        assert_eq!(a, b);
        b.init(10);
        assert_ne!(a.params(), b.params());
    }

    #[test]
    fn init_bound_for_dense_100() {
        let layers = vec![LayerSpec::Flatten, LayerSpec::Dense { units: 100 }];
        let mut net = NetworkState::new(layers, [100, 1, 1]).unwrap();
        net.init(1);
        let a = libm::sqrt(6.0 / 200.0);
        let p = net.params()[1].as_ref().unwrap();
        assert!(p.weight.data().iter().all(|w| w.abs() <= a));
        assert!(p.bias.data().iter().all(|&b| b == 0.0));
        // The bound is actually approached.
        assert!(p.weight.data().iter().any(|w| w.abs() > 0.9 * a));
    }

    #[test]
    fn forward_produces_logits() {
        let mut net = NetworkState::new(lenet(), [1, 28, 28]).unwrap();
        net.init(3);
        let x = Tensor::from_fn(&[3, 1, 28, 28], |i| (i % 17) as f64 / 17.0);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), &[3, 10]);
        assert!(y.is_finite());
        assert!(net.forward(&Tensor::zeros(&[1, 1, 27, 28])).is_err());
    }
}
