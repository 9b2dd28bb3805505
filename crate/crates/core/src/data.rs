//! In-memory labelled image sets, the synthetic generator, per-channel
//! standardization and stratified splitting. File formats live in the
//! `archsel` crate.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, SeedRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Empty,
    CountMismatch { images: usize, labels: usize },
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    BadShape(String),
    InvalidArgument(String),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Empty => f.write_str("dataset is empty"),
            DataError::CountMismatch { images, labels } => {
                write!(f, "{images} images but {labels} labels")
            }
            DataError::LabelOutOfRange { index, label, classes } => {
                write!(f, "sample {index}: label {label} not below {classes}")
            }
            DataError::BadShape(s) => write!(f, "bad image tensor: {s}"),
            DataError::InvalidArgument(s) => f.write_str(s),
        }
    }
}

impl core::error::Error for DataError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub n_train: usize,
    pub n_val: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    split: SplitTag,
    images: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// `images` must be `[N, C, H, W]` with one label per sample.
    pub fn new(
        name: impl Into<String>,
        split: SplitTag,
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        if images.rank() != 4 {
            return Err(DataError::BadShape(alloc::format!("expected [N,C,H,W], got {:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.shape()[0],
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(DataError::LabelOutOfRange {
                index,
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            name: name.into(),
            split,
            images,
            labels,
            num_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]`
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn with_split_tag(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            split: self.split,
            images: if indices.is_empty() {
                Tensor::zeros(&[0])
            } else {
                self.images.gather_rows(indices)
            },
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Same images with labels permuted by a seeded shuffle, which removes
    /// any learnable image/label relation while keeping class balance.
    pub fn with_shuffled_labels(&self, seed: u64) -> Self {
        let mut labels = self.labels.clone();
        SeedRng::new(seed).shuffle(&mut labels);
        Self {
            labels,
            ..self.clone()
        }
    }

    pub fn meta(&self, n_val: usize) -> DatasetMeta {
        let [c, h, w] = self.sample_shape();
        DatasetMeta {
            name: self.name.clone(),
            classes: self.num_classes,
            channels: c,
            height: h,
            width: w,
            n_train: self.len(),
            n_val,
        }
    }
}

/// Balanced synthetic set: class `k` is a fixed oriented cosine grating on
/// top of a class-specific brightness level, plus `N(0, noise_sigma²)`
/// pixel noise. Sample `i` has label `i mod K`.
pub fn synthesize(
    classes: usize,
    per_class: usize,
    channels: usize,
    height: usize,
    width: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if classes == 0 || per_class == 0 || channels == 0 || height == 0 || width == 0 {
        return Err(DataError::InvalidArgument("all synthetic dimensions must be >= 1".into()));
    }
    let templates: Vec<Vec<f64>> = (0..classes).map(|k| template(k, classes, channels, height, width)).collect();
    let plane = channels * height * width;
    let n = classes * per_class;
    let mut rng = SeedRng::new(seed);
    let mut data = Vec::with_capacity(n * plane);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        labels.push(k);
        for &t in &templates[k] {
            let noise = if noise_sigma > 0.0 { noise_sigma * rng.gaussian() } else { 0.0 };
            data.push(t + noise);
        }
    }
    let images = Tensor::new(vec![n, channels, height, width], data).expect("synthetic shape");
    Dataset::new("synthetic", SplitTag::Train, images, labels, classes)
}

/// Noise-free pattern of class `k`.
pub fn template(k: usize, classes: usize, channels: usize, height: usize, width: usize) -> Vec<f64> {
    use core::f64::consts::PI;
    let theta = PI * k as f64 / classes as f64;
    let freq = 1.0 + (k % 3) as f64 * 0.5;
    let level = 0.5 * (k + 1) as f64 / (classes + 1) as f64;
    let extent = height.max(width) as f64;
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let mut out = Vec::with_capacity(channels * height * width);
    for ch in 0..channels {
        for y in 0..height {
            for x in 0..width {
                let u = (x as f64 * c + y as f64 * s) / extent;
                let wave = 1.0 + libm::cos(2.0 * PI * freq * u + ch as f64 * PI / 3.0);
                out.push(level + 0.25 * wave);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalizeWarning {
    /// Channel had zero spread; it was centred and divided by 1.
    DegenerateChannel(usize),
}

impl ChannelStats {
    /// Population mean and standard deviation per channel.
    pub fn compute(ds: &Dataset) -> Result<Self, DataError> {
        if ds.is_empty() {
            return Err(DataError::Empty);
        }
        let [c, h, w] = ds.sample_shape();
        let plane = h * w;
        let count = (ds.len() * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut std = vec![0.0; c];
        for sample in ds.images().data().chunks_exact(c * plane) {
            for (ch, px) in sample.chunks_exact(plane).enumerate() {
                mean[ch] += px.iter().sum::<f64>();
            }
        }
        for m in &mut mean {
            *m /= count;
        }
        for sample in ds.images().data().chunks_exact(c * plane) {
            for (ch, px) in sample.chunks_exact(plane).enumerate() {
                std[ch] += px.iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
            }
        }
        for s in &mut std {
            *s = libm::sqrt(*s / count);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, ds: &Dataset) -> (Dataset, Vec<NormalizeWarning>) {
        let [c, h, w] = ds.sample_shape();
        let plane = h * w;
        let mut warnings = Vec::new();
        let scale: Vec<f64> = self
            .std
            .iter()
            .enumerate()
            .map(|(ch, &s)| {
                if s > 0.0 {
                    1.0 / s
                } else {
                    warnings.push(NormalizeWarning::DegenerateChannel(ch));
                    1.0
                }
            })
            .collect();
        let mut out = ds.clone();
        for sample in out.images.data_mut().chunks_exact_mut(c * plane) {
            for (ch, px) in sample.chunks_exact_mut(plane).enumerate() {
                for v in px {
                    *v = (*v - self.mean[ch]) * scale[ch];
                }
            }
        }
        (out, warnings)
    }
}

/// Standardizes both splits with statistics of `train` only.
pub fn normalize(train: &Dataset, val: &Dataset) -> Result<(Dataset, Dataset, Vec<NormalizeWarning>), DataError> {
    let stats = ChannelStats::compute(train)?;
    let (train, warnings) = stats.apply(train);
    let (val, _) = stats.apply(val);
    Ok((train, val, warnings))
}

/// Stratified seeded partition. Class `k` with `n_k` samples sends
/// `round(n_k · val_fraction)` of them to validation, chosen by a shuffle
/// seeded per class. Both outputs keep the original sample order.
pub fn split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if ds.is_empty() {
        return Err(DataError::Empty);
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(DataError::InvalidArgument(alloc::format!(
            "val_fraction must be in (0, 1), got {val_fraction}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut is_val = vec![false; ds.len()];
    for (k, idx) in by_class.iter_mut().enumerate() {
        SeedRng::new(derive_seed(seed, k as u64)).shuffle(idx);
        let take = libm::round(idx.len() as f64 * val_fraction) as usize;
        for &i in &idx[..take] {
            is_val[i] = true;
        }
    }
    let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| !is_val[i]).collect();
    let val_idx: Vec<usize> = (0..ds.len()).filter(|&i| is_val[i]).collect();
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(DataError::InvalidArgument("split leaves an empty partition".into()));
    }
    Ok((
        ds.select(&train_idx).with_split_tag(SplitTag::Train),
        ds.select(&val_idx).with_split_tag(SplitTag::Validation),
    ))
}
