//! Linear probing on frozen features.
//!
//! Features are standardized with statistics fit on the training rows only,
//! then a single softmax layer is trained with momentum SGD and a cosine
//! learning-rate decay. The reported accuracy is the best held-out accuracy
//! over the (layer, base learning rate) grid.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::ProbeError;
use crate::hash::hash64;
use crate::image::Image;
use crate::math;
use crate::model::{argmax, softmax, FeatureExtractor};
use crate::rng::CounterRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub base_lrs: Vec<f32>,
    /// 1-based block indices relative to a `reference_depth`-block backbone.
    pub layers: Vec<usize>,
    pub reference_depth: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f32,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            base_lrs: vec![0.1, 0.2, 0.3],
            layers: vec![8, 9, 10],
            reference_depth: 12,
            epochs: 90,
            batch_size: 256,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    /// Maps the configured layers onto a backbone with `num_layers`
    /// selectable layers (0-based, deduplicated, ascending).
    pub fn layer_indices(&self, num_layers: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .layers
            .iter()
            .map(|&l| {
                let scaled = math::round(l as f32 * num_layers as f32 / self.reference_depth as f32) as usize;
                scaled.clamp(1, num_layers) - 1
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, ProbeError> {
        if data.len() != rows * cols {
            return Err(ProbeError::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, ProbeError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(ProbeError::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// One feature row per image, in input order.
pub fn extract_features<E: FeatureExtractor + ?Sized>(
    extractor: &E,
    images: &[Image],
    layer: usize,
) -> Result<FeatureMatrix, ProbeError> {
    let cols = extractor.feature_dim(layer)?;
    let mut data = Vec::with_capacity(images.len() * cols);
    for img in images {
        let f = extractor.extract(img, layer)?;
        if f.len() != cols {
            return Err(ProbeError::DimensionMismatch { expected: cols, found: f.len() });
        }
        data.extend_from_slice(&f);
    }
    Ok(FeatureMatrix { rows: images.len(), cols, data })
}

#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f32>,
    inv_std: Vec<f32>,
}

impl Standardizer {
    /// Columns with (near) zero variance map to 0.
    fn fit(x: &FeatureMatrix) -> Self {
        let n = x.rows as f64;
        let mut mean = vec![0.0f64; x.cols];
        let mut var = vec![0.0f64; x.cols];
        for r in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += f64::from(*v) / n;
            }
        }
        for r in 0..x.rows {
            for ((s, m), v) in var.iter_mut().zip(&mean).zip(x.row(r)) {
                *s += (f64::from(*v) - m) * (f64::from(*v) - m) / n;
            }
        }
        let inv_std = var
            .iter()
            .zip(&mean)
            .map(|(&v, &m)| {
                let scale = 1.0 + m.abs();
                if v <= 1e-12 * scale * scale { 0.0 } else { 1.0 / math::sqrt(v as f32) }
            })
            .collect();
        Self { mean: mean.into_iter().map(|m| m as f32).collect(), inv_std }
    }

    fn is_degenerate(&self) -> bool {
        self.inv_std.iter().all(|&s| s == 0.0)
    }

    fn apply(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut out = x.clone();
        for r in 0..x.rows {
            let row = &mut out.data[r * x.cols..(r + 1) * x.cols];
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        out
    }
}

/// Weights `n_classes × (cols + 1)`; the last column is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub n_classes: usize,
    pub cols: usize,
    pub weights: Vec<f32>,
}

impl LinearHead {
    pub fn logits(&self, x: &[f32]) -> Vec<f32> {
        let d = self.cols + 1;
        (0..self.n_classes)
            .map(|k| {
                let w = &self.weights[k * d..(k + 1) * d];
                w[self.cols] + w[..self.cols].iter().zip(x).map(|(a, b)| a * b).sum::<f32>()
            })
            .collect()
    }

    pub fn accuracy(&self, x: &FeatureMatrix, labels: &[usize]) -> f64 {
        let correct = (0..x.rows).filter(|&r| argmax(&self.logits(x.row(r))) == labels[r]).count();
        correct as f64 / x.rows as f64 * 100.0
    }
}

/// Softmax regression by mini-batch momentum SGD with cosine decay.
pub fn train_linear(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    base_lr: f32,
    cfg: &ProbeConfig,
) -> LinearHead {
    let d = x.cols + 1;
    let mut head = LinearHead { n_classes, cols: x.cols, weights: vec![0.0; n_classes * d] };
    let mut velocity = vec![0.0f32; head.weights.len()];
    let mut grad = vec![0.0f32; head.weights.len()];
    let batch = cfg.batch_size.clamp(1, x.rows.max(1));
    let steps_per_epoch = x.rows.div_ceil(batch);
    let total = (cfg.epochs * steps_per_epoch).max(1);
    let mut order: Vec<usize> = (0..x.rows).collect();
    let key = hash64(cfg.seed, "probe-order");
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        CounterRng::new(key).fork(epoch as u64).shuffle(&mut order);
        for chunk in order.chunks(batch) {
            let lr = 0.5 * base_lr * (1.0 + math::cos(core::f32::consts::PI * step as f32 / total as f32));
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &r in chunk {
                let xi = x.row(r);
                let p = softmax(&head.logits(xi));
                for k in 0..n_classes {
                    let g = (p[k] - f32::from(u8::from(labels[r] == k))) / chunk.len() as f32;
                    let gk = &mut grad[k * d..(k + 1) * d];
                    for j in 0..x.cols {
                        gk[j] += g * xi[j];
                    }
                    gk[x.cols] += g;
                }
            }
            for ((w, v), g) in head.weights.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *w -= lr * *v;
            }
            step += 1;
        }
    }
    head
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    pub layer: usize,
    pub base_lr: f32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Max over `cells`.
    pub accuracy: f64,
    pub cells: Vec<ProbeCell>,
    /// True when every swept layer had zero-variance features; accuracy is
    /// then chance.
    pub degenerate: bool,
}

/// Train/val features of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerFeatures {
    pub layer: usize,
    pub train: FeatureMatrix,
    pub val: FeatureMatrix,
}

fn check(x: &FeatureMatrix, labels: &[usize]) -> Result<(), ProbeError> {
    if x.rows == 0 {
        return Err(ProbeError::Empty);
    }
    if x.rows != labels.len() {
        return Err(ProbeError::LabelMismatch { rows: x.rows, labels: labels.len() });
    }
    Ok(())
}

/// Sweeps base learning rates over every layer and keeps the best held-out
/// accuracy.
pub fn probe_sweep(
    layers: &[LayerFeatures],
    train_labels: &[usize],
    val_labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, ProbeError> {
    if layers.is_empty() || cfg.base_lrs.is_empty() {
        return Err(ProbeError::EmptySweep);
    }
    let chance = 100.0 / n_classes as f64;
    let mut cells = Vec::new();
    let mut degenerate = true;
    for lf in layers {
        check(&lf.train, train_labels)?;
        check(&lf.val, val_labels)?;
        if lf.train.cols != lf.val.cols {
            return Err(ProbeError::DimensionMismatch { expected: lf.train.cols, found: lf.val.cols });
        }
        let std = Standardizer::fit(&lf.train);
        if std.is_degenerate() {
            cells.extend(cfg.base_lrs.iter().map(|&base_lr| ProbeCell { layer: lf.layer, base_lr, accuracy: chance }));
            continue;
        }
        degenerate = false;
        let train = std.apply(&lf.train);
        let val = std.apply(&lf.val);
        for &base_lr in &cfg.base_lrs {
            let head = train_linear(&train, train_labels, n_classes, base_lr, cfg);
            cells.push(ProbeCell { layer: lf.layer, base_lr, accuracy: head.accuracy(&val, val_labels) });
        }
    }
    let accuracy = if degenerate { chance } else { cells.iter().map(|c| c.accuracy).fold(f64::MIN, f64::max) };
    Ok(ProbeReport { accuracy, cells, degenerate })
}

/// Single-layer probe.
pub fn linear_probe(
    train: &FeatureMatrix,
    train_labels: &[usize],
    val: &FeatureMatrix,
    val_labels: &[usize],
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, ProbeError> {
    let lf = LayerFeatures { layer: 0, train: train.clone(), val: val.clone() };
    probe_sweep(core::slice::from_ref(&lf), train_labels, val_labels, n_classes, cfg)
}

/// Labeled images for a transfer probe.
pub struct LabeledImages<'a> {
    pub images: &'a [Image],
    pub labels: &'a [usize],
}

/// Probes the frozen extractor at the configured (mapped) layers.
pub fn probe_extractor<E: FeatureExtractor + ?Sized>(
    extractor: &E,
    train: &LabeledImages<'_>,
    val: &LabeledImages<'_>,
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<ProbeReport, ProbeError> {
    let layers = cfg
        .layer_indices(extractor.num_layers())
        .into_iter()
        .map(|layer| {
            Ok(LayerFeatures {
                layer,
                train: extract_features(extractor, train.images, layer)?,
                val: extract_features(extractor, val.images, layer)?,
            })
        })
        .collect::<Result<Vec<_>, ProbeError>>()?;
    probe_sweep(&layers, train.labels, val.labels, n_classes, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub trained: ProbeReport,
    pub random: ProbeReport,
}

/// Probes a dataset classifier's backbone on semantic labels, alongside the
/// same architecture with random weights.
pub fn transfer_probe<E: FeatureExtractor + ?Sized>(
    trained: &E,
    random: &E,
    train: &LabeledImages<'_>,
    val: &LabeledImages<'_>,
    n_classes: usize,
    cfg: &ProbeConfig,
) -> Result<TransferReport, ProbeError> {
    Ok(TransferReport {
        trained: probe_extractor(trained, train, val, n_classes, cfg)?,
        random: probe_extractor(random, train, val, n_classes, cfg)?,
    })
}
