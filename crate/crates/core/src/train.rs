//! Dataset-classifier training, evaluation and convergence checks.
//!
//! Labels are source-dataset indices. The number of optimizer steps is fixed
//! by [`iteration_budget`], never by epochs over the actual training set, so
//! more training images means fewer passes over each image.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use core::borrow::Borrow;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, ImageSource, SplitSpec};
use crate::error::{DatasetError, TrainError};
use crate::hash::{hash64, hash64_pair};
use crate::image::Image;
use crate::math;
use crate::model::{Classifier, ModelSpec, ReferenceCnn};
use crate::optim::{warmup_cosine, AdamW, AdamWConfig};
use crate::rng::CounterRng;
use crate::transform::mix::smooth_one_hot;
use crate::transform::{
    apply_corruption, eval_transform, mix_batch, train_transform, AugmentationPolicy, CorruptionSpec, Geometry,
};

/// ImageNet-1K train size; the reference for the step budget.
pub const IMAGENET_TRAIN_SIZE: usize = 1_281_167;
/// Smoothed-loss margin below `ln N` that counts as learning.
pub const FAILURE_DELTA: f32 = 0.05;

/// `ref_epochs × ceil(ref_dataset_size / batch_size)`.
pub fn iteration_budget(ref_epochs: usize, ref_dataset_size: usize, batch_size: usize) -> usize {
    ref_epochs * ref_dataset_size.div_ceil(batch_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f32,
    pub weight_decay: f32,
    pub betas: (f32, f32),
    pub eps: f32,
    pub batch_size: usize,
    pub ref_epochs: usize,
    pub ref_dataset_size: usize,
    pub warmup_fraction: f32,
    pub label_smoothing: f32,
    pub seed: u64,
    pub geometry: Geometry,
    /// Validation cadence as a fraction of the budget.
    pub val_every_fraction: f32,
    pub checkpoint_every_fraction: f32,
    /// Cap on training images re-evaluated for the final train accuracy.
    pub train_eval_limit: Option<usize>,
    /// Prepared (decoded + corrupted) images are kept in memory below this size.
    pub cache_bytes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            weight_decay: 0.3,
            betas: (0.9, 0.95),
            eps: 1e-8,
            batch_size: 4096,
            ref_epochs: 300,
            ref_dataset_size: IMAGENET_TRAIN_SIZE,
            warmup_fraction: 20.0 / 300.0,
            label_smoothing: 0.1,
            seed: 0,
            geometry: Geometry::default(),
            val_every_fraction: 0.02,
            checkpoint_every_fraction: 0.1,
            train_eval_limit: None,
            cache_bytes: 512 << 20,
        }
    }
}

impl TrainConfig {
    /// CPU-sized recipe: 32-pixel crops, batch 128, and the 300-epoch rule
    /// against a 256-image reference set (600 steps).
    pub fn desk() -> Self {
        Self {
            base_lr: 2e-3,
            batch_size: 128,
            ref_dataset_size: 256,
            geometry: Geometry::scaled(32),
            train_eval_limit: Some(3000),
            ..Self::default()
        }
    }

    pub fn budget(&self) -> usize {
        iteration_budget(self.ref_epochs, self.ref_dataset_size, self.batch_size)
    }

    pub fn warmup_steps(&self) -> usize {
        math::round(self.budget() as f32 * self.warmup_fraction) as usize
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.ref_epochs == 0 || self.ref_dataset_size == 0 {
            return Err(TrainError::Config("batch size, ref_epochs and ref_dataset_size must be positive".into()));
        }
        if self.geometry.crop == 0 || self.geometry.resize_shorter < self.geometry.crop {
            return Err(TrainError::Config("resize_shorter must be at least crop".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    #[default]
    Converged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub class_names: Vec<String>,
    pub iterations: usize,
    pub loss_series: Vec<f32>,
    /// `(iteration, accuracy %)` pairs.
    pub val_accuracy_series: Vec<(usize, f64)>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// `confusion[true][predicted]` on the validation split.
    pub confusion: Vec<Vec<u64>>,
    pub convergence_status: ConvergenceStatus,
    pub wall_time_secs: f64,
}

/// One class of a dataset-classification task.
pub struct ClassData<'a> {
    pub name: String,
    pub manifest: &'a DatasetManifest,
    pub source: &'a dyn ImageSource,
    pub split: SplitSpec,
    /// Per-class corruption applied before the task-wide one (used to inject
    /// a known bias).
    pub signature: CorruptionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
}

/// Labeled images of all classes with corruption applied at preparation
/// time, so every epoch sees the same corrupted pixels.
pub struct AuditData<'a> {
    classes: Vec<ClassData<'a>>,
    corruption: CorruptionSpec,
    train: Vec<(usize, usize)>,
    val: Vec<(usize, usize)>,
    train_cache: Option<Vec<Image>>,
    val_cache: Option<Vec<Image>>,
}

impl<'a> AuditData<'a> {
    pub fn new(classes: Vec<ClassData<'a>>, corruption: CorruptionSpec) -> Result<Self, TrainError> {
        if classes.len() < 2 {
            return Err(TrainError::TooFewClasses(classes.len()));
        }
        corruption.validate()?;
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (label, c) in classes.iter().enumerate() {
            c.signature.validate()?;
            c.split.check_against(c.manifest)?;
            if c.split.train_indices.is_empty() {
                return Err(TrainError::EmptyClass(label));
            }
            train.extend(c.split.train_indices.iter().map(|&i| (label, i)));
            val.extend(c.split.val_indices.iter().map(|&i| (label, i)));
        }
        Ok(Self { classes, corruption, train, val, train_cache: None, val_cache: None })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn items(&self, part: Part) -> &[(usize, usize)] {
        match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
        }
    }

    pub fn image_id(&self, label: usize, index: usize) -> &str {
        &self.classes[label].manifest.record(index).image_id
    }

    /// Decoded image with the class signature and the task corruption applied.
    pub fn prepare(&self, label: usize, index: usize) -> Result<Image, TrainError> {
        let class = &self.classes[label];
        let record = class.manifest.record(index);
        let raw = class.source.load(record)?;
        if !raw.is_valid() {
            return Err(DatasetError::Load(record.image_id.clone()).into());
        }
        let signed = apply_corruption(&raw, &class.signature, &record.image_id)?;
        Ok(apply_corruption(&signed, &self.corruption, &record.image_id)?)
    }

    pub fn prepared(&self, part: Part, position: usize) -> Result<Image, TrainError> {
        let cache = match part {
            Part::Train => &self.train_cache,
            Part::Val => &self.val_cache,
        };
        if let Some(cache) = cache {
            return Ok(cache[position].clone());
        }
        let (label, index) = self.items(part)[position];
        self.prepare(label, index)
    }

    /// Keeps prepared images in memory when their estimated size fits.
    pub fn materialize(&mut self, max_bytes: usize) -> Result<bool, TrainError> {
        let bytes: usize = self
            .train
            .iter()
            .chain(&self.val)
            .map(|&(l, i)| {
                let r = self.classes[l].manifest.record(i);
                r.width as usize * r.height as usize * 3 * 4
            })
            .sum();
        if bytes > max_bytes {
            return Ok(false);
        }
        let train = self.train.iter().map(|&(l, i)| self.prepare(l, i)).collect::<Result<Vec<_>, _>>()?;
        let val = self.val.iter().map(|&(l, i)| self.prepare(l, i)).collect::<Result<Vec<_>, _>>()?;
        self.train_cache = Some(train);
        self.val_cache = Some(val);
        Ok(true)
    }

    /// `(eval-transformed input, label)` for every item of `part`.
    pub fn eval_inputs(&self, part: Part, geometry: &Geometry) -> Result<Vec<(Image, usize)>, TrainError> {
        (0..self.items(part).len())
            .map(|p| Ok((eval_transform(&self.prepared(part, p)?, geometry), self.items(part)[p].0)))
            .collect()
    }
}

/// Endless stream of shuffled epochs over `n` items.
#[derive(Debug, Clone)]
pub struct BatchStream {
    n: usize,
    batch: usize,
    key: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchStream {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut s = Self { n, batch, key: hash64(seed, "batch-order"), epoch: 0, order: Vec::new(), cursor: 0 };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        CounterRng::new(self.key).fork(self.epoch).shuffle(&mut self.order);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.batch);
        while out.len() < self.batch {
            if self.cursor == self.n {
                self.epoch += 1;
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Hooks for metrics and checkpoint persistence.
pub trait TrainObserver {
    fn on_iteration(&mut self, _iteration: usize, _loss: f32, _lr: f32) {}
    fn on_validation(&mut self, _iteration: usize, _accuracy: f64) {}
    /// Called every `checkpoint_every_fraction` of the budget and at the end.
    fn on_checkpoint(&mut self, _iteration: usize, _model: &ReferenceCnn) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
    pub total: u64,
}

/// Scores each input on its own; accuracy is `correct / total × 100`.
pub fn evaluate<C, I>(model: &C, items: I) -> Result<EvalResult, TrainError>
where
    C: Classifier + ?Sized,
    I: IntoIterator,
    I::Item: Borrow<(Image, usize)>,
{
    let n = model.num_classes();
    let mut confusion = vec![vec![0u64; n]; n];
    let mut total = 0;
    for item in items {
        let (input, label) = item.borrow();
        if *label >= n {
            return Err(TrainError::ClassMismatch { model: n, splits: label + 1 });
        }
        confusion[*label][model.predict(input)] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(TrainError::EmptyValidation);
    }
    let correct: u64 = (0..n).map(|i| confusion[i][i]).sum();
    Ok(EvalResult { accuracy: correct as f64 / total as f64 * 100.0, confusion, total })
}

/// Trailing moving average over `window` points.
pub fn smooth(series: &[f32], window: usize) -> Vec<f32> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0f64;
    for (i, &v) in series.iter().enumerate() {
        acc += f64::from(v);
        if i >= w {
            acc -= f64::from(series[i - w]);
        }
        out.push((acc / (i + 1).min(w) as f64) as f32);
    }
    out
}

/// `Failed` iff the smoothed loss (window 2% of the budget) never drops below
/// `ln N − 0.05` within the first half of the budget. Needs at least 10% of
/// the budget to have elapsed.
pub fn detect_failure(loss_series: &[f32], n_classes: usize, budget: usize) -> Result<ConvergenceStatus, TrainError> {
    if loss_series.len() * 10 < budget || loss_series.is_empty() {
        return Err(TrainError::TooEarly { elapsed: loss_series.len(), budget });
    }
    let threshold = math::ln(n_classes as f32) - FAILURE_DELTA;
    let horizon = loss_series.len().min(budget.div_ceil(2));
    let smoothed = smooth(&loss_series[..horizon], budget / 50);
    if smoothed.iter().any(|&l| l < threshold) {
        Ok(ConvergenceStatus::Converged)
    } else {
        Ok(ConvergenceStatus::Failed)
    }
}

fn every(budget: usize, fraction: f32) -> usize {
    (math::round(budget as f32 * fraction) as usize).max(1)
}

/// Trains an N-way dataset classifier on `data` (N = number of classes).
pub fn train_classifier(
    data: &AuditData<'_>,
    model_spec: &ModelSpec,
    cfg: &TrainConfig,
    policy: &AugmentationPolicy,
    observer: &mut dyn TrainObserver,
) -> Result<(ReferenceCnn, RunRecord), TrainError> {
    cfg.validate()?;
    let n_classes = data.num_classes();
    if model_spec.num_classes != n_classes {
        return Err(TrainError::ClassMismatch { model: model_spec.num_classes, splits: n_classes });
    }
    let mut model = ReferenceCnn::new(model_spec, hash64(cfg.seed, "model-init"))?;
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.base_lr,
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
        },
        model.decay_mask(),
    );
    let mut policy = *policy;
    policy.label_smoothing = cfg.label_smoothing;

    let budget = cfg.budget();
    let warmup = cfg.warmup_steps();
    let val_every = every(budget, cfg.val_every_fraction);
    let ckpt_every = every(budget, cfg.checkpoint_every_fraction);
    let val_inputs = if data.items(Part::Val).is_empty() { Vec::new() } else { data.eval_inputs(Part::Val, &cfg.geometry)? };

    let train_items = data.items(Part::Train);
    let mut stream = BatchStream::new(train_items.len(), cfg.batch_size, cfg.seed);
    let aug_key = hash64(cfg.seed, "augment");
    let mix_key = hash64(cfg.seed, "mix");
    let mut grads = vec![0.0f32; model.param_count()];
    let mut loss_series = Vec::with_capacity(budget);
    let mut val_series = Vec::new();

    for it in 0..budget {
        let batch = stream.next_batch();
        let mut inputs = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for (slot, &pos) in batch.iter().enumerate() {
            let img = data.prepared(Part::Train, pos)?;
            let mut rng = CounterRng::new(hash64_pair(aug_key, (it * cfg.batch_size + slot) as u64));
            inputs.push(train_transform(&img, &policy, &cfg.geometry, &mut rng));
            labels.push(train_items[pos].0);
        }
        let (inputs, targets) = if policy.uses_mix() {
            let mixed = mix_batch(&inputs, &labels, n_classes, &policy, &mut CounterRng::new(hash64_pair(mix_key, it as u64)))?;
            (mixed.inputs, mixed.targets)
        } else {
            let targets = labels.iter().map(|&l| smooth_one_hot(l, n_classes, policy.label_smoothing)).collect();
            (inputs, targets)
        };

        grads.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / inputs.len() as f32;
        let mut loss = 0.0;
        for (x, t) in inputs.iter().zip(&targets) {
            loss += model.accumulate_gradients(x, t, scale, &mut grads) * scale;
        }
        let lr = warmup_cosine(it, budget, warmup, cfg.base_lr);
        opt.step(model.params_mut(), &grads, lr);
        loss_series.push(loss);
        observer.on_iteration(it, loss, lr);

        let done = it + 1;
        if !val_inputs.is_empty() && (done % val_every == 0 || done == budget) {
            let acc = evaluate(&model, &val_inputs)?.accuracy;
            val_series.push((done, acc));
            observer.on_validation(done, acc);
        }
        if done % ckpt_every == 0 || done == budget {
            observer.on_checkpoint(done, &model);
        }
    }

    let (val_accuracy, confusion) = if val_inputs.is_empty() {
        (f64::NAN, vec![vec![0; n_classes]; n_classes])
    } else {
        let r = evaluate(&model, &val_inputs)?;
        (r.accuracy, r.confusion)
    };
    let train_accuracy = train_accuracy(&model, data, cfg)?;
    let convergence_status = detect_failure(&loss_series, n_classes, budget)?;
    let record = RunRecord {
        config_hash: String::new(),
        class_names: data.class_names(),
        iterations: budget,
        loss_series,
        val_accuracy_series: val_series,
        train_accuracy,
        val_accuracy,
        confusion,
        convergence_status,
        wall_time_secs: 0.0,
    };
    Ok((model, record))
}

/// Accuracy on (a deterministic subset of) the training images under the
/// eval transform.
fn train_accuracy(model: &ReferenceCnn, data: &AuditData<'_>, cfg: &TrainConfig) -> Result<f64, TrainError> {
    let n = data.items(Part::Train).len();
    let mut positions: Vec<usize> = (0..n).collect();
    if let Some(limit) = cfg.train_eval_limit.filter(|&l| l < n) {
        CounterRng::new(hash64(cfg.seed, "train-eval")).partial_shuffle(&mut positions, limit);
        positions.truncate(limit);
    }
    let items = positions.iter().map(|&p| -> Result<(Image, usize), TrainError> {
        Ok((eval_transform(&data.prepared(Part::Train, p)?, &cfg.geometry), data.items(Part::Train)[p].0))
    });
    let mut correct = 0u64;
    let mut total = 0u64;
    for item in items {
        let (x, label) = item?;
        correct += u64::from(model.predict(&x) == label);
        total += 1;
    }
    Ok(correct as f64 / total as f64 * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_rule() {
        assert_eq!(iteration_budget(300, 1_281_167, 4096), 93_900);
        assert_eq!(iteration_budget(1, 4096, 4096), 1);
        assert_eq!(iteration_budget(300, 1_281_167, 256), 1_501_500);
        assert_eq!(TrainConfig::default().budget(), 93_900);
        assert_eq!(TrainConfig::default().warmup_steps(), 6260);
    }

    #[test]
    fn failure_detection() {
        let budget = 1000;
        let flat = vec![3f32.ln(); 600];
        assert_eq!(detect_failure(&flat, 3, budget).unwrap(), ConvergenceStatus::Failed);
        let decaying: Vec<f32> = (0..600)
            .map(|i| if i < 300 { 1.0986 - (1.0986 - 0.1) * i as f32 / 300.0 } else { 0.1 })
            .collect();
        assert_eq!(detect_failure(&decaying, 3, budget).unwrap(), ConvergenceStatus::Converged);
        assert!(matches!(detect_failure(&flat[..50], 3, budget), Err(TrainError::TooEarly { .. })));
        // Progress only after the halfway mark does not count.
        let late: Vec<f32> = (0..1000).map(|i| if i < 600 { 1.1 } else { 0.2 }).collect();
        assert_eq!(detect_failure(&late, 3, budget).unwrap(), ConvergenceStatus::Failed);
    }

    #[test]
    fn batch_stream_covers_each_epoch() {
        let mut s = BatchStream::new(10, 4, 1);
        let mut seen: Vec<usize> = Vec::new();
        for _ in 0..5 {
            seen.extend(s.next_batch());
        }
        let mut first: Vec<_> = seen[..10].to_vec();
        first.sort_unstable();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        let mut second: Vec<_> = seen[10..20].to_vec();
        second.sort_unstable();
        assert_eq!(second, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn smoothing_window() {
        let s = smooth(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(s, [1.0, 1.5, 2.5, 3.5]);
    }
}
