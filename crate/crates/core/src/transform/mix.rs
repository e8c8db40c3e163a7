//! Batch-level mixup / cutmix with soft targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::TransformError;
use crate::image::{Image, CHANNELS};
use crate::math;
use crate::rng::CounterRng;
use crate::transform::AugmentationPolicy;

#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub inputs: Vec<Image>,
    /// One row per sample, each summing to 1.
    pub targets: Vec<Vec<f32>>,
    pub op: MixOp,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MixOp {
    PassThrough,
    Mixup { lambda: f32 },
    Cutmix { lambda: f32, bbox: CutBox },
}

/// Half-open pixel box `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl CutBox {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Label-smoothed one-hot row.
pub fn smooth_one_hot(label: usize, n_classes: usize, smoothing: f32) -> Vec<f32> {
    let off = smoothing / n_classes as f32;
    let mut row = vec![off; n_classes];
    row[label] = 1.0 - smoothing + off;
    row
}

/// Chooses mixup or cutmix with equal probability (when both alphas are
/// positive), pairs sample `i` with `B - 1 - i`, and returns mixed inputs
/// with soft targets. Batches of one pass through unchanged.
pub fn mix_batch(
    inputs: &[Image],
    labels: &[usize],
    n_classes: usize,
    policy: &AugmentationPolicy,
    rng: &mut CounterRng,
) -> Result<MixedBatch, TransformError> {
    if inputs.len() != labels.len() {
        return Err(TransformError::BatchMismatch { inputs: inputs.len(), labels: labels.len() });
    }
    let targets: Vec<Vec<f32>> = labels
        .iter()
        .map(|&l| smooth_one_hot(l, n_classes, policy.label_smoothing))
        .collect();
    let use_cutmix = match (policy.mixup_alpha > 0.0, policy.cutmix_alpha > 0.0) {
        (true, true) => rng.bernoulli(0.5),
        (false, true) => true,
        (true, false) => false,
        (false, false) => return Ok(pass_through(inputs, targets)),
    };
    if inputs.len() < 2 {
        return Ok(pass_through(inputs, targets));
    }
    if use_cutmix {
        let lambda = rng.beta(policy.cutmix_alpha, policy.cutmix_alpha);
        let (w, h) = (inputs[0].width(), inputs[0].height());
        let bbox = random_box(w, h, lambda, rng);
        Ok(cutmix_with_box(inputs, &targets, bbox))
    } else {
        let lambda = rng.beta(policy.mixup_alpha, policy.mixup_alpha);
        Ok(mixup_with_lambda(inputs, &targets, lambda))
    }
}

fn pass_through(inputs: &[Image], targets: Vec<Vec<f32>>) -> MixedBatch {
    MixedBatch { inputs: inputs.to_vec(), targets, op: MixOp::PassThrough }
}

fn mix_rows(a: &[f32], b: &[f32], lambda: f32) -> Vec<f32> {
    a.iter().zip(b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect()
}

pub fn mixup_with_lambda(inputs: &[Image], targets: &[Vec<f32>], lambda: f32) -> MixedBatch {
    let n = inputs.len();
    let mut out = Vec::with_capacity(n);
    let mut soft = Vec::with_capacity(n);
    for i in 0..n {
        let j = n - 1 - i;
        let mut img = inputs[i].clone();
        for (v, o) in img.data_mut().iter_mut().zip(inputs[j].data()) {
            *v = lambda * *v + (1.0 - lambda) * o;
        }
        out.push(img);
        soft.push(mix_rows(&targets[i], &targets[j], lambda));
    }
    MixedBatch { inputs: out, targets: soft, op: MixOp::Mixup { lambda } }
}

/// Box covering a `1 - lambda` fraction of the image (before clipping),
/// centered uniformly at random.
pub fn random_box(w: usize, h: usize, lambda: f32, rng: &mut CounterRng) -> CutBox {
    let ratio = math::sqrt(1.0 - lambda);
    let cut_w = (w as f32 * ratio) as isize;
    let cut_h = (h as f32 * ratio) as isize;
    let cx = rng.below_usize(w) as isize;
    let cy = rng.below_usize(h) as isize;
    let clip = |v: isize, hi: usize| v.clamp(0, hi as isize) as usize;
    CutBox {
        x0: clip(cx - cut_w / 2, w),
        x1: clip(cx + cut_w / 2, w),
        y0: clip(cy - cut_h / 2, h),
        y1: clip(cy + cut_h / 2, h),
    }
}

/// Pastes the partner's `bbox` region into each sample; the target weight
/// of the partner equals the pasted area fraction.
pub fn cutmix_with_box(inputs: &[Image], targets: &[Vec<f32>], bbox: CutBox) -> MixedBatch {
    let n = inputs.len();
    let (w, h) = (inputs[0].width(), inputs[0].height());
    let lambda = 1.0 - bbox.area() as f32 / (w * h) as f32;
    let mut out = Vec::with_capacity(n);
    let mut soft = Vec::with_capacity(n);
    for i in 0..n {
        let j = n - 1 - i;
        let mut img = inputs[i].clone();
        for c in 0..CHANNELS {
            for y in bbox.y0..bbox.y1 {
                for x in bbox.x0..bbox.x1 {
                    img.set(c, x, y, inputs[j].get(c, x, y));
                }
            }
        }
        out.push(img);
        soft.push(mix_rows(&targets[i], &targets[j], lambda));
    }
    MixedBatch { inputs: out, targets: soft, op: MixOp::Cutmix { lambda, bbox } }
}
