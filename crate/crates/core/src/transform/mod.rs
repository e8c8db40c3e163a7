//! Corruptions, training augmentation and the fixed inference transform.

pub mod corruption;
pub mod mix;
pub mod randaug;

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::math;
use crate::rng::CounterRng;

pub use corruption::{apply_corruption, CorruptionKind, CorruptionSpec};
pub use mix::{mix_batch, MixedBatch};

/// Resize-then-crop sizes. The full-scale protocol is shorter side 256, crop
/// 224; desk-scale runs keep the same 256/224 ratio at a smaller crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub resize_shorter: usize,
    pub crop: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { resize_shorter: 256, crop: 224 }
    }
}

impl Geometry {
    /// `crop` with the shorter-side resize scaled by 256/224.
    pub fn scaled(crop: usize) -> Self {
        Self { resize_shorter: (crop * 256 + 112) / 224, crop }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentationLevel {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "rand_crop")]
    RandCrop,
    #[serde(rename = "rand_crop+rand_aug")]
    RandCropRandAug,
    #[serde(rename = "rand_crop+rand_aug+mix")]
    RandCropRandAugMix,
}

impl AugmentationLevel {
    pub const ALL: [AugmentationLevel; 4] = [Self::None, Self::RandCrop, Self::RandCropRandAug, Self::RandCropRandAugMix];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::RandCrop => "rand_crop",
            Self::RandCropRandAug => "rand_crop+rand_aug",
            Self::RandCropRandAugMix => "rand_crop+rand_aug+mix",
        }
    }

    /// Row label in the augmentation table.
    pub fn table_label(self) -> &'static str {
        match self {
            Self::None => "no aug",
            Self::RandCrop => "w/ RandCrop",
            Self::RandCropRandAug => "w/ RandCrop, RandAug",
            Self::RandCropRandAugMix => "w/ RandCrop, RandAug, MixUp/CutMix",
        }
    }
}

impl fmt::Display for AugmentationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    pub level: AugmentationLevel,
    pub rand_aug_num_ops: usize,
    pub rand_aug_magnitude: f32,
    pub rand_aug_prob: f32,
    pub hflip: bool,
    pub mixup_alpha: f32,
    pub cutmix_alpha: f32,
    pub label_smoothing: f32,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self::new(AugmentationLevel::RandCropRandAugMix)
    }
}

impl AugmentationPolicy {
    /// Recipe defaults: RandAug (9, 0.5), mixup 0.8, cutmix 1.0, label smoothing 0.1.
    pub fn new(level: AugmentationLevel) -> Self {
        Self {
            level,
            rand_aug_num_ops: 2,
            rand_aug_magnitude: 9.0,
            rand_aug_prob: 0.5,
            hflip: true,
            mixup_alpha: 0.8,
            cutmix_alpha: 1.0,
            label_smoothing: 0.1,
        }
    }

    pub fn uses_mix(&self) -> bool {
        self.level >= AugmentationLevel::RandCropRandAugMix
    }
}

/// Aspect-preserving resize so the shorter side is `resize_shorter`, then the
/// central `crop × crop` window.
pub fn eval_transform(image: &Image, geometry: &Geometry) -> Image {
    image.resize_shorter_side(geometry.resize_shorter).center_crop(geometry.crop)
}

/// Training-time input: the eval path for level `none`; otherwise a random
/// resized crop (scale 0.08-1, ratio 3/4-4/3) plus optional flip, followed by
/// RandAugment from level `rand_crop+rand_aug` up. Deterministic in `rng`.
pub fn train_transform(image: &Image, policy: &AugmentationPolicy, geometry: &Geometry, rng: &mut CounterRng) -> Image {
    if policy.level == AugmentationLevel::None {
        return eval_transform(image, geometry);
    }
    let crop = geometry.crop;
    let upscaled;
    let src = if image.width().min(image.height()) < crop {
        upscaled = image.resize_shorter_side(crop);
        &upscaled
    } else {
        image
    };
    let mut out = random_resized_crop(src, crop, (0.08, 1.0), (0.75, 4.0 / 3.0), rng);
    if policy.hflip && rng.bernoulli(0.5) {
        out = out.flip_horizontal();
    }
    if policy.level >= AugmentationLevel::RandCropRandAug {
        out = randaug::rand_augment(&out, policy.rand_aug_num_ops, policy.rand_aug_magnitude, policy.rand_aug_prob, rng);
    }
    out
}

/// Samples area fraction and log-uniform aspect ratio, retrying ten times
/// before falling back to the largest centered crop within the ratio bounds.
pub fn random_resized_crop(
    image: &Image,
    size: usize,
    scale: (f32, f32),
    ratio: (f32, f32),
    rng: &mut CounterRng,
) -> Image {
    let (w, h) = (image.width(), image.height());
    let area = (w * h) as f32;
    let (log_lo, log_hi) = (math::ln(ratio.0), math::ln(ratio.1));
    for _ in 0..10 {
        let target = area * rng.uniform(scale.0, scale.1);
        let aspect = math::exp(rng.uniform(log_lo, log_hi));
        let cw = math::round(math::sqrt(target * aspect)) as usize;
        let ch = math::round(math::sqrt(target / aspect)) as usize;
        if cw > 0 && ch > 0 && cw <= w && ch <= h {
            let x0 = rng.below_usize(w - cw + 1);
            let y0 = rng.below_usize(h - ch + 1);
            return image.crop(x0, y0, cw, ch).resize_bilinear(size, size);
        }
    }
    let in_ratio = w as f32 / h as f32;
    let (cw, ch) = if in_ratio < ratio.0 {
        (w, (math::round(w as f32 / ratio.0) as usize).clamp(1, h))
    } else if in_ratio > ratio.1 {
        ((math::round(h as f32 * ratio.1) as usize).clamp(1, w), h)
    } else {
        (w, h)
    };
    image.crop((w - cw) / 2, (h - ch) / 2, cw, ch).resize_bilinear(size, size)
}
