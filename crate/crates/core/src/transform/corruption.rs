//! Deterministic per-image corruptions applied to train and val data alike.
//!
//! Unlike augmentation there is no per-epoch randomness: the output is a pure
//! function of `(image, spec, image_id)`.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::TransformError;
use crate::hash::hash64;
use crate::image::{Image, CHANNELS};
use crate::math;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    None,
    ColorJitter,
    GaussianNoise,
    GaussianBlur,
    LowResolution,
}

impl CorruptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ColorJitter => "color_jitter",
            Self::GaussianNoise => "gaussian_noise",
            Self::GaussianBlur => "gaussian_blur",
            Self::LowResolution => "low_resolution",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorruptionKind {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Self::None,
            "color_jitter" => Self::ColorJitter,
            "gaussian_noise" => Self::GaussianNoise,
            "gaussian_blur" => Self::GaussianBlur,
            "low_resolution" => Self::LowResolution,
            other => return Err(TransformError::UnknownKind(other.to_string())),
        })
    }
}

/// One corruption and its parameter: jitter strength, noise std (fraction of
/// the `[0, 1]` range), blur radius in pixels, or low-resolution side length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    #[serde(default)]
    pub parameter: f32,
    #[serde(default)]
    pub per_image_seed_base: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl CorruptionSpec {
    pub const fn none() -> Self {
        Self { kind: CorruptionKind::None, parameter: 0.0, per_image_seed_base: 0 }
    }

    pub const fn new(kind: CorruptionKind, parameter: f32) -> Self {
        Self { kind, parameter, per_image_seed_base: 0 }
    }

    pub const fn color_jitter(strength: f32) -> Self {
        Self::new(CorruptionKind::ColorJitter, strength)
    }

    pub const fn gaussian_noise(std: f32) -> Self {
        Self::new(CorruptionKind::GaussianNoise, std)
    }

    pub const fn gaussian_blur(radius: f32) -> Self {
        Self::new(CorruptionKind::GaussianBlur, radius)
    }

    pub const fn low_resolution(side: f32) -> Self {
        Self::new(CorruptionKind::LowResolution, side)
    }

    pub fn with_seed_base(mut self, seed: u64) -> Self {
        self.per_image_seed_base = seed;
        self
    }

    pub fn is_none(&self) -> bool {
        self.kind == CorruptionKind::None
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if self.kind != CorruptionKind::None && !(self.parameter > 0.0) {
            return Err(TransformError::NonPositiveParameter(self.parameter));
        }
        Ok(())
    }

    /// Short human label, e.g. `gaussian_blur(3)`.
    pub fn label(&self) -> alloc::string::String {
        if self.is_none() {
            "none".into()
        } else {
            alloc::format!("{}({})", self.kind, self.parameter)
        }
    }
}

/// Applies `spec` to a 3-channel image in `[0, 1]`. Output has the input's
/// dimensions and is clipped to `[0, 1]`.
pub fn apply_corruption(image: &Image, spec: &CorruptionSpec, image_id: &str) -> Result<Image, TransformError> {
    spec.validate()?;
    if !image.is_valid() {
        return Err(TransformError::BadImage);
    }
    let mut rng = CounterRng::new(hash64(spec.per_image_seed_base, image_id));
    let out = match spec.kind {
        CorruptionKind::None => return Ok(image.clone()),
        CorruptionKind::ColorJitter => color_jitter(image, spec.parameter, &mut rng),
        CorruptionKind::GaussianNoise => {
            let mut out = image.clone();
            for v in out.data_mut() {
                *v += spec.parameter * rng.normal();
            }
            out
        }
        CorruptionKind::GaussianBlur => gaussian_blur(image, spec.parameter),
        CorruptionKind::LowResolution => {
            let side = (math::round(spec.parameter) as usize).max(1);
            image.resize_bilinear(side, side).resize_bilinear(image.width(), image.height())
        }
    };
    let mut out = out;
    out.clamp01();
    Ok(out)
}

/// Brightness, contrast and saturation factors are drawn from
/// `[max(0, 1 - 0.4 s), 1 + 0.4 s]`, hue shift from `[-0.1 s, 0.1 s]` of a
/// full turn, applied in that fixed order.
pub fn color_jitter(image: &Image, strength: f32, rng: &mut CounterRng) -> Image {
    let lo = (1.0 - 0.4 * strength).max(0.0);
    let hi = 1.0 + 0.4 * strength;
    let brightness = rng.uniform(lo, hi);
    let contrast = rng.uniform(lo, hi);
    let saturation = rng.uniform(lo, hi);
    let hue = rng.uniform(-0.1 * strength, 0.1 * strength);
    let mut out = image.clone();
    adjust_brightness(&mut out, brightness);
    adjust_contrast(&mut out, contrast);
    adjust_saturation(&mut out, saturation);
    adjust_hue(&mut out, hue);
    out
}

pub(crate) fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub(crate) fn adjust_brightness(img: &mut Image, factor: f32) {
    img.map(|v| math::clamp01(v * factor));
}

pub(crate) fn adjust_contrast(img: &mut Image, factor: f32) {
    let n = img.width() * img.height();
    let mut sum = 0.0f64;
    for p in 0..n {
        let d = img.data();
        sum += f64::from(luma(d[p], d[n + p], d[2 * n + p]));
    }
    let mean = (sum / n as f64) as f32;
    img.map(|v| math::clamp01((v - mean) * factor + mean));
}

pub(crate) fn adjust_saturation(img: &mut Image, factor: f32) {
    let n = img.width() * img.height();
    let d = img.data_mut();
    for p in 0..n {
        let g = luma(d[p], d[n + p], d[2 * n + p]);
        for c in 0..CHANNELS {
            let v = &mut d[c * n + p];
            *v = math::clamp01((*v - g) * factor + g);
        }
    }
}

/// Rotates hue by `shift` turns through HSV space.
pub(crate) fn adjust_hue(img: &mut Image, shift: f32) {
    if shift == 0.0 {
        return;
    }
    let n = img.width() * img.height();
    let d = img.data_mut();
    for p in 0..n {
        let (h, s, v) = rgb_to_hsv(d[p], d[n + p], d[2 * n + p]);
        let mut h = h + shift;
        h -= math::floor(h);
        let (r, g, b) = hsv_to_rgb(h, s, v);
        d[p] = r;
        d[n + p] = g;
        d[2 * n + p] = b;
    }
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta <= 0.0 {
        0.0
    } else if max == r {
        let h = (g - b) / delta / 6.0;
        if h < 0.0 {
            h + 1.0
        } else {
            h
        }
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h * 6.0;
    let i = math::floor(h6);
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match (i as i32).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Normalized kernel of size `2r + 1` with `sigma = r / 2`.
pub fn blur_kernel(radius: usize) -> Vec<f32> {
    let sigma = (radius as f32 / 2.0).max(1e-3);
    let mut k: Vec<f32> = (0..=2 * radius)
        .map(|i| {
            let d = i as f32 - radius as f32;
            math::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Mirror index without edge repetition (`-1 -> 1`), periodic for offsets
/// larger than the axis.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(image: &Image, radius: f32) -> Image {
    let r = (math::round(radius) as usize).max(1);
    let kernel = blur_kernel(r);
    let (w, h) = (image.width(), image.height());
    let mut tmp = Image::new(w, h);
    let mut out = Image::new(w, h);
    for c in 0..CHANNELS {
        let src = image.plane(c);
        let mid = tmp.plane_mut(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    acc += kv * row[reflect(x as isize + t as isize - r as isize, w)];
                }
                mid[y * w + x] = acc;
            }
        }
        let mid = tmp.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (t, kv) in kernel.iter().enumerate() {
                    acc += kv * mid[reflect(y as isize + t as isize - r as isize, h) * w + x];
                }
                dst[y * w + x] = acc;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |c, x, y| (x + 2 * y + c) as f32 / (w + 2 * h + 3) as f32)
    }

    #[test]
    fn none_is_identity() {
        let img = ramp(9, 7);
        assert_eq!(apply_corruption(&img, &CorruptionSpec::none(), "a").unwrap(), img);
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = Image::filled(20, 15, [0.5; 3]);
        let out = apply_corruption(&img, &CorruptionSpec::gaussian_blur(3.0), "x").unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.5).abs() < 1e-6));
    }

    #[test]
    fn deterministic_per_image_id() {
        let img = ramp(16, 16);
        let spec = CorruptionSpec::gaussian_noise(0.2).with_seed_base(11);
        let a = apply_corruption(&img, &spec, "img-1").unwrap();
        assert_eq!(a, apply_corruption(&img, &spec, "img-1").unwrap());
        assert_ne!(a, apply_corruption(&img, &spec, "img-2").unwrap());
        let jit = CorruptionSpec::color_jitter(1.0);
        assert_eq!(apply_corruption(&img, &jit, "q").unwrap(), apply_corruption(&img, &jit, "q").unwrap());
    }

    #[test]
    fn parameter_validation() {
        let img = ramp(4, 4);
        assert_eq!(
            apply_corruption(&img, &CorruptionSpec::gaussian_blur(0.0), "a"),
            Err(TransformError::NonPositiveParameter(0.0))
        );
        assert!(apply_corruption(&img, &CorruptionSpec::gaussian_noise(-0.1), "a").is_err());
        assert!(matches!("sepia".parse::<CorruptionKind>(), Err(TransformError::UnknownKind(_))));
        assert_eq!("low_resolution".parse::<CorruptionKind>().unwrap(), CorruptionKind::LowResolution);
    }

    #[test]
    fn shape_preserved() {
        let img = ramp(37, 23);
        for spec in [
            CorruptionSpec::color_jitter(2.0),
            CorruptionSpec::gaussian_noise(0.3),
            CorruptionSpec::gaussian_blur(5.0),
            CorruptionSpec::low_resolution(8.0),
        ] {
            let out = apply_corruption(&img, &spec, "id").unwrap();
            assert_eq!((out.width(), out.height()), (37, 23));
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn zero_strength_jitter_is_identity() {
        let img = ramp(8, 8);
        let out = color_jitter(&img, 0.0, &mut CounterRng::new(1));
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn hsv_round_trip() {
        for &(r, g, b) in &[(0.2f32, 0.4f32, 0.9f32), (1.0, 0.0, 0.0), (0.5, 0.5, 0.5), (0.1, 0.8, 0.3)] {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            let (r2, g2, b2) = hsv_to_rgb(h, s, v);
            assert!((r - r2).abs() < 1e-5 && (g - g2).abs() < 1e-5 && (b - b2).abs() < 1e-5);
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(-7, 3), 1);
        assert_eq!(reflect(3, 1), 0);
    }
}
