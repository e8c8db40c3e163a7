//! RandAugment over the "increasing magnitude" op set.
//!
//! `num_ops` ops are drawn uniformly with replacement; each is applied with
//! probability `prob` at magnitude `m / 10` of its range. Signed ops flip
//! direction with probability one half.

use alloc::vec;

use crate::image::{Image, CHANNELS};
use crate::math;
use crate::rng::CounterRng;
use crate::transform::corruption::{adjust_brightness, adjust_contrast, adjust_saturation};

pub const MAX_MAGNITUDE: f32 = 10.0;
const FILL: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandAugOp {
    AutoContrast,
    Equalize,
    Invert,
    Rotate,
    Posterize,
    Solarize,
    SolarizeAdd,
    Color,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

pub const OPS: [RandAugOp; 15] = [
    RandAugOp::AutoContrast,
    RandAugOp::Equalize,
    RandAugOp::Invert,
    RandAugOp::Rotate,
    RandAugOp::Posterize,
    RandAugOp::Solarize,
    RandAugOp::SolarizeAdd,
    RandAugOp::Color,
    RandAugOp::Contrast,
    RandAugOp::Brightness,
    RandAugOp::Sharpness,
    RandAugOp::ShearX,
    RandAugOp::ShearY,
    RandAugOp::TranslateX,
    RandAugOp::TranslateY,
];

pub fn rand_augment(image: &Image, num_ops: usize, magnitude: f32, prob: f32, rng: &mut CounterRng) -> Image {
    let mut out = image.clone();
    let level = (magnitude / MAX_MAGNITUDE).clamp(0.0, 1.0);
    for _ in 0..num_ops {
        let op = OPS[rng.below_usize(OPS.len())];
        let apply = rng.bernoulli(prob);
        let sign = if rng.bernoulli(0.5) { -1.0 } else { 1.0 };
        if apply {
            out = apply_op(&out, op, level, sign);
        }
    }
    out
}

/// `level` in `[0, 1]`; `sign` is `±1` for ops with a direction.
pub fn apply_op(img: &Image, op: RandAugOp, level: f32, sign: f32) -> Image {
    let mut out = img.clone();
    match op {
        RandAugOp::AutoContrast => auto_contrast(&mut out),
        RandAugOp::Equalize => equalize(&mut out),
        RandAugOp::Invert => out.map(|v| 1.0 - v),
        RandAugOp::Rotate => {
            let theta = sign * level * 30.0 * core::f32::consts::PI / 180.0;
            let (s, c) = (math::sin(theta), math::cos(theta));
            out = affine(img, [c, s, 0.0, -s, c, 0.0]);
        }
        RandAugOp::Posterize => {
            let bits = 8 - (level * 4.0) as u32;
            let mask = !((1u32 << (8 - bits)) - 1) & 0xff;
            out.map(|v| (((math::clamp01(v) * 255.0 + 0.5) as u32 & mask) as f32) / 255.0);
        }
        RandAugOp::Solarize => {
            let threshold = 1.0 - level;
            out.map(|v| if v >= threshold { 1.0 - v } else { v });
        }
        RandAugOp::SolarizeAdd => {
            let add = level * 110.0 / 255.0;
            out.map(|v| if v < 0.5 { math::clamp01(v + add) } else { v });
        }
        RandAugOp::Color => adjust_saturation(&mut out, 1.0 + sign * 0.9 * level),
        RandAugOp::Contrast => adjust_contrast(&mut out, 1.0 + sign * 0.9 * level),
        RandAugOp::Brightness => adjust_brightness(&mut out, 1.0 + sign * 0.9 * level),
        RandAugOp::Sharpness => sharpness(&mut out, 1.0 + sign * 0.9 * level),
        RandAugOp::ShearX => out = affine(img, [1.0, sign * 0.3 * level, 0.0, 0.0, 1.0, 0.0]),
        RandAugOp::ShearY => out = affine(img, [1.0, 0.0, 0.0, sign * 0.3 * level, 1.0, 0.0]),
        RandAugOp::TranslateX => {
            let dx = sign * 0.45 * level * img.width() as f32;
            out = affine(img, [1.0, 0.0, dx, 0.0, 1.0, 0.0]);
        }
        RandAugOp::TranslateY => {
            let dy = sign * 0.45 * level * img.height() as f32;
            out = affine(img, [1.0, 0.0, 0.0, 0.0, 1.0, dy]);
        }
    }
    out
}

/// Inverse-mapped affine warp about the image center: output pixel `(x, y)`
/// samples input `(a x + b y + c, d x + e y + f)` in centered coordinates.
/// Out-of-bounds samples take the gray fill value.
fn affine(img: &Image, m: [f32; 6]) -> Image {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = ((w as f32 - 1.0) / 2.0, (h as f32 - 1.0) / 2.0);
    let mut out = Image::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let xc = x as f32 - cx;
            let yc = y as f32 - cy;
            let sx = m[0] * xc + m[1] * yc + m[2] + cx;
            let sy = m[3] * xc + m[4] * yc + m[5] + cy;
            for c in 0..CHANNELS {
                out.set(c, x, y, sample(img, c, sx, sy));
            }
        }
    }
    out
}

fn sample(img: &Image, c: usize, x: f32, y: f32) -> f32 {
    let (w, h) = (img.width() as f32, img.height() as f32);
    if x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5 {
        return FILL;
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let x0 = math::floor(x) as usize;
    let y0 = math::floor(y) as usize;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let (fx, fy) = (x - x0 as f32, y - y0 as f32);
    let top = img.get(c, x0, y0) * (1.0 - fx) + img.get(c, x1, y0) * fx;
    let bot = img.get(c, x0, y1) * (1.0 - fx) + img.get(c, x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}

fn auto_contrast(img: &mut Image) {
    for c in 0..CHANNELS {
        let plane = img.plane_mut(c);
        let lo = plane.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = plane.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if hi - lo > 1e-6 {
            plane.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
        }
    }
}

fn equalize(img: &mut Image) {
    for c in 0..CHANNELS {
        let plane = img.plane_mut(c);
        let mut hist = [0usize; 256];
        for &v in plane.iter() {
            hist[(math::clamp01(v) * 255.0 + 0.5) as usize] += 1;
        }
        let n = plane.len();
        let mut cdf = [0usize; 256];
        let mut acc = 0;
        for (i, h) in hist.iter().enumerate() {
            acc += h;
            cdf[i] = acc;
        }
        let cdf_min = cdf.iter().copied().find(|&v| v > 0).unwrap_or(0);
        if n == cdf_min {
            continue;
        }
        for v in plane.iter_mut() {
            let bin = (math::clamp01(*v) * 255.0 + 0.5) as usize;
            *v = (cdf[bin] - cdf_min) as f32 / (n - cdf_min) as f32;
        }
    }
}

/// Blend with a 3×3 smoothed copy (`[1 1 1; 1 5 1; 1 1 1] / 13`), border
/// pixels untouched.
fn sharpness(img: &mut Image, factor: f32) {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return;
    }
    let src = img.clone();
    let mut smooth = vec![0.0f32; w * h];
    for c in 0..CHANNELS {
        let p = src.plane(c);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let mut acc = 4.0 * p[y * w + x];
                for dy in 0..3 {
                    for dx in 0..3 {
                        acc += p[(y + dy - 1) * w + x + dx - 1];
                    }
                }
                smooth[y * w + x] = acc / 13.0;
            }
        }
        let dst = img.plane_mut(c);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                dst[i] = math::clamp01(smooth[i] + factor * (p[i] - smooth[i]));
            }
        }
    }
}
