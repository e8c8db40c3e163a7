//! Procedurally generated image datasets.
//!
//! Each image is a pure function of `(source seed, image_id, size)`: a
//! textured background with one foreground pattern drawn from ten semantic
//! classes. A [`SyntheticStyle`] controls how a "dataset" is biased: which
//! pattern classes it favors, its palette and its background texture.
//! Images never touch disk, so audits can run at any scale without data.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, ImageRecord, ImageSource};
use crate::error::DatasetError;
use crate::hash::{hash64, Hasher64};
use crate::image::Image;
use crate::math;
use crate::rng::CounterRng;

pub const SEMANTIC_CLASSES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStyle {
    pub name: String,
    /// Relative frequency of each foreground pattern class.
    pub class_weights: [f32; SEMANTIC_CLASSES],
    /// Background hue center and half-width, in turns.
    pub hue_center: f32,
    pub hue_spread: f32,
    /// Background brightness range.
    pub value_range: (f32, f32),
    /// Amplitude of per-pixel background texture.
    pub texture: f32,
    pub min_size: u32,
    pub max_size: u32,
}

impl SyntheticStyle {
    /// Every class equally likely, neutral palette.
    pub fn uniform(name: &str) -> Self {
        Self {
            name: name.into(),
            class_weights: [1.0; SEMANTIC_CLASSES],
            hue_center: 0.5,
            hue_spread: 0.5,
            value_range: (0.25, 0.8),
            texture: 0.06,
            min_size: 40,
            max_size: 64,
        }
    }

    /// Uniform palette, foreground restricted to `classes`.
    pub fn with_classes(name: &str, classes: &[usize]) -> Self {
        let mut style = Self::uniform(name);
        style.class_weights = [0.0; SEMANTIC_CLASSES];
        for &c in classes {
            style.class_weights[c] = 1.0;
        }
        style
    }

    /// Six built-in styles with overlapping but distinct content and palette
    /// statistics, standing in for six real-world corpora.
    pub fn preset(name: &str) -> Option<Self> {
        let (weights, hue, spread, value, texture): ([f32; SEMANTIC_CLASSES], f32, f32, (f32, f32), f32) = match name {
            "alpha" => ([4., 3., 2., 1., 1., 1., 1., 1., 1., 1.], 0.08, 0.25, (0.25, 0.7), 0.08),
            "beta" => ([1., 1., 3., 4., 2., 1., 1., 1., 1., 1.], 0.55, 0.3, (0.3, 0.8), 0.05),
            "gamma" => ([1., 1., 1., 1., 3., 4., 2., 1., 1., 1.], 0.5, 0.5, (0.6, 0.95), 0.03),
            "delta" => ([1., 1., 1., 1., 1., 1., 3., 4., 2., 1.], 0.3, 0.3, (0.3, 0.75), 0.06),
            "epsilon" => ([2., 1., 1., 1., 1., 1., 1., 1., 3., 4.], 0.75, 0.3, (0.25, 0.8), 0.07),
            "zeta" => ([1., 2., 1., 2., 1., 2., 1., 2., 1., 2.], 0.4, 0.45, (0.2, 0.85), 0.05),
            "uniform" => return Some(Self::uniform("uniform")),
            _ => return None,
        };
        Some(Self {
            name: name.into(),
            class_weights: weights,
            hue_center: hue,
            hue_spread: spread,
            value_range: value,
            texture,
            min_size: 40,
            max_size: 64,
        })
    }

    pub const PRESETS: [&'static str; 6] = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSource {
    pub style: SyntheticStyle,
    pub seed: u64,
}

/// Per-image drawing parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Scene {
    class: usize,
    bg: [f32; 3],
    bg_slope: [f32; 2],
    fg: [f32; 3],
    center: (f32, f32),
    radius: f32,
    period: f32,
    texture_key: u64,
}

impl SyntheticSource {
    pub fn new(style: SyntheticStyle, seed: u64) -> Self {
        Self { style, seed }
    }

    fn image_key(&self, image_id: &str) -> u64 {
        Hasher64::new().u64(self.seed).str(&self.style.name).str(image_id).finish()
    }

    /// Manifest of `count` records with ids `"{dataset_id}-{i:06}"` and sizes
    /// drawn from the style's range.
    pub fn manifest(&self, dataset_id: &str, count: usize) -> Result<DatasetManifest, DatasetError> {
        let (lo, hi) = (self.style.min_size, self.style.max_size.max(self.style.min_size));
        let records = (0..count)
            .map(|i| {
                let id = format!("{dataset_id}-{i:06}");
                let mut rng = CounterRng::new(self.image_key(&id)).fork(1);
                let w = lo + rng.below(u64::from(hi - lo + 1)) as u32;
                let h = lo + rng.below(u64::from(hi - lo + 1)) as u32;
                ImageRecord::new(id.clone(), format!("synthetic://{}/{id}", self.style.name), w, h)
            })
            .collect();
        let uri = format!("synthetic://{}?seed={}", self.style.name, self.seed);
        DatasetManifest::new(dataset_id, self.style.name.clone(), uri, records, None)
    }

    fn scene(&self, image_id: &str, w: usize, h: usize) -> Scene {
        let mut rng = CounterRng::new(self.image_key(image_id)).fork(2);
        let class = weighted_pick(&self.style.class_weights, &mut rng);
        let hue = self.style.hue_center + self.style.hue_spread * rng.uniform(-1.0, 1.0);
        let bg = hsv(hue, rng.uniform(0.15, 0.6), rng.uniform(self.style.value_range.0, self.style.value_range.1));
        let bg_slope = [rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15)];
        let fg = hsv(rng.next_f32(), rng.uniform(0.5, 1.0), rng.uniform(0.6, 1.0));
        let fg = if luma(fg) - luma(bg) < 0.15 && luma(bg) - luma(fg) < 0.15 {
            // keep the pattern visible against the background
            if luma(bg) > 0.5 {
                fg.map(|v| v * 0.35)
            } else {
                fg.map(|v| 0.5 + 0.5 * v)
            }
        } else {
            fg
        };
        let m = w.min(h) as f32;
        let radius = m * rng.uniform(0.22, 0.38);
        let center = (
            w as f32 * rng.uniform(0.35, 0.65),
            h as f32 * rng.uniform(0.35, 0.65),
        );
        let period = (m * rng.uniform(0.08, 0.14)).max(2.0);
        Scene { class, bg, bg_slope, fg, center, radius, period, texture_key: rng.next_u64() }
    }

    /// Foreground pattern class of `image_id`.
    pub fn semantic_label(&self, image_id: &str) -> usize {
        self.scene(image_id, 1, 1).class
    }

    pub fn render(&self, image_id: &str, width: usize, height: usize) -> Image {
        let s = self.scene(image_id, width, height);
        let tex = self.style.texture;
        let mut out = Image::new(width, height);
        for y in 0..height {
            for x in 0..width {
                let fx = x as f32 + 0.5;
                let fy = y as f32 + 0.5;
                let grad = s.bg_slope[0] * (fx / width as f32 - 0.5) + s.bg_slope[1] * (fy / height as f32 - 0.5);
                let noise = tex * (pixel_noise(s.texture_key, x, y) - 0.5) * 2.0;
                let inside = pattern(s.class, fx - s.center.0, fy - s.center.1, s.radius, s.period);
                for c in 0..3 {
                    let base = if inside { s.fg[c] } else { s.bg[c] + grad };
                    out.set(c, x, y, math::clamp01(base + noise));
                }
            }
        }
        out
    }
}

impl ImageSource for SyntheticSource {
    fn load(&self, record: &ImageRecord) -> Result<Image, DatasetError> {
        if !record.decode_ok {
            return Err(DatasetError::Load(record.image_id.clone()));
        }
        Ok(self.render(&record.image_id, record.width as usize, record.height as usize))
    }
}

/// Whether offset `(dx, dy)` from the pattern center is foreground.
fn pattern(class: usize, dx: f32, dy: f32, r: f32, period: f32) -> bool {
    let (ax, ay) = (math::abs(dx), math::abs(dy));
    let in_square = ax <= r && ay <= r;
    let stripe = |v: f32| ((math::floor(v / period) as i64).rem_euclid(2)) == 0;
    match class {
        0 => dx * dx + dy * dy <= r * r,
        1 => in_square,
        2 => dy <= r * 0.8 && dy >= -r && ax <= (dy + r) * 0.6,
        3 => in_square && stripe(dy + r),
        4 => in_square && stripe(dx + r),
        5 => {
            let d2 = dx * dx + dy * dy;
            d2 <= r * r && d2 >= (0.6 * r) * (0.6 * r)
        }
        6 => (ax <= r * 0.25 && ay <= r) || (ay <= r * 0.25 && ax <= r),
        7 => in_square && (stripe(dx + r) ^ stripe(dy + r)),
        8 => in_square && stripe((dx + dy) * 0.7071 + 2.0 * r),
        _ => {
            if !in_square {
                return false;
            }
            let cell = period * 2.0;
            let px = fmod_pos(dx + r, cell) - period;
            let py = fmod_pos(dy + r, cell) - period;
            px * px + py * py <= (0.55 * period) * (0.55 * period)
        }
    }
}

fn fmod_pos(a: f32, b: f32) -> f32 {
    a - b * math::floor(a / b)
}

fn pixel_noise(key: u64, x: usize, y: usize) -> f32 {
    let h = Hasher64::new().u64(key).u64(((x as u64) << 32) | y as u64).finish();
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn weighted_pick(weights: &[f32], rng: &mut CounterRng) -> usize {
    let total: f32 = weights.iter().sum();
    let mut t = rng.next_f32() * total;
    for (i, w) in weights.iter().enumerate() {
        if t < *w {
            return i;
        }
        t -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn luma(c: [f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn hsv(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h - math::floor(h);
    let h6 = h * 6.0;
    let i = math::floor(h6);
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as i32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Seeded source id helper so manifests for the same style differ per seed.
pub fn source_seed(base: u64, dataset_id: &str) -> u64 {
    hash64(base, dataset_id)
}

/// Labeled set for probing: `(manifest, labels)` where labels are pattern classes.
pub fn labeled_set(source: &SyntheticSource, dataset_id: &str, count: usize) -> Result<(DatasetManifest, Vec<usize>), DatasetError> {
    let manifest = source.manifest(dataset_id, count)?;
    let labels = manifest.images().iter().map(|r| source.semantic_label(&r.image_id)).collect();
    Ok((manifest, labels))
}
