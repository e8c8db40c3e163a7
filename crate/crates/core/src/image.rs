//! Planar RGB float images in `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Three-channel image stored channel-major (`C × H × W`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

pub const CHANNELS: usize = 3;

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let plane = width * height;
        let mut data = vec![0.0; plane * CHANNELS];
        for (c, v) in rgb.iter().enumerate() {
            data[c * plane..(c + 1) * plane].fill(*v);
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut img = Self::new(width, height);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    img.set(c, x, y, f(c, x, y));
                }
            }
        }
        img
    }

    /// Panics if `data.len() != 3 * width * height`.
    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * CHANNELS, "planar buffer size");
        Self { width, height, data }
    }

    /// Interleaved 8-bit RGB, as produced by most decoders.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Self {
        assert_eq!(rgb.len(), width * height * CHANNELS, "rgb8 buffer size");
        let plane = width * height;
        let mut data = vec![0.0; plane * CHANNELS];
        for (p, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..CHANNELS {
                data[c * plane + p] = f32::from(px[c]) / 255.0;
            }
        }
        Self { width, height, data }
    }

    /// Single-channel input replicated into three equal channels.
    pub fn from_gray(width: usize, height: usize, gray: &[f32]) -> Self {
        assert_eq!(gray.len(), width * height, "gray buffer size");
        let mut data = Vec::with_capacity(gray.len() * CHANNELS);
        for _ in 0..CHANNELS {
            data.extend_from_slice(gray);
        }
        Self { width, height, data }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(plane * CHANNELS);
        for p in 0..plane {
            for c in 0..CHANNELS {
                out.push(math::round(math::clamp01(self.data[c * plane + p]) * 255.0) as u8);
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn is_valid(&self) -> bool {
        self.width > 0 && self.height > 0 && self.data.len() == self.width * self.height * CHANNELS
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = math::clamp01(*v);
        }
    }

    pub fn map(&mut self, f: impl Fn(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut out = Image::new(w, h);
        for c in 0..CHANNELS {
            for y in 0..h {
                let src = (c * self.height + y0 + y) * self.width + x0;
                let dst = (c * h + y) * w;
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.width) {
            row.reverse();
        }
        out
    }

    /// Bilinear resize with half-pixel centers and edge clamping (no
    /// antialiasing), the convention of `align_corners = false`.
    pub fn resize_bilinear(&self, new_w: usize, new_h: usize) -> Image {
        assert!(new_w > 0 && new_h > 0, "resize to empty image");
        if new_w == self.width && new_h == self.height {
            return self.clone();
        }
        let xs = axis_taps(self.width, new_w);
        let ys = axis_taps(self.height, new_h);
        let mut out = Image::new(new_w, new_h);
        for c in 0..CHANNELS {
            let src = self.plane(c);
            let dst = out.plane_mut(c);
            for (oy, &(y0, y1, wy)) in ys.iter().enumerate() {
                let r0 = &src[y0 * self.width..(y0 + 1) * self.width];
                let r1 = &src[y1 * self.width..(y1 + 1) * self.width];
                let drow = &mut dst[oy * new_w..(oy + 1) * new_w];
                for (ox, &(x0, x1, wx)) in xs.iter().enumerate() {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * wx;
                    let bot = r1[x0] + (r1[x1] - r1[x0]) * wx;
                    drow[ox] = top + (bot - top) * wy;
                }
            }
        }
        out
    }

    /// Aspect-preserving resize so the shorter side equals `target`.
    pub fn resize_shorter_side(&self, target: usize) -> Image {
        let (w, h) = shorter_side_dims(self.width, self.height, target);
        self.resize_bilinear(w, h)
    }

    /// Central `size × size` crop; offsets are `floor((dim - size) / 2)`.
    pub fn center_crop(&self, size: usize) -> Image {
        let x0 = (self.width - size) / 2;
        let y0 = (self.height - size) / 2;
        self.crop(x0, y0, size, size)
    }

    pub fn mean(&self) -> f32 {
        let s: f64 = self.data.iter().map(|&v| f64::from(v)).sum();
        (s / self.data.len() as f64) as f32
    }
}

/// Dimensions after scaling so the shorter side becomes `target`; the longer
/// side is rounded to the nearest pixel.
pub fn shorter_side_dims(width: usize, height: usize, target: usize) -> (usize, usize) {
    if width <= height {
        let h = ((height as u64 * target as u64 * 2 + width as u64) / (2 * width as u64)) as usize;
        (target, h.max(1))
    } else {
        let w = ((width as u64 * target as u64 * 2 + height as u64) / (2 * height as u64)) as usize;
        (w.max(1), target)
    }
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f32 / dst as f32;
    (0..dst)
        .map(|o| {
            let pos = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f32);
            let i0 = math::floor(pos) as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorter_side_arithmetic() {
        assert_eq!(shorter_side_dims(100, 80, 256), (320, 256));
        assert_eq!(shorter_side_dims(512, 256, 256), (512, 256));
        assert_eq!(shorter_side_dims(1000, 800, 500), (625, 500));
        assert_eq!(shorter_side_dims(80, 100, 256), (256, 320));
    }

    #[test]
    fn resize_of_constant_is_constant() {
        let img = Image::filled(7, 5, [0.25, 0.5, 0.75]);
        let out = img.resize_bilinear(13, 3);
        for c in 0..3 {
            assert!(out.plane(c).iter().all(|&v| (v - img.get(c, 0, 0)).abs() < 1e-6));
        }
    }

    #[test]
    fn crop_and_flip() {
        let img = Image::from_fn(4, 3, |c, x, y| (c * 100 + y * 10 + x) as f32);
        let cr = img.crop(1, 1, 2, 2);
        assert_eq!(cr.get(0, 0, 0), 11.0);
        assert_eq!(cr.get(2, 1, 1), 222.0);
        let f = img.flip_horizontal();
        assert_eq!(f.get(1, 0, 2), 123.0);
    }

    #[test]
    fn rgb8_round_trip() {
        let bytes: Vec<u8> = (0..2 * 2 * 3).map(|i| (i * 20) as u8).collect();
        let img = Image::from_rgb8(2, 2, &bytes);
        assert_eq!(img.to_rgb8(), bytes);
    }
}
