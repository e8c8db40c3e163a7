//! Per-sample kernels for 3×3 convolution (im2col + GEMM), group norm and
//! ReLU, forward and backward.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

pub(crate) const GN_EPS: f32 = 1e-5;

#[inline]
pub(crate) fn conv_out(n: usize, stride: usize) -> usize {
    (n - 1) / stride + 1
}

/// `C × H × W` → `(C·9) × (OH·OW)` columns for a 3×3 kernel, padding 1.
pub(crate) fn im2col(x: &[f32], c: usize, h: usize, w: usize, stride: usize, cols: &mut Vec<f32>) {
    let (oh, ow) = (conv_out(h, stride), conv_out(w, stride));
    let p = oh * ow;
    cols.clear();
    cols.resize(c * 9 * p, 0.0);
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * p..((ci * 9) + ky * 3 + kx + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
pub(crate) fn col2im(cols: &[f32], c: usize, h: usize, w: usize, stride: usize) -> Vec<f32> {
    let (oh, ow) = (conv_out(h, stride), conv_out(w, stride));
    let p = oh * ow;
    let mut dx = vec![0.0; c * h * w];
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * p..((ci * 9) + ky * 3 + kx + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - 1;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// `c[m×n] = alpha · op(a)[m×k] · op(b)[k×n] + beta · c`, all row-major with
/// explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    debug_assert!(c.len() >= m * n);
    // SAFETY: the debug assertions above spell out the bounds; every caller
    // passes slices sized exactly for these shapes and strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Group norm statistics for one sample, `C × P` layout.
pub(crate) struct NormCache {
    pub xhat: Vec<f32>,
    pub inv_std: Vec<f32>,
}

/// Normalizes `z` in place into `xhat`, writes `gamma·xhat + beta` through
/// ReLU into `out`.
pub(crate) fn group_norm_relu(
    z: &[f32],
    c: usize,
    p: usize,
    groups: usize,
    gamma: &[f32],
    beta: &[f32],
    out: &mut [f32],
    keep: bool,
) -> Option<NormCache> {
    let per = c / groups;
    let m = (per * p) as f32;
    let mut xhat = if keep { vec![0.0; c * p] } else { Vec::new() };
    let mut inv_stds = Vec::with_capacity(groups);
    for g in 0..groups {
        let span = &z[g * per * p..(g + 1) * per * p];
        let mean = span.iter().sum::<f32>() / m;
        let var = span.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / m;
        let inv_std = 1.0 / math::sqrt(var + GN_EPS);
        inv_stds.push(inv_std);
        for ch in g * per..(g + 1) * per {
            let (ga, be) = (gamma[ch], beta[ch]);
            for i in ch * p..(ch + 1) * p {
                let xh = (z[i] - mean) * inv_std;
                if keep {
                    xhat[i] = xh;
                }
                let y = ga * xh + be;
                out[i] = if y > 0.0 { y } else { 0.0 };
            }
        }
    }
    keep.then_some(NormCache { xhat, inv_std: inv_stds })
}

/// Backward through ReLU and group norm. `dout` is overwritten with the
/// gradient w.r.t. the pre-norm activations.
#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_relu_backward(
    dout: &mut [f32],
    out: &[f32],
    cache: &NormCache,
    c: usize,
    p: usize,
    groups: usize,
    gamma: &[f32],
    dgamma: &mut [f32],
    dbeta: &mut [f32],
) {
    let per = c / groups;
    let m = (per * p) as f32;
    for (d, &o) in dout.iter_mut().zip(out) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
    for ch in 0..c {
        let (mut sg, mut sb) = (0.0, 0.0);
        for i in ch * p..(ch + 1) * p {
            sg += dout[i] * cache.xhat[i];
            sb += dout[i];
        }
        dgamma[ch] += sg;
        dbeta[ch] += sb;
    }
    for g in 0..groups {
        let (mut s1, mut s2) = (0.0, 0.0);
        for ch in g * per..(g + 1) * per {
            let ga = gamma[ch];
            for i in ch * p..(ch + 1) * p {
                let dxh = dout[i] * ga;
                s1 += dxh;
                s2 += dxh * cache.xhat[i];
            }
        }
        let k = cache.inv_std[g] / m;
        for ch in g * per..(g + 1) * per {
            let ga = gamma[ch];
            for i in ch * p..(ch + 1) * p {
                let dxh = dout[i] * ga;
                dout[i] = k * (m * dxh - s1 - cache.xhat[i] * s2);
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut e: Vec<f32> = logits.iter().map(|&l| math::exp(l - max)).collect();
    let s: f32 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

/// Cross-entropy of `logits` against a soft target row; returns the loss
/// and `softmax - target`.
pub fn soft_cross_entropy(logits: &[f32], target: &[f32]) -> (f32, Vec<f32>) {
    let probs = softmax(logits);
    let mut loss = 0.0;
    for (p, t) in probs.iter().zip(target) {
        if *t > 0.0 {
            loss -= t * math::ln(p.max(1e-12));
        }
    }
    let grad = probs.iter().zip(target).map(|(p, t)| p - t).collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w) = (2, 5, 4);
        for stride in [1, 2] {
            let x: Vec<f32> = (0..c * h * w).map(|i| ((i * 7) % 13) as f32 - 6.0).collect();
            let mut cols = Vec::new();
            im2col(&x, c, h, w, stride, &mut cols);
            let y: Vec<f32> = (0..cols.len()).map(|i| ((i * 5) % 11) as f32 - 5.0).collect();
            let lhs: f32 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
            let back = col2im(&y, c, h, w, stride);
            let rhs: f32 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-3, "stride {stride}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gemm_matches_naive() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f32> = (0..m * k).map(|i| i as f32 * 0.5).collect();
        let b: Vec<f32> = (0..k * n).map(|i| 1.0 - i as f32 * 0.1).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, (k, 1), &b, (n, 1), 0.0, &mut c);
        for i in 0..m {
            for j in 0..n {
                let e: f32 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                assert!((c[i * n + j] - e).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln_n() {
        let (loss, grad) = soft_cross_entropy(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!((loss - 3f32.ln()).abs() < 1e-6);
        assert!((grad.iter().sum::<f32>()).abs() < 1e-6);
    }
}
