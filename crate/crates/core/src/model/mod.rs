//! Model specs and the built-in `reference_cnn` backend.
//!
//! `reference_cnn` is a stem plus four stages of conv3×3 / group-norm / ReLU
//! blocks, global average pooling and a linear head. All parameters live in
//! one flat buffer so the optimizer, checkpoints and freezing checks operate
//! on a single slice.

mod kernels;

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::image::{Image, CHANNELS};
use crate::math;
use crate::rng::CounterRng;

pub use kernels::{soft_cross_entropy, softmax};
use kernels::{col2im, conv_out, gemm, group_norm_relu, group_norm_relu_backward, im2col, NormCache};

pub const REFERENCE_CNN: &str = "reference_cnn";
const STAGES: usize = 4;
const GROUPS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backend_name: String,
    #[serde(default = "one")]
    pub width_multiplier: f32,
    #[serde(default = "one")]
    pub depth_multiplier: f32,
    pub num_classes: usize,
    /// Channels of the first stage at width multiplier 1.
    #[serde(default = "default_base_width")]
    pub base_width: usize,
}

fn one() -> f32 {
    1.0
}

fn default_base_width() -> usize {
    8
}

impl ModelSpec {
    pub fn reference(width_multiplier: f32, num_classes: usize) -> Self {
        Self {
            backend_name: REFERENCE_CNN.into(),
            width_multiplier,
            depth_multiplier: 1.0,
            num_classes,
            base_width: default_base_width(),
        }
    }

    pub fn with_depth(mut self, depth_multiplier: f32) -> Self {
        self.depth_multiplier = depth_multiplier;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_classes < 2 {
            return Err(ModelError::TooFewClasses(self.num_classes));
        }
        for m in [self.width_multiplier, self.depth_multiplier] {
            if !(m > 0.0) || !m.is_finite() {
                return Err(ModelError::BadMultiplier(m));
            }
        }
        Ok(())
    }

    /// Output channels per stage, rounded to a multiple of 4.
    pub fn stage_widths(&self) -> [usize; STAGES] {
        let mut out = [0; STAGES];
        for (s, w) in out.iter_mut().enumerate() {
            let raw = self.base_width as f32 * self.width_multiplier * (1 << s) as f32;
            *w = ((math::round(raw / 4.0) as usize) * 4).max(4);
        }
        out
    }

    pub fn blocks_per_stage(&self) -> usize {
        (math::round(self.depth_multiplier) as usize).max(1)
    }
}

/// Exact number of trainable scalars.
pub fn count_parameters(spec: &ModelSpec) -> Result<usize, ModelError> {
    if spec.backend_name != REFERENCE_CNN {
        return Err(ModelError::BackendUnavailable(spec.backend_name.clone()));
    }
    spec.validate()?;
    Ok(Arch::new(spec).n_params)
}

/// Anything that maps one model input to class logits.
pub trait Classifier {
    fn num_classes(&self) -> usize;
    fn logits(&self, input: &Image) -> Vec<f32>;

    fn predict(&self, input: &Image) -> usize {
        argmax(&self.logits(input))
    }
}

/// Frozen representation at a chosen depth.
pub trait FeatureExtractor {
    /// Number of selectable layers (`0..num_layers()`).
    fn num_layers(&self) -> usize;
    fn feature_dim(&self, layer: usize) -> Result<usize, ModelError>;
    fn extract(&self, input: &Image, layer: usize) -> Result<Vec<f32>, ModelError>;
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    cin: usize,
    cout: usize,
    stride: usize,
    weight: usize,
    gamma: usize,
    beta: usize,
}

impl Block {
    fn k(&self) -> usize {
        self.cin * 9
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Arch {
    blocks: Vec<Block>,
    head_in: usize,
    head_w: usize,
    head_b: usize,
    n_params: usize,
}

impl Arch {
    fn new(spec: &ModelSpec) -> Self {
        let widths = spec.stage_widths();
        let depth = spec.blocks_per_stage();
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut push = |cin: usize, cout: usize, stride: usize, offset: &mut usize| {
            let weight = *offset;
            let gamma = weight + cout * cin * 9;
            let beta = gamma + cout;
            *offset = beta + cout;
            blocks.push(Block { cin, cout, stride, weight, gamma, beta });
        };
        push(CHANNELS, widths[0], 2, &mut offset);
        let mut cin = widths[0];
        for (s, &w) in widths.iter().enumerate() {
            for d in 0..depth {
                let stride = if s > 0 && d == 0 { 2 } else { 1 };
                push(cin, w, stride, &mut offset);
                cin = w;
            }
        }
        let head_in = widths[STAGES - 1];
        let head_w = offset;
        let head_b = head_w + head_in * spec.num_classes;
        let n_params = head_b + spec.num_classes;
        Self { blocks, head_in, head_w, head_b, n_params }
    }
}

struct BlockTrace {
    in_h: usize,
    in_w: usize,
    cols: Vec<f32>,
    norm: NormCache,
    out: Vec<f32>,
}

/// Forward pass record for one sample.
struct Trace {
    blocks: Vec<BlockTrace>,
    pooled: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCnn {
    spec: ModelSpec,
    arch: Arch,
    params: Vec<f32>,
}

impl ReferenceCnn {
    /// He-normal conv weights, unit/zero norm affine, small-normal head.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self, ModelError> {
        count_parameters(spec)?;
        let arch = Arch::new(spec);
        let mut rng = CounterRng::new(seed).fork(0x696e_6974);
        let mut params = vec![0.0; arch.n_params];
        for b in &arch.blocks {
            let std = math::sqrt(2.0 / b.k() as f32);
            for v in &mut params[b.weight..b.gamma] {
                *v = std * rng.normal();
            }
            params[b.gamma..b.beta].fill(1.0);
        }
        for v in &mut params[arch.head_w..arch.head_b] {
            *v = 0.02 * rng.normal();
        }
        Ok(Self { spec: spec.clone(), arch, params })
    }

    pub fn from_params(spec: &ModelSpec, params: Vec<f32>) -> Result<Self, ModelError> {
        let expected = count_parameters(spec)?;
        if params.len() != expected {
            return Err(ModelError::ParameterCount { expected, found: params.len() });
        }
        Ok(Self { spec: spec.clone(), arch: Arch::new(spec), params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// True for conv and head weights, false for norm affine and biases.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.params.len()];
        for b in &self.arch.blocks {
            mask[b.weight..b.gamma].fill(true);
        }
        mask[self.arch.head_w..self.arch.head_b].fill(true);
        mask
    }

    /// Backbone = everything except the classification head.
    pub fn backbone_len(&self) -> usize {
        self.arch.head_w
    }

    /// Replaces the head with a freshly initialized one for `num_classes`.
    pub fn with_new_head(&self, num_classes: usize, seed: u64) -> Result<Self, ModelError> {
        let spec = self.spec.clone().with_classes(num_classes);
        let mut fresh = Self::new(&spec, seed)?;
        let n = self.backbone_len();
        fresh.params[..n].copy_from_slice(&self.params[..n]);
        Ok(fresh)
    }

    fn run(&self, input: &Image, keep: bool, stop_after: Option<usize>) -> Trace {
        let mut x = input.data().to_vec();
        let (mut h, mut w) = (input.height(), input.width());
        let mut blocks = Vec::with_capacity(self.arch.blocks.len());
        let mut cols = Vec::new();
        for (i, b) in self.arch.blocks.iter().enumerate() {
            im2col(&x, b.cin, h, w, b.stride, &mut cols);
            let (oh, ow) = (conv_out(h, b.stride), conv_out(w, b.stride));
            let p = oh * ow;
            let mut z = vec![0.0; b.cout * p];
            let wt = &self.params[b.weight..b.gamma];
            gemm(b.cout, b.k(), p, wt, (b.k(), 1), &cols, (p, 1), 0.0, &mut z);
            let mut out = vec![0.0; b.cout * p];
            let norm = group_norm_relu(
                &z,
                b.cout,
                p,
                GROUPS,
                &self.params[b.gamma..b.beta],
                &self.params[b.beta..b.beta + b.cout],
                &mut out,
                keep,
            );
            if let Some(norm) = norm {
                blocks.push(BlockTrace { in_h: h, in_w: w, cols: core::mem::take(&mut cols), norm, out: out.clone() });
            }
            x = out;
            h = oh;
            w = ow;
            if stop_after == Some(i) {
                break;
            }
        }
        let c = x.len() / (h * w);
        let pooled = (0..c).map(|ch| x[ch * h * w..(ch + 1) * h * w].iter().sum::<f32>() / (h * w) as f32).collect();
        Trace { blocks, pooled }
    }

    fn head(&self, pooled: &[f32]) -> Vec<f32> {
        let n = self.spec.num_classes;
        let d = self.arch.head_in;
        let w = &self.params[self.arch.head_w..self.arch.head_b];
        let b = &self.params[self.arch.head_b..];
        (0..n).map(|k| b[k] + w[k * d..(k + 1) * d].iter().zip(pooled).map(|(a, x)| a * x).sum::<f32>()).collect()
    }

    /// Adds this sample's gradient (scaled by `scale`) into `grads` and
    /// returns its loss against the soft `target`.
    pub fn accumulate_gradients(&self, input: &Image, target: &[f32], scale: f32, grads: &mut [f32]) -> f32 {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut trace = self.run(input, true, None);
        let logits = self.head(&trace.pooled);
        let (loss, dlogits) = soft_cross_entropy(&logits, target);

        let d = self.arch.head_in;
        let n = self.spec.num_classes;
        let mut dpooled = vec![0.0; d];
        {
            let w = &self.params[self.arch.head_w..self.arch.head_b];
            for k in 0..n {
                let g = dlogits[k] * scale;
                grads[self.arch.head_b + k] += g;
                let gw = &mut grads[self.arch.head_w + k * d..self.arch.head_w + (k + 1) * d];
                for j in 0..d {
                    gw[j] += g * trace.pooled[j];
                    dpooled[j] += g * w[k * d + j];
                }
            }
        }

        let last = trace.blocks.last().expect("at least one block");
        let p_last = last.out.len() / d;
        let mut dout: Vec<f32> = (0..d * p_last).map(|i| dpooled[i / p_last] / p_last as f32).collect();

        for (bi, b) in self.arch.blocks.iter().enumerate().rev() {
            let t = &mut trace.blocks[bi];
            let (oh, ow) = (conv_out(t.in_h, b.stride), conv_out(t.in_w, b.stride));
            let p = oh * ow;
            {
                let (gamma_grads, rest) = grads[b.gamma..].split_at_mut(b.cout);
                group_norm_relu_backward(
                    &mut dout,
                    &t.out,
                    &t.norm,
                    b.cout,
                    p,
                    GROUPS,
                    &self.params[b.gamma..b.beta],
                    gamma_grads,
                    &mut rest[..b.cout],
                );
            }
            let k = b.k();
            gemm(b.cout, p, k, &dout, (p, 1), &t.cols, (1, p), 1.0, &mut grads[b.weight..b.gamma]);
            if bi == 0 {
                break;
            }
            let mut dcols = core::mem::take(&mut t.cols);
            let wt = &self.params[b.weight..b.gamma];
            gemm(k, b.cout, p, wt, (1, k), &dout, (p, 1), 0.0, &mut dcols);
            dout = col2im(&dcols, b.cin, t.in_h, t.in_w, b.stride);
        }
        loss
    }
}

impl Classifier for ReferenceCnn {
    fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    fn logits(&self, input: &Image) -> Vec<f32> {
        let trace = self.run(input, false, None);
        self.head(&trace.pooled)
    }
}

impl FeatureExtractor for ReferenceCnn {
    /// Layer 0 is the stem; the last layer feeds the head.
    fn num_layers(&self) -> usize {
        self.arch.blocks.len()
    }

    fn feature_dim(&self, layer: usize) -> Result<usize, ModelError> {
        self.arch
            .blocks
            .get(layer)
            .map(|b| b.cout)
            .ok_or(ModelError::LayerOutOfRange { index: layer, layers: self.arch.blocks.len() })
    }

    /// Global average pool of the chosen block's output.
    fn extract(&self, input: &Image, layer: usize) -> Result<Vec<f32>, ModelError> {
        self.feature_dim(layer)?;
        Ok(self.run(input, false, Some(layer)).pooled)
    }
}

impl core::fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}(w={}, d={}, n={})", self.backend_name, self.width_multiplier, self.depth_multiplier, self.num_classes)
    }
}

pub fn backend_names() -> Vec<String> {
    vec![REFERENCE_CNN.to_string()]
}
