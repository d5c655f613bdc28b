//! The acquisition policy: a small convolutional network mapping the current
//! reconstruction to a distribution over k-space columns.
//!
//! Already-measured columns are removed by logit masking before the softmax,
//! so they receive probability exactly zero and the surviving entries keep a
//! well-defined gradient. The measured-column set itself is not an input to
//! the network.
//!
//! Gradients are computed by reverse-mode differentiation through a forward
//! trace. Because `d log pi(a) / d logits = e_a - pi`, any weighted sum of
//! log-probability gradients at one state needs only a single backward pass.

mod checkpoint;
mod optim;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kspace::{ColumnMask, Image};
use crate::seeding::{rng_from_seed, Rng};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use optim::{decay_learning_rate, optimizer_step, LrSchedule, OptimizerState};

const NORM_EPS: f64 = 1e-5;
const LEAKY_SLOPE: f64 = 0.01;

/// One stage of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Zero-padded 3x3 convolution (no bias), instance normalization, ReLU,
    /// 2x2 max-pooling.
    ConvPool { in_channels: usize, out_channels: usize },
    /// Fully connected layer with bias; flattens spatial input.
    Dense { inputs: usize, outputs: usize },
    /// Leaky ReLU with slope 0.01.
    LeakyRelu,
}

impl Layer {
    fn param_count(&self) -> usize {
        match *self {
            Layer::ConvPool {
                in_channels,
                out_channels,
            } => in_channels * out_channels * 9,
            Layer::Dense { inputs, outputs } => inputs * outputs + outputs,
            Layer::LeakyRelu => 0,
        }
    }
}

/// Input size plus layer list. The ASCII descriptor looks like
/// `in32x32;conv1-8;conv8-16;dense1024-64;lrelu;dense64-32`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub layers: Vec<Layer>,
}

impl Architecture {
    /// Two conv blocks (1 -> 8 -> 16 channels), dense 64, leaky ReLU, dense
    /// to one logit per image column.
    pub fn standard(height: usize, width: usize) -> Result<Self> {
        let flat = 16 * (height / 4) * (width / 4);
        Architecture {
            height,
            width,
            layers: vec![
                Layer::ConvPool {
                    in_channels: 1,
                    out_channels: 8,
                },
                Layer::ConvPool {
                    in_channels: 8,
                    out_channels: 16,
                },
                Layer::Dense {
                    inputs: flat,
                    outputs: 64,
                },
                Layer::LeakyRelu,
                Layer::Dense {
                    inputs: 64,
                    outputs: width,
                },
            ],
        }
        .validated()
    }

    /// One conv block with `channels` outputs, a hidden dense layer and an
    /// output layer with `actions` logits. Used for gradient checks and small
    /// experiments.
    pub fn tiny(
        height: usize,
        width: usize,
        channels: usize,
        hidden: usize,
        actions: usize,
    ) -> Result<Self> {
        Architecture {
            height,
            width,
            layers: vec![
                Layer::ConvPool {
                    in_channels: 1,
                    out_channels: channels,
                },
                Layer::Dense {
                    inputs: channels * (height / 2) * (width / 2),
                    outputs: hidden,
                },
                Layer::LeakyRelu,
                Layer::Dense {
                    inputs: hidden,
                    outputs: actions,
                },
            ],
        }
        .validated()
    }

    /// Checks that shapes chain and the network ends in a dense layer.
    pub fn validated(self) -> Result<Self> {
        let mut shape = (1usize, self.height, self.width);
        let mut flat: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::ConvPool {
                    in_channels,
                    out_channels,
                } => {
                    if flat.is_some() {
                        return Err(Error::invalid(format!("layer {i}: conv after dense")));
                    }
                    if in_channels != shape.0 || out_channels == 0 {
                        return Err(Error::invalid(format!(
                            "layer {i}: conv expects {} input channels, got {in_channels}",
                            shape.0
                        )));
                    }
                    if !shape.1.is_multiple_of(2) || !shape.2.is_multiple_of(2) || shape.1 < 2 || shape.2 < 2 {
                        return Err(Error::invalid(format!(
                            "layer {i}: cannot pool a {}x{} map",
                            shape.1, shape.2
                        )));
                    }
                    shape = (out_channels, shape.1 / 2, shape.2 / 2);
                }
                Layer::Dense { inputs, outputs } => {
                    let have = flat.unwrap_or(shape.0 * shape.1 * shape.2);
                    if inputs != have || outputs == 0 {
                        return Err(Error::invalid(format!(
                            "layer {i}: dense expects {have} inputs, got {inputs}"
                        )));
                    }
                    flat = Some(outputs);
                }
                Layer::LeakyRelu => {}
            }
        }
        match self.layers.last() {
            Some(Layer::Dense { .. }) => Ok(self),
            _ => Err(Error::invalid("architecture must end in a dense layer")),
        }
    }

    /// Number of output logits, one per selectable column.
    pub fn num_actions(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense { outputs, .. }) => *outputs,
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "in{}x{}", self.height, self.width)?;
        for layer in &self.layers {
            match layer {
                Layer::ConvPool {
                    in_channels,
                    out_channels,
                } => write!(f, ";conv{in_channels}-{out_channels}")?,
                Layer::Dense { inputs, outputs } => write!(f, ";dense{inputs}-{outputs}")?,
                Layer::LeakyRelu => write!(f, ";lrelu")?,
            }
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("malformed architecture descriptor `{s}`"));
        let pair = |body: &str, sep: char| -> Result<(usize, usize)> {
            let (a, b) = body.split_once(sep).ok_or_else(bad)?;
            Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
        };
        let mut parts = s.split(';');
        let (height, width) = pair(parts.next().and_then(|p| p.strip_prefix("in")).ok_or_else(bad)?, 'x')?;
        let layers = parts
            .map(|p| {
                if p == "lrelu" {
                    Ok(Layer::LeakyRelu)
                } else if let Some(body) = p.strip_prefix("conv") {
                    let (i, o) = pair(body, '-')?;
                    Ok(Layer::ConvPool {
                        in_channels: i,
                        out_channels: o,
                    })
                } else if let Some(body) = p.strip_prefix("dense") {
                    let (i, o) = pair(body, '-')?;
                    Ok(Layer::Dense {
                        inputs: i,
                        outputs: o,
                    })
                } else {
                    Err(bad())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Architecture {
            height,
            width,
            layers,
        }
        .validated()
    }
}

/// Sum of weighted log-probability gradients, plus the number of items that
/// contributed to it.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer {
    pub accum: Vec<f64>,
    pub sample_count: usize,
}

impl GradientBuffer {
    pub fn zeros(len: usize) -> Self {
        GradientBuffer {
            accum: vec![0.0; len],
            sample_count: 0,
        }
    }

    pub fn reset(&mut self) {
        self.accum.fill(0.0);
        self.sample_count = 0;
    }

    pub fn merge(&mut self, other: &GradientBuffer) {
        for (a, b) in self.accum.iter_mut().zip(&other.accum) {
            *a += b;
        }
        self.sample_count += other.sample_count;
    }

    pub fn scale(&mut self, factor: f64) {
        self.accum.iter_mut().for_each(|a| *a *= factor);
    }

    pub fn norm(&self) -> f64 {
        self.accum.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.accum.iter().all(|a| a.is_finite())
    }
}

enum Cache {
    ConvPool {
        input: Vec<f64>,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
        argmax: Vec<usize>,
        height: usize,
        width: usize,
    },
    Dense {
        input: Vec<f64>,
    },
    LeakyRelu {
        input: Vec<f64>,
    },
}

/// Logits of one state plus the per-layer values kept for backpropagation.
pub struct PolicyTrace {
    logits: Vec<f64>,
    caches: Vec<Cache>,
}

impl PolicyTrace {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn policy(&self, mask: &ColumnMask) -> Result<Vec<f64>> {
        masked_softmax(&self.logits, mask)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    arch: Architecture,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

impl PolicyNetwork {
    /// Initializes every parameter uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        let arch = arch.validated()?;
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        for layer in &arch.layers {
            let fan_in = match *layer {
                Layer::ConvPool { in_channels, .. } => in_channels * 9,
                Layer::Dense { inputs, .. } => inputs,
                Layer::LeakyRelu => continue,
            };
            let bound = (1.0 / fan_in as f64).sqrt();
            params.extend((0..layer.param_count()).map(|_| rng.gen_range(-bound..bound)));
        }
        PolicyNetwork::from_parts(arch, params)
    }

    pub fn from_parts(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let arch = arch.validated()?;
        if params.len() != arch.param_count() {
            return Err(Error::invalid(format!(
                "architecture `{arch}` needs {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        let mut offsets = Vec::with_capacity(arch.layers.len() + 1);
        let mut at = 0;
        for layer in &arch.layers {
            offsets.push(at);
            at += layer.param_count();
        }
        offsets.push(at);
        Ok(PolicyNetwork {
            arch,
            params,
            offsets,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn num_actions(&self) -> usize {
        self.arch.num_actions()
    }

    pub fn gradient_buffer(&self) -> GradientBuffer {
        GradientBuffer::zeros(self.params.len())
    }

    /// Index range of the output layer's weight matrix (bias excluded).
    pub fn final_layer_weights(&self) -> Range<usize> {
        let last = self.arch.layers.len() - 1;
        match self.arch.layers[last] {
            Layer::Dense { inputs, outputs } => {
                let start = self.offsets[last];
                start..start + inputs * outputs
            }
            _ => unreachable!("validated architectures end in a dense layer"),
        }
    }

    /// Zeroes the output layer (weights and bias), giving a uniform policy.
    pub fn zero_output_layer(&mut self) {
        let last = self.arch.layers.len() - 1;
        let range = self.offsets[last]..self.offsets[last + 1];
        self.params[range].fill(0.0);
    }

    fn check_input(&self, x: &Image) -> Result<()> {
        if x.height() != self.arch.height || x.width() != self.arch.width {
            return Err(Error::invalid(format!(
                "policy expects {}x{} input, got {}x{}",
                self.arch.height,
                self.arch.width,
                x.height(),
                x.width()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Image, keep: bool) -> (Vec<f64>, Vec<Cache>) {
        let mut act = x.pixels().to_vec();
        let (mut h, mut w) = (self.arch.height, self.arch.width);
        let mut caches = Vec::with_capacity(if keep { self.arch.layers.len() } else { 0 });
        for (li, layer) in self.arch.layers.iter().enumerate() {
            let p = &self.params[self.offsets[li]..self.offsets[li + 1]];
            match *layer {
                Layer::ConvPool {
                    in_channels,
                    out_channels,
                } => {
                    let (out, normalized, inv_std, argmax) =
                        conv_pool_forward(&act, in_channels, out_channels, h, w, p);
                    if keep {
                        caches.push(Cache::ConvPool {
                            input: std::mem::take(&mut act),
                            normalized,
                            inv_std,
                            argmax,
                            height: h,
                            width: w,
                        });
                    }
                    act = out;
                    h /= 2;
                    w /= 2;
                }
                Layer::Dense { inputs, outputs } => {
                    let (weights, bias) = p.split_at(inputs * outputs);
                    let out = (0..outputs)
                        .map(|o| {
                            bias[o] + dot(&weights[o * inputs..(o + 1) * inputs], &act)
                        })
                        .collect();
                    if keep {
                        caches.push(Cache::Dense {
                            input: std::mem::take(&mut act),
                        });
                    }
                    act = out;
                }
                Layer::LeakyRelu => {
                    let out = act
                        .iter()
                        .map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v })
                        .collect();
                    if keep {
                        caches.push(Cache::LeakyRelu {
                            input: std::mem::take(&mut act),
                        });
                    }
                    act = out;
                }
            }
        }
        (act, caches)
    }

    fn backward(&self, caches: Vec<Cache>, dlogits: Vec<f64>, grad: &mut [f64]) {
        let mut delta = dlogits;
        for (li, cache) in caches.into_iter().enumerate().rev() {
            let g = &mut grad[self.offsets[li]..self.offsets[li + 1]];
            let p = &self.params[self.offsets[li]..self.offsets[li + 1]];
            let need_input_grad = li > 0;
            match (self.arch.layers[li], cache) {
                (Layer::Dense { inputs, outputs }, Cache::Dense { input }) => {
                    let (gw, gb) = g.split_at_mut(inputs * outputs);
                    let weights = &p[..inputs * outputs];
                    let mut din = vec![0.0; if need_input_grad { inputs } else { 0 }];
                    for o in 0..outputs {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        let row = o * inputs..(o + 1) * inputs;
                        for (gwi, xi) in gw[row.clone()].iter_mut().zip(&input) {
                            *gwi += d * xi;
                        }
                        if need_input_grad {
                            for (di, wi) in din.iter_mut().zip(&weights[row]) {
                                *di += d * wi;
                            }
                        }
                    }
                    delta = din;
                }
                (Layer::LeakyRelu, Cache::LeakyRelu { input }) => {
                    for (d, x) in delta.iter_mut().zip(&input) {
                        if *x <= 0.0 {
                            *d *= LEAKY_SLOPE;
                        }
                    }
                }
                (
                    Layer::ConvPool {
                        in_channels,
                        out_channels,
                    },
                    Cache::ConvPool {
                        input,
                        normalized,
                        inv_std,
                        argmax,
                        height,
                        width,
                    },
                ) => {
                    delta = conv_pool_backward(
                        &delta,
                        &input,
                        &normalized,
                        &inv_std,
                        &argmax,
                        in_channels,
                        out_channels,
                        height,
                        width,
                        p,
                        g,
                        need_input_grad,
                    );
                }
                _ => unreachable!("cache kind always matches its layer"),
            }
        }
    }

    /// Unmasked output logits.
    pub fn logits(&self, x: &Image) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.run(x, false).0)
    }

    /// Column probabilities given the reconstruction `x` and measured `mask`.
    pub fn forward(&self, x: &Image, mask: &ColumnMask) -> Result<Vec<f64>> {
        self.check_mask(mask)?;
        masked_softmax(&self.logits(x)?, mask)
    }

    fn check_mask(&self, mask: &ColumnMask) -> Result<()> {
        if mask.width() != self.num_actions() {
            return Err(Error::invalid(format!(
                "mask width {} does not match the policy's {} actions",
                mask.width(),
                self.num_actions()
            )));
        }
        if mask.is_full() {
            return Err(Error::NoActionsAvailable(mask.width()));
        }
        Ok(())
    }

    /// Forward pass that keeps the intermediate values needed to
    /// backpropagate from this state later.
    pub fn trace(&self, x: &Image) -> Result<PolicyTrace> {
        self.check_input(x)?;
        let (logits, caches) = self.run(x, true);
        Ok(PolicyTrace { logits, caches })
    }

    /// Adds `sum_k weight_k * grad log pi(action_k | state, mask)` to `buf`,
    /// consuming a trace of that state.
    pub fn backprop_weighted(
        &self,
        trace: PolicyTrace,
        mask: &ColumnMask,
        terms: &[(usize, f64)],
        buf: &mut GradientBuffer,
    ) -> Result<()> {
        self.check_mask(mask)?;
        if buf.accum.len() != self.params.len() {
            return Err(Error::invalid("gradient buffer does not match the network"));
        }
        for &(a, _) in terms {
            if a >= mask.width() || mask.is_selected(a) {
                return Err(Error::Precondition(format!(
                    "action {a} is not an unmeasured column"
                )));
            }
        }
        if terms.iter().all(|t| t.1 == 0.0) {
            return Ok(());
        }
        let probs = masked_softmax(&trace.logits, mask)?;
        let total: f64 = terms.iter().map(|t| t.1).sum();
        // d/dlogits of sum_k w_k log pi(a_k) = sum_k w_k e_{a_k} - (sum_k w_k) pi
        let mut dlogits: Vec<f64> = probs.iter().map(|p| -total * p).collect();
        for &(a, wgt) in terms {
            dlogits[a] += wgt;
        }
        self.backward(trace.caches, dlogits, &mut buf.accum);
        Ok(())
    }

    /// Adds `sum_k weight_k * grad log pi(action_k | x, mask)` to `buf` using a
    /// single backward pass, and returns the policy at this state.
    pub fn accumulate_weighted_log_prob_gradient(
        &self,
        x: &Image,
        mask: &ColumnMask,
        terms: &[(usize, f64)],
        buf: &mut GradientBuffer,
    ) -> Result<Vec<f64>> {
        let trace = self.trace(x)?;
        let probs = trace.policy(mask)?;
        self.backprop_weighted(trace, mask, terms, buf)?;
        Ok(probs)
    }

    /// `buf += weight * grad log pi(action | x, mask)`.
    pub fn accumulate_log_prob_gradient(
        &self,
        x: &Image,
        mask: &ColumnMask,
        action: usize,
        weight: f64,
        buf: &mut GradientBuffer,
    ) -> Result<()> {
        self.accumulate_weighted_log_prob_gradient(x, mask, &[(action, weight)], buf)
            .map(|_| ())
    }

    /// `log pi(action | x, mask)` and its full parameter gradient.
    pub fn log_prob_and_gradient(
        &self,
        x: &Image,
        mask: &ColumnMask,
        action: usize,
    ) -> Result<(f64, Vec<f64>)> {
        let mut buf = self.gradient_buffer();
        let probs = self.accumulate_weighted_log_prob_gradient(x, mask, &[(action, 1.0)], &mut buf)?;
        Ok((probs[action].ln(), buf.accum))
    }
}

/// Softmax over unmeasured columns; measured columns get exactly zero.
pub fn masked_softmax(logits: &[f64], mask: &ColumnMask) -> Result<Vec<f64>> {
    if logits.len() != mask.width() {
        return Err(Error::invalid("logit and mask widths differ"));
    }
    if mask.is_full() {
        return Err(Error::NoActionsAvailable(mask.width()));
    }
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| !mask.is_selected(*i))
        .map(|(_, &l)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| if mask.is_selected(i) { 0.0 } else { (l - max).exp() })
        .collect();
    let total: f64 = probs.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Numerical(format!("softmax normalizer is {total}")));
    }
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// `q` independent draws (with replacement) from `policy`.
pub fn sample_actions(policy: &[f64], q: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(policy)
        .map_err(|e| Error::invalid(format!("invalid policy vector: {e}")))?;
    Ok((0..q).map(|_| dist.sample(rng)).collect())
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Calls `f(k, channel, input_offset, output_offset)` for every in-bounds
/// tap of a zero-padded 3x3 convolution, `k = channel * 9 + ky * 3 + kx`.
fn for_each_tap(ci: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    for i in 0..ci {
        for ky in 0..3 {
            for kx in 0..3 {
                let k = (i * 3 + ky) * 3 + kx;
                // output (y, x) reads input (y + ky - 1, x + kx - 1)
                for y in 1usize.saturating_sub(ky)..(h + 1 - ky).min(h) {
                    for x in 1usize.saturating_sub(kx)..(w + 1 - kx).min(w) {
                        f(k, i, (y + ky - 1) * w + x + kx - 1, y * w + x);
                    }
                }
            }
        }
    }
}

/// Rows of shifted input maps, one per tap, with zeros where the tap falls
/// outside the image.
fn im2col(input: &[f64], ci: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; ci * 9 * hw];
    for_each_tap(ci, h, w, |k, i, src, dst| cols[k * hw + dst] = input[i * hw + src]);
    cols
}

fn conv_pool_forward(
    input: &[f64],
    ci: usize,
    co: usize,
    h: usize,
    w: usize,
    weights: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<usize>) {
    let hw = h * w;
    let cols = im2col(input, ci, h, w);
    let taps = ci * 9;
    let mut z = vec![0.0; co * hw];
    for o in 0..co {
        let zo = &mut z[o * hw..(o + 1) * hw];
        for k in 0..taps {
            let wv = weights[o * taps + k];
            for (zv, cv) in zo.iter_mut().zip(&cols[k * hw..(k + 1) * hw]) {
                *zv += wv * cv;
            }
        }
    }

    let mut inv_std = vec![0.0; co];
    for o in 0..co {
        let zo = &mut z[o * hw..(o + 1) * hw];
        let mean = zo.iter().sum::<f64>() / hw as f64;
        let var = zo.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let s = 1.0 / (var + NORM_EPS).sqrt();
        inv_std[o] = s;
        zo.iter_mut().for_each(|v| *v = (*v - mean) * s);
    }
    let normalized = z;

    let (ph, pw) = (h / 2, w / 2);
    let mut pooled = vec![0.0; co * ph * pw];
    let mut argmax = vec![0usize; co * ph * pw];
    for o in 0..co {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = o * hw + (2 * py + dy) * w + 2 * px + dx;
                        let v = normalized[idx].max(0.0);
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                let k = (o * ph + py) * pw + px;
                pooled[k] = best;
                argmax[k] = best_idx;
            }
        }
    }
    (pooled, normalized, inv_std, argmax)
}

#[allow(clippy::too_many_arguments)]
fn conv_pool_backward(
    dpooled: &[f64],
    input: &[f64],
    normalized: &[f64],
    inv_std: &[f64],
    argmax: &[usize],
    ci: usize,
    co: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    grad: &mut [f64],
    need_input_grad: bool,
) -> Vec<f64> {
    let hw = h * w;
    // through max-pool and ReLU
    let mut dn = vec![0.0; co * hw];
    for (k, &idx) in argmax.iter().enumerate() {
        if normalized[idx] > 0.0 {
            dn[idx] += dpooled[k];
        }
    }
    // through instance normalization
    let mut dz = vec![0.0; co * hw];
    for o in 0..co {
        let range = o * hw..(o + 1) * hw;
        let (dno, no) = (&dn[range.clone()], &normalized[range.clone()]);
        let m1 = dno.iter().sum::<f64>() / hw as f64;
        let m2 = dno.iter().zip(no).map(|(a, b)| a * b).sum::<f64>() / hw as f64;
        for ((d, &g), &n) in dz[range].iter_mut().zip(dno).zip(no) {
            *d = inv_std[o] * (g - m1 - n * m2);
        }
    }
    // through the convolution
    let cols = im2col(input, ci, h, w);
    let taps = ci * 9;
    let mut dcols = vec![0.0; if need_input_grad { taps * hw } else { 0 }];
    for o in 0..co {
        let dzo = &dz[o * hw..(o + 1) * hw];
        for k in 0..taps {
            grad[o * taps + k] += dot(dzo, &cols[k * hw..(k + 1) * hw]);
            if need_input_grad {
                let wv = weights[o * taps + k];
                for (dc, dv) in dcols[k * hw..(k + 1) * hw].iter_mut().zip(dzo) {
                    *dc += wv * dv;
                }
            }
        }
    }
    let mut din = vec![0.0; if need_input_grad { ci * hw } else { 0 }];
    if need_input_grad {
        for_each_tap(ci, h, w, |k, i, src, dst| din[i * hw + src] += dcols[k * hw + dst]);
    }
    din
}

#[cfg(test)]
mod tests;
