//! Temporal convolutional network inference.
//!
//! A stack of residual blocks, each two dilated causal convolutions with ReLU
//! plus a skip connection, followed by a linear head on the last time step.
//! Inputs are standardized per channel before the first block.
//!
//! Tensors are named `block{i}.conv{1|2}.{weight|bias}`,
//! `block{i}.skip.weight` (only when a block changes the channel count) and
//! `head.{weight|bias}`. Convolution weights have shape `(out, in, kernel)`;
//! tap `kernel − 1` multiplies the current sample.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};

/// Version of the weight interchange format this engine reads.
pub const WEIGHT_FORMAT_VERSION: u32 = 1;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcnMeta {
    /// Input channels.
    pub channels: usize,
    /// Input length, samples.
    pub window: usize,
    pub kernel: usize,
    /// One dilation per block.
    pub dilations: Vec<usize>,
    pub hidden_channels: usize,
}

impl Default for TcnMeta {
    fn default() -> Self {
        Self {
            channels: 6,
            window: 50,
            kernel: 3,
            dilations: vec![1, 2, 4, 8, 16],
            hidden_channels: 64,
        }
    }
}

impl TcnMeta {
    /// `1 + Σ 2·(kernel − 1)·dilation`.
    pub fn receptive_field(&self) -> usize {
        1 + self
            .dilations
            .iter()
            .map(|d| 2 * (self.kernel - 1) * d)
            .sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.window == 0 || self.kernel == 0 || self.hidden_channels == 0 {
            return Err(Error::invalid("TCN sizes must be positive"));
        }
        if self.dilations.is_empty() {
            return Err(Error::invalid("TCN needs at least one block"));
        }
        if !self.dilations.iter().all(|d| d.is_power_of_two()) {
            return Err(Error::invalid("dilations must be powers of two"));
        }
        if !self.dilations.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("dilations must be strictly increasing"));
        }
        if self.receptive_field() < self.window {
            return Err(Error::invalid(format!(
                "receptive field {} is shorter than the window {}",
                self.receptive_field(),
                self.window
            )));
        }
        Ok(())
    }

    /// Name and shape of every tensor the architecture needs.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.hidden_channels;
        let k = self.kernel;
        let mut out = Vec::new();
        for i in 0..self.dilations.len() {
            let input = if i == 0 { self.channels } else { h };
            out.push((format!("block{i}.conv1.weight"), vec![h, input, k]));
            out.push((format!("block{i}.conv1.bias"), vec![h]));
            out.push((format!("block{i}.conv2.weight"), vec![h, h, k]));
            out.push((format!("block{i}.conv2.bias"), vec![h]));
            if input != h {
                out.push((format!("block{i}.skip.weight"), vec![h, input, 1]));
            }
        }
        out.push(("head.weight".into(), vec![3, h]));
        out.push(("head.bias".into(), vec![3]));
        out
    }
}

/// Per-channel input standardization, `(x − mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }
}

/// A row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Conv1d {
    out_channels: usize,
    in_channels: usize,
    kernel: usize,
    dilation: usize,
    /// `(out, in, kernel)`, row-major.
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Conv1d {
    /// Causal convolution of a channel-major `(in, len)` buffer.
    fn apply(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.out_channels * len];
        for o in 0..self.out_channels {
            let row = &mut y[o * len..(o + 1) * len];
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let input = &x[i * len..(i + 1) * len];
                let taps = &self.weight[(o * self.in_channels + i) * self.kernel..][..self.kernel];
                for (j, w) in taps.iter().enumerate() {
                    let shift = (self.kernel - 1 - j) * self.dilation;
                    if shift >= len || *w == 0.0 {
                        continue;
                    }
                    for (yt, xt) in row[shift..].iter_mut().zip(input) {
                        *yt += w * xt;
                    }
                }
            }
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ResidualBlock {
    conv1: Conv1d,
    conv2: Conv1d,
    skip: Option<Conv1d>,
}

/// A loaded network. Immutable; [`TcnModel::forward`] is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnModel {
    meta: TcnMeta,
    norm: Normalization,
    blocks: Vec<ResidualBlock>,
    head_weight: Vec<f64>,
    head_bias: Vector3<f64>,
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

impl TcnModel {
    /// Builds a model from named tensors, checking every shape against
    /// `meta`. Errors name the offending tensor.
    pub fn from_tensors(
        meta: TcnMeta,
        norm: Normalization,
        tensors: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        meta.validate()?;
        if norm.mean.len() != meta.channels || norm.std.len() != meta.channels {
            return Err(Error::load("norm", format!("expected {} channels", meta.channels)));
        }
        if !norm.mean.iter().all(|m| m.is_finite()) {
            return Err(Error::load("norm.mean", "non-finite value"));
        }
        if !norm.std.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::load("norm.std", "values must be finite and positive"));
        }
        for name in tensors.keys() {
            if !meta.tensor_shapes().iter().any(|(n, _)| n == name) {
                return Err(Error::load(name, "unexpected tensor"));
            }
        }
        let take = |name: &str, shape: &[usize]| -> Result<Vec<f64>> {
            let t = tensors.get(name).ok_or_else(|| Error::load(name, "missing"))?;
            if t.shape != shape {
                return Err(Error::load(name, format!("shape {:?}, expected {:?}", t.shape, shape)));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::load(
                    name,
                    format!("{} values for shape {:?}", t.data.len(), shape),
                ));
            }
            if let Some(k) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::load(name, format!("non-finite value at index {k}")));
            }
            Ok(t.data.clone())
        };

        let h = meta.hidden_channels;
        let k = meta.kernel;
        let mut blocks = Vec::with_capacity(meta.dilations.len());
        for (i, &d) in meta.dilations.iter().enumerate() {
            let input = if i == 0 { meta.channels } else { h };
            let conv = |weight, bias, in_channels, kernel, dilation| Conv1d {
                out_channels: h,
                in_channels,
                kernel,
                dilation,
                weight,
                bias,
            };
            let conv1 = conv(
                take(&format!("block{i}.conv1.weight"), &[h, input, k])?,
                take(&format!("block{i}.conv1.bias"), &[h])?,
                input,
                k,
                d,
            );
            let conv2 = conv(
                take(&format!("block{i}.conv2.weight"), &[h, h, k])?,
                take(&format!("block{i}.conv2.bias"), &[h])?,
                h,
                k,
                d,
            );
            let skip = if input != h {
                Some(conv(
                    take(&format!("block{i}.skip.weight"), &[h, input, 1])?,
                    vec![0.0; h],
                    input,
                    1,
                    1,
                ))
            } else {
                None
            };
            blocks.push(ResidualBlock { conv1, conv2, skip });
        }
        let head_weight = take("head.weight", &[3, h])?;
        let head_bias = take("head.bias", &[3])?;
        Ok(Self {
            meta,
            norm,
            blocks,
            head_weight,
            head_bias: Vector3::new(head_bias[0], head_bias[1], head_bias[2]),
        })
    }

    /// Inverse of [`TcnModel::from_tensors`].
    pub fn tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        let h = self.meta.hidden_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            for (tag, c) in [("conv1", &b.conv1), ("conv2", &b.conv2)] {
                out.insert(
                    format!("block{i}.{tag}.weight"),
                    Tensor::new(vec![h, c.in_channels, c.kernel], c.weight.clone()),
                );
                out.insert(format!("block{i}.{tag}.bias"), Tensor::new(vec![h], c.bias.clone()));
            }
            if let Some(s) = &b.skip {
                out.insert(
                    format!("block{i}.skip.weight"),
                    Tensor::new(vec![h, s.in_channels, 1], s.weight.clone()),
                );
            }
        }
        out.insert("head.weight".into(), Tensor::new(vec![3, h], self.head_weight.clone()));
        out.insert(
            "head.bias".into(),
            Tensor::new(vec![3], self.head_bias.iter().cloned().collect()),
        );
        out
    }

    pub fn meta(&self) -> &TcnMeta {
        &self.meta
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn receptive_field(&self) -> usize {
        self.meta.receptive_field()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().values().map(|t| t.data.len()).sum()
    }

    /// Output for a `(channels, window)` input.
    pub fn forward(&self, input: &DMatrix<f64>) -> Result<Vector3<f64>> {
        let x = self.features(input)?;
        let out = self.head(&x, self.meta.window - 1);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("network output is non-finite"));
        }
        Ok(out)
    }

    /// Head applied at every time step, `(3, window)`. The last column is
    /// [`TcnModel::forward`]; column `t` depends on inputs `0..=t` only.
    pub fn forward_sequence(&self, input: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x = self.features(input)?;
        let len = self.meta.window;
        let mut out = DMatrix::zeros(3, len);
        for t in 0..len {
            out.set_column(t, &self.head(&x, t));
        }
        Ok(out)
    }

    fn head(&self, x: &[f64], t: usize) -> Vector3<f64> {
        let (h, len) = (self.meta.hidden_channels, self.meta.window);
        let mut out = self.head_bias;
        for o in 0..3 {
            for ch in 0..h {
                out[o] += self.head_weight[o * h + ch] * x[ch * len + t];
            }
        }
        out
    }

    /// Last-block activations, channel-major `(hidden, window)`.
    fn features(&self, input: &DMatrix<f64>) -> Result<Vec<f64>> {
        let (c, len) = (self.meta.channels, self.meta.window);
        if input.shape() != (c, len) {
            return Err(Error::invalid(format!(
                "input shape {:?}, expected ({c}, {len})",
                input.shape()
            )));
        }
        let mut x = vec![0.0; c * len];
        for ch in 0..c {
            let (m, s) = (self.norm.mean[ch], self.norm.std[ch]);
            for t in 0..len {
                x[ch * len + t] = (input[(ch, t)] - m) / s;
            }
        }
        for block in &self.blocks {
            let mut y = block.conv1.apply(&x, len);
            relu(&mut y);
            let mut y = block.conv2.apply(&y, len);
            relu(&mut y);
            match &block.skip {
                Some(skip) => {
                    for (a, b) in y.iter_mut().zip(skip.apply(&x, len)) {
                        *a += b;
                    }
                }
                None => {
                    for (a, b) in y.iter_mut().zip(&x) {
                        *a += b;
                    }
                }
            }
            x = y;
        }
        Ok(x)
    }
}
