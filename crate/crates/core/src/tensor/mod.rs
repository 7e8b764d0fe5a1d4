//! Dense four-axis tensors and the layer kernels the separation networks need.
//!
//! Every value flowing through a network is a [`Tensor`] laid out row-major as
//! `(batch, channel, time, frequency)`. Layer operations are free functions
//! that take tensors by reference and return fresh tensors; the only mutable
//! records are [`BatchNormState`] and [`AdamState`], each touched solely by its
//! own operation.

mod activation;
mod adam;
mod batchnorm;
mod conv;
mod dense;
mod gradcheck;
mod loss;
mod real;
mod spectral;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use activation::{relu, relu_backward};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormState, BnMode};
pub use conv::{
    conv2d_backward, conv2d_forward, conv2d_transpose_backward, conv2d_transpose_forward, AxisGeometry, ConvGrads,
    ConvLayer, ConvParams, Padding,
};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use loss::mse_loss;
pub use real::{DType, Planners, Real};

/// Extent of a tensor along its four axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub time: usize,
    pub freq: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, time: usize, freq: usize) -> Self {
        Shape {
            batch,
            channels,
            time,
            freq,
        }
    }

    pub fn len(&self) -> usize {
        self.batch * self.channels * self.time * self.freq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of values in one `(time, freq)` plane.
    pub fn plane_len(&self) -> usize {
        self.time * self.freq
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.batch, self.channels, self.time, self.freq]
    }

    pub fn with_batch(self, batch: usize) -> Self {
        Shape { batch, ..self }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.batch, self.channels, self.time, self.freq)
    }
}

/// Row-major `(batch, channel, time, freq)` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::invalid(
                "tensor",
                format!(
                    "data length {} does not match shape {shape} ({} values)",
                    data.len(),
                    shape.len()
                ),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for t in 0..shape.time {
                    for q in 0..shape.freq {
                        data.push(f(b, c, t, q));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Values drawn independently from `U(lo, hi)`.
    pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        let data = (0..shape.len()).map(|_| T::of(rng.gen_range(lo..hi))).collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, b: usize, c: usize, t: usize, f: usize) -> usize {
        ((b * self.shape.channels + c) * self.shape.time + t) * self.shape.freq + f
    }

    pub fn at(&self, b: usize, c: usize, t: usize, f: usize) -> T {
        self.data[self.offset(b, c, t, f)]
    }

    pub fn at_mut(&mut self, b: usize, c: usize, t: usize, f: usize) -> &mut T {
        let i = self.offset(b, c, t, f);
        &mut self.data[i]
    }

    /// The `(time, freq)` plane of sample `b`, channel `c`.
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let n = self.shape.plane_len();
        let start = (b * self.shape.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let n = self.shape.plane_len();
        let start = (b * self.shape.channels + c) * n;
        &mut self.data[start..start + n]
    }

    /// Reinterprets the same row-major data under another shape.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.check_same_shape("add", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, k: T) {
        for v in &mut self.data {
            *v *= k;
        }
    }

    /// Sum of products, accumulated sequentially in storage order.
    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        self.check_same_shape("dot", other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    pub(crate) fn check_same_shape(&self, op: &'static str, other: &Tensor<T>) -> Result<()> {
        check_shape(op, self.shape, other.shape)
    }

    /// Copies the frequency range `[from, to)` of every plane.
    pub fn slice_freq(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.shape.freq {
            return Err(Error::invalid(
                "slice_freq",
                format!("range [{from}, {to}) outside width {}", self.shape.freq),
            ));
        }
        let width = to - from;
        let shape = Shape {
            freq: width,
            ..self.shape
        };
        let rows = self.shape.batch * self.shape.channels * self.shape.time;
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..rows {
            let base = r * self.shape.freq;
            data.extend_from_slice(&self.data[base + from..base + to]);
        }
        Ok(Tensor { shape, data })
    }

    /// Concatenates along the frequency axis; all other axes must agree.
    pub fn concat_freq(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty { op: "concat_freq" })?;
        let s0 = first.shape;
        for p in parts {
            check_dim("concat_freq", "batch", s0.batch, p.shape.batch)?;
            check_dim("concat_freq", "channel", s0.channels, p.shape.channels)?;
            check_dim("concat_freq", "time", s0.time, p.shape.time)?;
        }
        let width: usize = parts.iter().map(|p| p.shape.freq).sum();
        let shape = Shape { freq: width, ..s0 };
        let rows = s0.batch * s0.channels * s0.time;
        let mut data = Vec::with_capacity(shape.len());
        for r in 0..rows {
            for p in parts {
                let w = p.shape.freq;
                data.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Concatenates along the channel axis; all other axes must agree.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty { op: "concat_channels" })?;
        let s0 = first.shape;
        for p in parts {
            check_dim("concat_channels", "batch", s0.batch, p.shape.batch)?;
            check_dim("concat_channels", "time", s0.time, p.shape.time)?;
            check_dim("concat_channels", "freq", s0.freq, p.shape.freq)?;
        }
        let channels: usize = parts.iter().map(|p| p.shape.channels).sum();
        let shape = Shape { channels, ..s0 };
        let mut data = Vec::with_capacity(shape.len());
        for b in 0..s0.batch {
            for p in parts {
                let block = p.shape.channels * p.shape.plane_len();
                data.extend_from_slice(&p.data[b * block..(b + 1) * block]);
            }
        }
        Ok(Tensor { shape, data })
    }

    /// Inverse of [`Tensor::concat_freq`]: splits the frequency axis into
    /// consecutive pieces of the given widths.
    pub fn split_freq(&self, widths: &[usize]) -> Result<Vec<Self>> {
        let total: usize = widths.iter().sum();
        check_dim("split_freq", "freq", self.shape.freq, total)?;
        let mut start = 0;
        widths
            .iter()
            .map(|&w| {
                let piece = self.slice_freq(start, start + w);
                start += w;
                piece
            })
            .collect()
    }

    /// Inverse of [`Tensor::concat_channels`].
    pub fn split_channels(&self, counts: &[usize]) -> Result<Vec<Self>> {
        let total: usize = counts.iter().sum();
        check_dim("split_channels", "channel", self.shape.channels, total)?;
        let plane = self.shape.plane_len();
        let mut out: Vec<Self> = counts
            .iter()
            .map(|&c| {
                Tensor::zeros(Shape {
                    channels: c,
                    ..self.shape
                })
            })
            .collect();
        for b in 0..self.shape.batch {
            let mut c0 = 0;
            for (piece, &c) in out.iter_mut().zip(counts) {
                let src = (b * self.shape.channels + c0) * plane;
                let dst = b * c * plane;
                piece.data[dst..dst + c * plane].copy_from_slice(&self.data[src..src + c * plane]);
                c0 += c;
            }
        }
        Ok(out)
    }
}

pub(crate) fn check_shape(op: &'static str, expected: Shape, got: Shape) -> Result<()> {
    check_dim(op, "batch", expected.batch, got.batch)?;
    check_dim(op, "channel", expected.channels, got.channels)?;
    check_dim(op, "time", expected.time, got.time)?;
    check_dim(op, "freq", expected.freq, got.freq)
}

use crate::error::check_dim;
