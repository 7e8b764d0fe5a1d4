use serde::{Deserialize, Serialize};

use super::spectral::{KernelBank, KernelSpectra, SpectralConv};
use super::{check_shape, Real, Shape, Tensor};
use crate::error::{check_dim, Error, Result};

/// Border handling of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Padding {
    /// Output length `ceil(input / stride)`; zero padding split with the
    /// smaller half before the signal.
    Same,
    /// No padding; output length `(input - kernel) / stride + 1`.
    Valid,
}

/// Hyper-parameters of a 2-D convolution or transposed convolution.
///
/// Kernel extents are written `(time, frequency)`. For a transposed
/// convolution `in_channels`/`out_channels` refer to the layer itself, and the
/// stride is its upsampling factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvParams {
    pub kernel_time: usize,
    pub kernel_freq: usize,
    pub stride_time: usize,
    pub stride_freq: usize,
    pub out_channels: usize,
    pub in_channels: usize,
    pub padding: Padding,
    pub use_bias: bool,
}

impl ConvParams {
    /// `filters` kernels of size `(time, freq)`, Same padding, unit stride, with bias.
    pub fn new(filters: usize, in_channels: usize, kernel: (usize, usize)) -> Self {
        ConvParams {
            kernel_time: kernel.0,
            kernel_freq: kernel.1,
            stride_time: 1,
            stride_freq: 1,
            out_channels: filters,
            in_channels,
            padding: Padding::Same,
            use_bias: true,
        }
    }

    pub fn with_stride(mut self, time: usize, freq: usize) -> Self {
        self.stride_time = time;
        self.stride_freq = freq;
        self
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn without_bias(mut self) -> Self {
        self.use_bias = false;
        self
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel_time, self.kernel_freq)
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> usize {
        self.weight_shape().len() + if self.use_bias { self.out_channels } else { 0 }
    }

    fn validate(&self, op: &'static str) -> Result<()> {
        if self.kernel_time == 0 || self.kernel_freq == 0 {
            return Err(Error::invalid(op, "kernel extents must be >= 1"));
        }
        if self.stride_time == 0 || self.stride_freq == 0 {
            return Err(Error::invalid(op, "strides must be >= 1"));
        }
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(Error::invalid(op, "channel counts must be >= 1"));
        }
        Ok(())
    }

    /// Spatial output `(time, freq)` of a convolution on a `(time, freq)` input.
    pub fn conv_output(&self, time: usize, freq: usize) -> Result<(usize, usize)> {
        let t = AxisGeometry::conv(time, self.kernel_time, self.stride_time, self.padding)?;
        let f = AxisGeometry::conv(freq, self.kernel_freq, self.stride_freq, self.padding)?;
        Ok((t.output, f.output))
    }

    /// Spatial output `(time, freq)` of a transposed convolution.
    pub fn transpose_output(&self, time: usize, freq: usize) -> Result<(usize, usize)> {
        let t = AxisGeometry::transpose(time, self.kernel_time, self.stride_time, self.padding)?;
        let f = AxisGeometry::transpose(freq, self.kernel_freq, self.stride_freq, self.padding)?;
        Ok((t.input, f.input))
    }
}

/// One spatial axis of a correlation `y[q] = sum_j x[q*stride + j - pad_before] w[j]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AxisGeometry {
    pub input: usize,
    pub output: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_before: usize,
}

impl AxisGeometry {
    pub fn conv(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        if input == 0 {
            return Err(Error::Empty { op: "conv2d" });
        }
        match padding {
            Padding::Same => {
                let output = input.div_ceil(stride);
                let total = ((output - 1) * stride + kernel).saturating_sub(input);
                Ok(AxisGeometry {
                    input,
                    output,
                    kernel,
                    stride,
                    pad_before: total / 2,
                })
            }
            Padding::Valid => {
                if kernel > input {
                    return Err(Error::invalid(
                        "conv2d",
                        format!("valid padding needs input {input} >= kernel {kernel}"),
                    ));
                }
                Ok(AxisGeometry {
                    input,
                    output: (input - kernel) / stride + 1,
                    kernel,
                    stride,
                    pad_before: 0,
                })
            }
        }
    }

    /// Geometry of the correlation whose adjoint is a transposed convolution
    /// with `input` samples; `self.input` is the transposed output length.
    pub fn transpose(input: usize, kernel: usize, stride: usize, padding: Padding) -> Result<Self> {
        if input == 0 {
            return Err(Error::Empty { op: "conv2d_transpose" });
        }
        let full = match padding {
            Padding::Same => input * stride,
            Padding::Valid => (input - 1) * stride + kernel,
        };
        let g = Self::conv(full, kernel, stride, padding)?;
        debug_assert_eq!(g.output, input);
        Ok(g)
    }
}

/// Gradients of a convolution-type layer.
#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    /// Empty when the layer has no bias.
    pub bias: Vec<T>,
}

fn check_weights<T: Real>(op: &'static str, weights: &Tensor<T>, params: &ConvParams) -> Result<()> {
    check_shape(op, params.weight_shape(), weights.shape())
}

fn check_bias<T>(op: &'static str, bias: Option<&[T]>, params: &ConvParams) -> Result<()> {
    match bias {
        Some(b) => check_dim(op, "bias", params.out_channels, b.len()),
        None => Ok(()),
    }
}

fn add_bias<T: Real>(y: &mut Tensor<T>, bias: Option<&[T]>) {
    let Some(bias) = bias else { return };
    let s = y.shape();
    for b in 0..s.batch {
        for (c, &v) in bias.iter().enumerate() {
            for x in y.plane_mut(b, c) {
                *x += v;
            }
        }
    }
}

fn bias_grad<T: Real>(grad_out: &Tensor<T>, params: &ConvParams) -> Vec<T> {
    if !params.use_bias {
        return Vec::new();
    }
    let s = grad_out.shape();
    (0..s.channels)
        .map(|c| {
            (0..s.batch).fold(T::zero(), |acc, b| {
                acc + grad_out.plane(b, c).iter().fold(T::zero(), |a, &v| a + v)
            })
        })
        .collect()
}

/// A convolution or transposed convolution layer holding its FFT plan and
/// the kernel spectra of the latest weights it saw, so that a backward pass
/// with unchanged weights skips re-transforming them.
pub struct ConvLayer<T: Real> {
    params: ConvParams,
    transpose: bool,
    engine: Option<((usize, usize), SpectralConv<T>)>,
    kernels: KernelSpectra<T>,
    /// Weights whose spectra are in `kernels`, empty when none are.
    kernels_of: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(params: ConvParams, transpose: bool) -> Result<Self> {
        params.validate(if transpose { "conv2d_transpose" } else { "conv2d" })?;
        Ok(ConvLayer {
            params,
            transpose,
            engine: None,
            kernels: KernelSpectra::default(),
            kernels_of: Vec::new(),
        })
    }

    pub fn params(&self) -> &ConvParams {
        &self.params
    }

    pub fn is_transpose(&self) -> bool {
        self.transpose
    }

    fn op(&self, backward: bool) -> &'static str {
        match (self.transpose, backward) {
            (false, false) => "conv2d_forward",
            (false, true) => "conv2d_backward",
            (true, false) => "conv2d_transpose_forward",
            (true, true) => "conv2d_transpose_backward",
        }
    }

    /// Output shape for an input of shape `input`.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let p = &self.params;
        check_dim(self.op(false), "channel", p.in_channels, input.channels)?;
        let (t, f) = if self.transpose {
            p.transpose_output(input.time, input.freq)?
        } else {
            p.conv_output(input.time, input.freq)?
        };
        Ok(Shape::new(input.batch, p.out_channels, t, f))
    }

    /// Builds the plan for `(time, freq)` inputs if needed and makes sure the
    /// cached kernel spectra belong to `weights`.
    fn prepare(&mut self, time: usize, freq: usize, weights: &Tensor<T>) -> Result<()> {
        if !matches!(&self.engine, Some((dims, _)) if *dims == (time, freq)) {
            let p = &self.params;
            let geometry = if self.transpose {
                AxisGeometry::transpose
            } else {
                AxisGeometry::conv
            };
            let t = geometry(time, p.kernel_time, p.stride_time, p.padding)?;
            let f = geometry(freq, p.kernel_freq, p.stride_freq, p.padding)?;
            self.engine = Some(((time, freq), SpectralConv::new(t, f)));
            self.kernels_of.clear();
        }
        if self.kernels_of.as_slice() != weights.data() {
            let bank = self.bank(weights);
            let engine = &self.engine.as_ref().expect("engine was just built").1;
            engine.prepare(bank, &mut self.kernels);
            self.kernels_of.clear();
            self.kernels_of.extend_from_slice(weights.data());
        }
        Ok(())
    }

    /// The weights viewed in correlation terms.
    fn bank<'w>(&self, weights: &'w Tensor<T>) -> KernelBank<'w, T> {
        let p = &self.params;
        if self.transpose {
            // The layer input is the correlation output.
            KernelBank {
                data: weights.data(),
                outputs: p.in_channels,
                inputs: p.out_channels,
                swapped: true,
            }
        } else {
            KernelBank {
                data: weights.data(),
                outputs: p.out_channels,
                inputs: p.in_channels,
                swapped: false,
            }
        }
    }

    pub fn forward(&mut self, input: &Tensor<T>, weights: &Tensor<T>, bias: Option<&[T]>) -> Result<Tensor<T>> {
        let op = self.op(false);
        check_weights(op, weights, &self.params)?;
        check_bias(op, bias, &self.params)?;
        let s = input.shape();
        if s.is_empty() {
            return Err(Error::Empty { op });
        }
        let out = self.output_shape(s)?;
        self.prepare(s.time, s.freq, weights)?;
        let engine = &self.engine.as_ref().expect("prepared").1;
        let data = if self.transpose {
            engine.adjoint_with(input.data(), s.batch, &self.kernels)
        } else {
            engine.correlate_with(input.data(), s.batch, &self.kernels)
        };
        let mut y = Tensor::from_vec(out, data)?;
        add_bias(&mut y, bias);
        y.ensure_finite(op)
    }

    pub fn backward(
        &mut self,
        grad_out: &Tensor<T>,
        cached_input: &Tensor<T>,
        weights: &Tensor<T>,
    ) -> Result<ConvGrads<T>> {
        let op = self.op(true);
        check_weights(op, weights, &self.params)?;
        let s = cached_input.shape();
        check_shape(op, self.output_shape(s)?, grad_out.shape())?;
        self.prepare(s.time, s.freq, weights)?;
        let bank = self.bank(weights);
        let (engine, kernels) = (&self.engine.as_ref().expect("prepared").1, &self.kernels);
        let (gx, gw) = if self.transpose {
            engine.gradients(grad_out.data(), cached_input.data(), s.batch, kernels, bank, false)
        } else {
            engine.gradients(cached_input.data(), grad_out.data(), s.batch, kernels, bank, true)
        };
        Ok(ConvGrads {
            input: Tensor::from_vec(s, gx)?.ensure_finite(op)?,
            weights: Tensor::from_vec(self.params.weight_shape(), gw)?.ensure_finite(op)?,
            bias: bias_grad(grad_out, &self.params),
        })
    }
}

/// 2-D cross-correlation (no kernel flip) of a `(B, in, T, F)` input with
/// `(out, in, kt, kf)` weights.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    params: &ConvParams,
) -> Result<Tensor<T>> {
    ConvLayer::new(*params, false)?.forward(input, weights, bias)
}

/// Gradients of [`conv2d_forward`] given the upstream gradient.
pub fn conv2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    weights: &Tensor<T>,
    params: &ConvParams,
) -> Result<ConvGrads<T>> {
    ConvLayer::new(*params, false)?.backward(grad_out, cached_input, weights)
}

/// Transposed convolution: the adjoint of [`conv2d_forward`] with respect to
/// its input, with `(out, in, kt, kf)` weights in the layer's own channel terms.
pub fn conv2d_transpose_forward<T: Real>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: Option<&[T]>,
    params: &ConvParams,
) -> Result<Tensor<T>> {
    ConvLayer::new(*params, true)?.forward(input, weights, bias)
}

/// Gradients of [`conv2d_transpose_forward`].
pub fn conv2d_transpose_backward<T: Real>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    weights: &Tensor<T>,
    params: &ConvParams,
) -> Result<ConvGrads<T>> {
    ConvLayer::new(*params, true)?.backward(grad_out, cached_input, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn scalar_kernel_scales_input() {
        let x = t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]);
        let w = t(Shape::new(1, 1, 1, 1), &[2.0]);
        let y = conv2d_forward(&x, &w, None, &ConvParams::new(1, 1, (1, 1))).unwrap();
        assert_close(y.data(), &[2.0, 4.0, 6.0, 8.0], 1e-12);
    }

    #[test]
    fn valid_ones_kernel_sums_windows() {
        let x = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
        let w = Tensor::full(Shape::new(1, 1, 2, 2), 1.0);
        let p = ConvParams::new(1, 1, (2, 2)).with_padding(Padding::Valid);
        let y = conv2d_forward(&x, &w, None, &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_close(y.data(), &[4.0; 4], 1e-12);
    }

    #[test]
    fn same_padding_centres_odd_kernels() {
        // 1x3 kernel [1, 10, 100] on [1, 2, 3]: y[q] = x[q-1] + 10 x[q] + 100 x[q+1].
        let x = t(Shape::new(1, 1, 1, 3), &[1.0, 2.0, 3.0]);
        let w = t(Shape::new(1, 1, 1, 3), &[1.0, 10.0, 100.0]);
        let y = conv2d_forward(&x, &w, None, &ConvParams::new(1, 1, (1, 3))).unwrap();
        assert_close(y.data(), &[210.0, 321.0, 32.0], 1e-9);
    }

    #[test]
    fn bias_is_added_per_channel() {
        let x = Tensor::full(Shape::new(2, 1, 2, 3), 1.0);
        let w = t(Shape::new(2, 1, 1, 1), &[1.0, -1.0]);
        let y = conv2d_forward(&x, &w, Some(&[0.5, 0.25]), &ConvParams::new(2, 1, (1, 1))).unwrap();
        assert!(y.plane(1, 0).iter().all(|&v| (v - 1.5).abs() < 1e-12));
        assert!(y.plane(1, 1).iter().all(|&v| (v + 0.75).abs() < 1e-12));
    }

    #[test]
    fn strided_same_output_is_ceil() {
        let p = ConvParams::new(3, 1, (7, 101)).with_stride(1, 3);
        assert_eq!(p.conv_output(29, 720).unwrap(), (29, 240));
        assert_eq!(p.conv_output(29, 721).unwrap(), (29, 241));
        let p = ConvParams::new(1, 1, (4, 4)).with_stride(2, 5);
        assert_eq!(p.conv_output(9, 11).unwrap(), (5, 3));
    }

    #[test]
    fn table_sized_layers_keep_shape() {
        let p = ConvParams::new(25, 1, (11, 42));
        assert_eq!(p.conv_output(29, 1025).unwrap(), (29, 1025));
        let p = ConvParams::new(1, 5, (29, 1025));
        assert_eq!(p.transpose_output(29, 1025).unwrap(), (29, 1025));
    }

    #[test]
    fn transpose_scatter_adds_with_stride() {
        let (a, b) = (2.0, -3.0);
        let (w0, w1, w2) = (0.5, 7.0, 1.5);
        let x = t(Shape::new(1, 1, 1, 2), &[a, b]);
        let w = t(Shape::new(1, 1, 1, 3), &[w0, w1, w2]);
        let p = ConvParams::new(1, 1, (1, 3))
            .with_stride(1, 2)
            .with_padding(Padding::Valid);
        let y = conv2d_transpose_forward(&x, &w, None, &p).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 1, 5));
        assert_close(y.data(), &[a * w0, a * w1, a * w2 + b * w0, b * w1, b * w2], 1e-12);
    }

    #[test]
    fn transpose_scalar_kernel() {
        let x = t(Shape::new(1, 1, 2, 2), &[1.0, -2.0, 0.5, 4.0]);
        let w = t(Shape::new(1, 1, 1, 1), &[3.0]);
        let p = ConvParams::new(1, 1, (1, 1));
        let y = conv2d_transpose_forward(&x, &w, None, &p).unwrap();
        assert_close(y.data(), &[3.0, -6.0, 1.5, 12.0], 1e-12);
        let g = conv2d_transpose_backward(&y, &x, &w, &p).unwrap();
        assert_close(g.input.data(), &y.map(|v| 3.0 * v).into_data(), 1e-9);
    }

    #[test]
    fn sum_loss_gradients_of_scalar_kernel() {
        let x = t(Shape::new(1, 1, 2, 3), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let w = t(Shape::new(1, 1, 1, 1), &[2.0]);
        let p = ConvParams::new(1, 1, (1, 1));
        let ones = Tensor::full(Shape::new(1, 1, 2, 3), 1.0);
        let g = conv2d_backward(&ones, &x, &w, &p).unwrap();
        assert_close(g.input.data(), &[2.0; 6], 1e-12);
        assert_close(g.weights.data(), &[21.0], 1e-9);
        assert_close(&g.bias, &[6.0], 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let x = Tensor::full(Shape::new(2, 2, 4, 5), 0.3);
        let w = Tensor::full(Shape::new(3, 2, 3, 2), 0.1);
        let p = ConvParams::new(3, 2, (3, 2));
        let g = conv2d_backward(&Tensor::zeros(Shape::new(2, 3, 4, 5)), &x, &w, &p).unwrap();
        assert_eq!(g.input.max_abs(), 0.0);
        assert_eq!(g.weights.max_abs(), 0.0);
        let gt = conv2d_transpose_backward(
            &Tensor::zeros(Shape::new(2, 3, 4, 5)),
            &x,
            &Tensor::full(Shape::new(3, 2, 3, 2), 0.1),
            &p.with_padding(Padding::Same),
        );
        // in/out swap: transposed layer maps 2 -> 3 channels with (3, 2, ..) weights
        let gt = gt.unwrap();
        assert_eq!(gt.input.max_abs(), 0.0);
        assert_eq!(gt.weights.max_abs(), 0.0);
    }

    #[test]
    fn shape_errors_name_the_axis() {
        let x = Tensor::<f64>::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::<f64>::zeros(Shape::new(1, 1, 3, 3));
        let err = conv2d_forward(&x, &w, None, &ConvParams::new(1, 1, (3, 3))).unwrap_err();
        assert!(err.to_string().contains("channel"), "{err}");
        let empty = Tensor::<f64>::zeros(Shape::new(1, 1, 0, 4));
        assert!(conv2d_forward(&empty, &w, None, &ConvParams::new(1, 1, (3, 3))).is_err());
    }
}
