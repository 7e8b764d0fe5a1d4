use serde::{Deserialize, Serialize};

use super::{check_shape, Real, Tensor};
use crate::error::{check_dim, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.99;
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Whether batch statistics or the tracked moving statistics normalise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnMode {
    Train,
    Infer,
}

/// Per-channel batch normalisation parameters and moving statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub moving_mean: Vec<T>,
    pub moving_var: Vec<T>,
    pub momentum: f64,
    pub epsilon: f64,
    pub affine: bool,
}

impl<T: Real> BatchNormState<T> {
    /// Unit scale, zero shift, moving mean 0 and variance 1.
    pub fn new(channels: usize, affine: bool) -> Self {
        BatchNormState {
            channels,
            gamma: if affine { vec![T::one(); channels] } else { Vec::new() },
            beta: if affine { vec![T::zero(); channels] } else { Vec::new() },
            moving_mean: vec![T::zero(); channels],
            moving_var: vec![T::one(); channels],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
            affine,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    /// Trainable scale/shift plus the two tracked statistics.
    pub fn param_count(&self) -> usize {
        if self.affine {
            4 * self.channels
        } else {
            2 * self.channels
        }
    }

    fn scale_shift(&self, c: usize) -> (T, T) {
        if self.affine {
            (self.gamma[c], self.beta[c])
        } else {
            (T::one(), T::zero())
        }
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub normalized: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mode: BnMode,
}

/// Normalises each channel over `(batch, time, freq)`.
///
/// In `Train` mode the batch statistics are used and folded into the moving
/// statistics with the state's momentum; `Infer` mode uses the moving
/// statistics only.
pub fn batchnorm_forward<T: Real>(
    input: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    const OP: &str = "batchnorm_forward";
    let s = input.shape();
    check_dim(OP, "channel", state.channels, s.channels)?;
    let count = (s.batch * s.plane_len()) as f64;
    let mut normalized = Tensor::zeros(s);
    let mut out = Tensor::zeros(s);
    let mut inv_std = Vec::with_capacity(s.channels);
    for c in 0..s.channels {
        let (mean, var) = match mode {
            BnMode::Train => {
                let mut sum = 0.0f64;
                for b in 0..s.batch {
                    sum += input.plane(b, c).iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean = sum / count;
                let mut sq = 0.0f64;
                for b in 0..s.batch {
                    sq += input
                        .plane(b, c)
                        .iter()
                        .map(|v| (v.as_f64() - mean).powi(2))
                        .sum::<f64>();
                }
                let var = sq / count;
                let m = state.momentum;
                state.moving_mean[c] = T::of(state.moving_mean[c].as_f64() * m + mean * (1.0 - m));
                state.moving_var[c] = T::of(state.moving_var[c].as_f64() * m + var * (1.0 - m));
                (mean, var)
            }
            BnMode::Infer => (state.moving_mean[c].as_f64(), state.moving_var[c].as_f64()),
        };
        let istd = 1.0 / (var + state.epsilon).sqrt();
        let (gamma, beta) = state.scale_shift(c);
        let (mean_t, istd_t) = (T::of(mean), T::of(istd));
        for b in 0..s.batch {
            let src = input.plane(b, c);
            let nrm = normalized.plane_mut(b, c);
            for (n, &x) in nrm.iter_mut().zip(src) {
                *n = (x - mean_t) * istd_t;
            }
            let nrm = normalized.plane(b, c).to_vec();
            for (o, n) in out.plane_mut(b, c).iter_mut().zip(nrm) {
                *o = gamma * n + beta;
            }
        }
        inv_std.push(istd_t);
    }
    Ok((
        out.ensure_finite(OP)?,
        BatchNormCache {
            normalized,
            inv_std,
            mode,
        },
    ))
}

/// Input gradient plus `(d_gamma, d_beta)` (empty when not affine).
pub fn batchnorm_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
    state: &BatchNormState<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    const OP: &str = "batchnorm_backward";
    let s = grad_out.shape();
    check_shape(OP, cache.normalized.shape(), s)?;
    let count = (s.batch * s.plane_len()) as f64;
    let mut gx = Tensor::zeros(s);
    let mut dgamma = Vec::new();
    let mut dbeta = Vec::new();
    for c in 0..s.channels {
        let (gamma, _) = state.scale_shift(c);
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for b in 0..s.batch {
            for (&g, &n) in grad_out.plane(b, c).iter().zip(cache.normalized.plane(b, c)) {
                sum_g += g.as_f64();
                sum_gx += (g * n).as_f64();
            }
        }
        if state.affine {
            dgamma.push(T::of(sum_gx));
            dbeta.push(T::of(sum_g));
        }
        let istd = cache.inv_std[c];
        for b in 0..s.batch {
            let g = grad_out.plane(b, c);
            let n = cache.normalized.plane(b, c);
            let dst = gx.plane_mut(b, c);
            match cache.mode {
                BnMode::Train => {
                    let mg = T::of(sum_g / count);
                    let mgx = T::of(sum_gx / count);
                    for ((d, &g), &n) in dst.iter_mut().zip(g).zip(n) {
                        *d = gamma * istd * (g - mg - n * mgx);
                    }
                }
                BnMode::Infer => {
                    for (d, &g) in dst.iter_mut().zip(g) {
                        *d = gamma * istd * g;
                    }
                }
            }
        }
    }
    Ok((gx.ensure_finite(OP)?, dgamma, dbeta))
}
