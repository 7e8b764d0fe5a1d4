use serde::{Deserialize, Serialize};

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Adam hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub config: AdamConfig,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState {
            step: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            config,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
///
/// A non-finite gradient is rejected before anything is modified.
pub fn adam_step<T: Real>(params: &mut Tensor<T>, grads: &Tensor<T>, state: &mut AdamState<T>) -> Result<()> {
    params.check_same_shape("adam_step", grads)?;
    if state.m.len() != params.len() {
        return Err(Error::invalid(
            "adam_step",
            format!("state tracks {} values, parameter has {}", state.m.len(), params.len()),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite { op: "adam_step" });
    }
    apply(params.data_mut(), grads.data(), state);
    Ok(())
}

/// Same update on raw slices (biases, batch-norm scale/shift).
pub(crate) fn apply<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) {
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (ob1, ob2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
    let step_size = T::of(c.learning_rate / bc1);
    let root_bc2 = T::of(bc2.sqrt());
    let eps = T::of(c.epsilon);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + ob1 * g;
        *v = b2 * *v + ob2 * g * g;
        *p -= step_size * *m / (v.sqrt() / root_bc2 + eps);
    }
}
