use super::{check_shape, Real, Tensor};
use crate::error::Result;

/// Elementwise `max(0, x)`.
pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient where the cached input was strictly positive.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, cached_input: &Tensor<T>) -> Result<Tensor<T>> {
    check_shape("relu_backward", cached_input.shape(), grad_out.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(cached_input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}
