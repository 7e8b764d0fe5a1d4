use super::{Real, Tensor};
use crate::error::Result;

/// Mean squared error and its gradient `2 (estimate - reference) / N`.
pub fn mse_loss<T: Real>(estimate: &Tensor<T>, reference: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    estimate.check_same_shape("mse_loss", reference)?;
    let n = estimate.len().max(1) as f64;
    let mut total = 0.0f64;
    let scale = T::of(2.0 / n);
    let grad = estimate
        .data()
        .iter()
        .zip(reference.data())
        .map(|(&e, &r)| {
            let d = e - r;
            total += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    Ok((T::of(total / n), Tensor::from_vec(estimate.shape(), grad)?))
}
