use super::{check_shape, Real, Shape, Tensor};
use crate::error::{check_dim, Result};

/// Gradients of a dense layer.
#[derive(Clone, Debug)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

fn rows_of(s: Shape) -> usize {
    s.batch * s.channels * s.time
}

/// Affine map `W x + b` applied to every frequency row.
///
/// `weights` has shape `(1, 1, out, in)`; the input's last axis must be `in`.
pub fn dense_forward<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    const OP: &str = "dense_forward";
    let ws = weights.shape();
    let (outs, ins) = (ws.time, ws.freq);
    check_dim(OP, "weight batch", 1, ws.batch)?;
    check_dim(OP, "weight channel", 1, ws.channels)?;
    check_dim(OP, "freq", ins, input.shape().freq)?;
    check_dim(OP, "bias", outs, bias.len())?;
    let s = input.shape();
    let rows = rows_of(s);
    let mut out: Vec<T> = bias.iter().copied().cycle().take(rows * outs).collect();
    // SAFETY: dimensions and strides describe the owned buffers above.
    unsafe {
        T::gemm(
            rows,
            ins,
            outs,
            T::one(),
            input.data().as_ptr(),
            ins as isize,
            1,
            weights.data().as_ptr(),
            1,
            ins as isize,
            T::one(),
            out.as_mut_ptr(),
            outs as isize,
            1,
        );
    }
    Tensor::from_vec(Shape { freq: outs, ..s }, out)?.ensure_finite(OP)
}

pub fn dense_backward<T: Real>(
    grad_out: &Tensor<T>,
    cached_input: &Tensor<T>,
    weights: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    const OP: &str = "dense_backward";
    let ws = weights.shape();
    let (outs, ins) = (ws.time, ws.freq);
    let s = cached_input.shape();
    check_dim(OP, "freq", ins, s.freq)?;
    check_shape(OP, Shape { freq: outs, ..s }, grad_out.shape())?;
    let rows = rows_of(s);
    let mut gx = vec![T::zero(); rows * ins];
    let mut gw = vec![T::zero(); outs * ins];
    // SAFETY: as in `dense_forward`; outputs do not alias inputs.
    unsafe {
        T::gemm(
            rows,
            outs,
            ins,
            T::one(),
            grad_out.data().as_ptr(),
            outs as isize,
            1,
            weights.data().as_ptr(),
            ins as isize,
            1,
            T::zero(),
            gx.as_mut_ptr(),
            ins as isize,
            1,
        );
        T::gemm(
            outs,
            rows,
            ins,
            T::one(),
            grad_out.data().as_ptr(),
            1,
            outs as isize,
            cached_input.data().as_ptr(),
            ins as isize,
            1,
            T::zero(),
            gw.as_mut_ptr(),
            ins as isize,
            1,
        );
    }
    let mut gb = vec![T::zero(); outs];
    for row in grad_out.data().chunks_exact(outs) {
        for (b, &g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(s, gx)?.ensure_finite(OP)?,
        weights: Tensor::from_vec(ws, gw)?.ensure_finite(OP)?,
        bias: gb,
    })
}
