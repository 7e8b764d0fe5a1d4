use std::cell::RefCell;
use std::fmt::{Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;
use realfft::RealFftPlanner;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

/// Element precision of a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    /// Tag byte used by the checkpoint format.
    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }
}

/// Cached FFT plans for one precision.
pub struct Planners<T: FftNum> {
    pub complex: FftPlanner<T>,
    pub real: RealFftPlanner<T>,
}

impl<T: FftNum> Default for Planners<T> {
    fn default() -> Self {
        Planners {
            complex: FftPlanner::new(),
            real: RealFftPlanner::new(),
        }
    }
}

/// Floating-point element type supported by the engine (`f32` or `f64`).
pub trait Real:
    Float + FftNum + Default + Sum + AddAssign + SubAssign + MulAssign + DivAssign + Display + LowerExp
{
    const DTYPE: DType;

    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// Runs `f` with this thread's plan cache.
    fn with_planners<R>(f: impl FnOnce(&mut Planners<Self>) -> R) -> R;

    /// `C = alpha * A * B + beta * C` on row/column-strided matrices.
    ///
    /// # Safety
    /// The pointers and strides must describe valid `m×k`, `k×n` and `m×n`
    /// matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

thread_local! {
    static PLANNERS_F32: RefCell<Planners<f32>> = RefCell::new(Planners::default());
    static PLANNERS_F64: RefCell<Planners<f64>> = RefCell::new(Planners::default());
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn with_planners<R>(f: impl FnOnce(&mut Planners<Self>) -> R) -> R {
        PLANNERS_F32.with(|p| f(&mut p.borrow_mut()))
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn with_planners<R>(f: impl FnOnce(&mut Planners<Self>) -> R) -> R {
        PLANNERS_F64.with(|p| f(&mut p.borrow_mut()))
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}
