//! Test-only oracles, written directly from the defining sums and kept
//! independent of the library's FFT-based code paths.
#![allow(dead_code)]

use mbrsep::tensor::{Padding, Shape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(output, pad_before)` of one correlation axis, TensorFlow convention.
pub fn axis(n: usize, k: usize, s: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Same => {
            let out = n.div_ceil(s);
            let total = ((out - 1) * s + k).saturating_sub(n);
            (out, total / 2)
        }
        Padding::Valid => ((n - k) / s + 1, 0),
    }
}

/// Direct-sum cross-correlation.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, stride: (usize, usize), padding: Padding) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let (ot, pt) = axis(xs.time, ws.time, stride.0, padding);
    let (of, pf) = axis(xs.freq, ws.freq, stride.1, padding);
    Tensor::from_fn(Shape::new(xs.batch, ws.batch, ot, of), |b, o, qt, qf| {
        let mut acc = 0.0;
        for i in 0..xs.channels {
            for jt in 0..ws.time {
                for jf in 0..ws.freq {
                    let t = (qt * stride.0 + jt) as isize - pt as isize;
                    let f = (qf * stride.1 + jf) as isize - pf as isize;
                    if t >= 0 && f >= 0 && (t as usize) < xs.time && (f as usize) < xs.freq {
                        acc += x.at(b, i, t as usize, f as usize) * w.at(o, i, jt, jf);
                    }
                }
            }
        }
        acc
    })
}

/// Direct scatter-add transposed convolution; weights `(out, in, kt, kf)`.
pub fn naive_conv_transpose(x: &Tensor<f64>, w: &Tensor<f64>, stride: (usize, usize), padding: Padding) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let full = |n: usize, k: usize, s: usize| match padding {
        Padding::Same => n * s,
        Padding::Valid => (n - 1) * s + k,
    };
    let pt_len = full(xs.time, ws.time, stride.0);
    let pf_len = full(xs.freq, ws.freq, stride.1);
    let (_, pt) = axis(pt_len, ws.time, stride.0, padding);
    let (_, pf) = axis(pf_len, ws.freq, stride.1, padding);
    let mut z = Tensor::zeros(Shape::new(xs.batch, ws.batch, pt_len, pf_len));
    for b in 0..xs.batch {
        for o in 0..ws.batch {
            for i in 0..xs.channels {
                for qt in 0..xs.time {
                    for qf in 0..xs.freq {
                        let v = x.at(b, i, qt, qf);
                        for jt in 0..ws.time {
                            for jf in 0..ws.freq {
                                let t = (qt * stride.0 + jt) as isize - pt as isize;
                                let f = (qf * stride.1 + jf) as isize - pf as isize;
                                if t >= 0 && f >= 0 && (t as usize) < pt_len && (f as usize) < pf_len {
                                    *z.at_mut(b, o, t as usize, f as usize) += v * w.at(o, i, jt, jf);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    z
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Direct DFT of `x`, bins `0..=n/2`, as `(re, im)` pairs.
pub fn naive_dft(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (i, &v)| {
                let a = -2.0 * std::f64::consts::PI * ((k * i) % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .collect()
}
