use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FILTER_LEN: usize = 512;
/// Added to the Gram diagonal, relative to its mean.
pub const RIDGE: f64 = 1e-12;
/// Reported in place of infinite ratios.
pub const CAP_DB: f64 = 300.0;
/// Component energies below this fraction of the estimate's energy are
/// projection round-off and count as exactly zero.
const ZERO_ENERGY: f64 = 1e-14;

/// The estimate split into target, interference and artifact components,
/// each `len + filter_len - 1` samples long.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub s_target: Vec<f64>,
    pub e_interf: Vec<f64>,
    pub e_artif: Vec<f64>,
}

/// SDR, SIR and SAR in dB; `+inf` when the error term vanishes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BssResult {
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
}

impl BssResult {
    /// The three ratios clamped to [`CAP_DB`], and whether any was clamped.
    pub fn capped(&self) -> ([f64; 3], bool) {
        let vals = [self.sdr, self.sir, self.sar];
        let capped = vals.iter().any(|&v| v > CAP_DB);
        (vals.map(|v| v.min(CAP_DB)), capped)
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Cross-correlations of every pair of signals (zero-padded to `fft_len`),
/// as spectra.
struct Spectra {
    fft_len: usize,
    spectra: Vec<Vec<Complex<f64>>>,
    planner: RealFftPlanner<f64>,
}

impl Spectra {
    fn new(signals: &[&[f64]], fft_len: usize) -> Self {
        let mut planner = RealFftPlanner::new();
        let fft = planner.plan_fft_forward(fft_len);
        let spectra = signals
            .iter()
            .map(|s| {
                let mut buf = vec![0.0; fft_len];
                buf[..s.len()].copy_from_slice(s);
                let mut out = fft.make_output_vec();
                fft.process(&mut buf, &mut out).expect("plan lengths");
                out
            })
            .collect();
        Spectra {
            fft_len,
            spectra,
            planner,
        }
    }

    /// `r[lag] = sum_t a(t) b(t + lag)` for lags in `0..fft_len` (negative
    /// lags wrap to the end).
    fn correlate(&mut self, a: usize, b: usize) -> Vec<f64> {
        let ifft = self.planner.plan_fft_inverse(self.fft_len);
        let mut prod: Vec<Complex<f64>> = self.spectra[a]
            .iter()
            .zip(&self.spectra[b])
            .map(|(x, y)| x.conj() * y)
            .collect();
        prod[0].im = 0.0;
        if let Some(last) = prod.last_mut() {
            last.im = 0.0;
        }
        let mut out = vec![0.0; self.fft_len];
        ifft.process(&mut prod, &mut out).expect("plan lengths");
        let scale = 1.0 / self.fft_len as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }
}

/// Lower-triangular Cholesky factor in place (row-major `n x n`). Fails with
/// the block index of the first pivot that is not clearly above the ridge.
fn cholesky(a: &mut [f64], n: usize, block: usize, floor: f64) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return Err(Error::Singular { index: j / block });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Projects the estimate onto the span of `filter_len` delayed copies of the
/// selected references and returns the projection.
fn project(
    spectra: &mut Spectra,
    which: &[usize],
    est: usize,
    filter_len: usize,
    out_len: usize,
    refs: &[&[f64]],
) -> Result<Vec<f64>> {
    let n = which.len() * filter_len;
    let fft_len = spectra.fft_len;
    let mut gram = vec![0.0; n * n];
    for (bi, &i) in which.iter().enumerate() {
        for (bj, &j) in which.iter().enumerate().skip(bi) {
            let r = spectra.correlate(i, j);
            // G[(i,a),(j,b)] = sum_t s_i(t - a) s_j(t - b) = r_ij(a - b).
            for a in 0..filter_len {
                for b in 0..filter_len {
                    let lag = (a + fft_len - b) % fft_len;
                    let v = r[lag];
                    gram[(bi * filter_len + a) * n + bj * filter_len + b] = v;
                    gram[(bj * filter_len + b) * n + bi * filter_len + a] = v;
                }
            }
        }
    }
    let mut rhs = vec![0.0; n];
    for (bi, &i) in which.iter().enumerate() {
        let r = spectra.correlate(i, est);
        rhs[bi * filter_len..(bi + 1) * filter_len].copy_from_slice(&r[..filter_len]);
    }
    let mean_diag = (0..n).map(|k| gram[k * n + k]).sum::<f64>() / n as f64;
    let ridge = RIDGE * mean_diag;
    for k in 0..n {
        gram[k * n + k] += ridge;
    }
    cholesky(&mut gram, n, filter_len, 10.0 * ridge).map_err(|e| match e {
        Error::Singular { index } => Error::Singular { index: which[index] },
        e => e,
    })?;
    cholesky_solve(&gram, n, &mut rhs);
    let mut proj = vec![0.0; out_len];
    for (bi, &i) in which.iter().enumerate() {
        let taps = &rhs[bi * filter_len..(bi + 1) * filter_len];
        for (t, &s) in refs[i].iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (a, &c) in taps.iter().enumerate() {
                proj[t + a] += c * s;
            }
        }
    }
    Ok(proj)
}

/// Splits `estimate` into target, interference and artifact parts relative
/// to `references[target]`, allowing each reference a `filter_len`-tap
/// distortion filter.
pub fn bss_decompose(
    estimate: &[f64],
    references: &[&[f64]],
    target: usize,
    filter_len: usize,
) -> Result<Decomposition> {
    const OP: &str = "bss_decompose";
    if references.is_empty() || target >= references.len() {
        return Err(Error::invalid(
            OP,
            format!("target {target} not among {} references", references.len()),
        ));
    }
    if filter_len == 0 {
        return Err(Error::invalid(OP, "filter_len must be >= 1"));
    }
    let len = estimate.len();
    if len == 0 {
        return Err(Error::Empty { op: OP });
    }
    if let Some(bad) = references.iter().position(|r| r.len() != len) {
        return Err(Error::invalid(
            OP,
            format!("reference {bad} has {} samples, estimate {len}", references[bad].len()),
        ));
    }
    if !estimate
        .iter()
        .chain(references.iter().flat_map(|r| r.iter()))
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite { op: OP });
    }
    let out_len = len + filter_len - 1;
    let fft_len = (len + filter_len).next_power_of_two();
    let mut signals: Vec<&[f64]> = references.to_vec();
    signals.push(estimate);
    let est = references.len();
    let mut spectra = Spectra::new(&signals, fft_len);
    let s_target = project(&mut spectra, &[target], est, filter_len, out_len, references)?;
    let all: Vec<usize> = (0..references.len()).collect();
    let p_all = project(&mut spectra, &all, est, filter_len, out_len, references)?;
    let e_interf = p_all.iter().zip(&s_target).map(|(p, s)| p - s).collect();
    let e_artif = (0..out_len)
        .map(|t| if t < len { estimate[t] } else { 0.0 } - p_all[t])
        .collect();
    Ok(Decomposition {
        s_target,
        e_interf,
        e_artif,
    })
}

fn ratio_db(num: f64, den: f64, floor: f64) -> f64 {
    if den <= floor {
        f64::INFINITY
    } else {
        10.0 * (num / den).log10()
    }
}

/// SDR, SIR and SAR of `estimate` for `references[target]`.
pub fn bss_eval(estimate: &[f64], references: &[&[f64]], target: usize, filter_len: usize) -> Result<BssResult> {
    let d = bss_decompose(estimate, references, target, filter_len)?;
    let floor = ZERO_ENERGY * energy(estimate);
    let target_energy = energy(&d.s_target);
    if target_energy <= floor {
        return Err(Error::invalid(
            "bss_eval",
            "estimate has no energy in the span of the target reference",
        ));
    }
    let interf = energy(&d.e_interf);
    let artif = energy(&d.e_artif);
    let distortion: Vec<f64> = d.e_interf.iter().zip(&d.e_artif).map(|(a, b)| a + b).collect();
    let source: Vec<f64> = d.s_target.iter().zip(&d.e_interf).map(|(a, b)| a + b).collect();
    Ok(BssResult {
        sdr: ratio_db(target_energy, energy(&distortion), floor),
        sir: ratio_db(target_energy, interf, floor),
        sar: ratio_db(energy(&source), artif, floor),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_a_small_system() {
        // [[4, 2], [2, 3]] x = [2, 1]  ->  x = [0.5, 0]
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        cholesky(&mut a, 2, 1, 0.0).unwrap();
        let mut b = vec![2.0, 1.0];
        cholesky_solve(&a, 2, &mut b);
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
    }

    #[test]
    fn dependent_pivot_names_its_block() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            cholesky(&mut a, 2, 1, 1e-12),
            Err(Error::Singular { index: 1 })
        ));
    }

    #[test]
    fn capping() {
        let r = BssResult {
            sdr: 6.0,
            sir: f64::INFINITY,
            sar: 301.0,
        };
        assert_eq!(r.capped(), ([6.0, 300.0, 300.0], true));
        let r = BssResult {
            sdr: 1.0,
            sir: 2.0,
            sar: 3.0,
        };
        assert!(!r.capped().1);
    }
}
