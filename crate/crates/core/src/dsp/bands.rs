use serde::{Deserialize, Serialize};

use super::{StftConfig, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// `1125 ln(1 + f / 700)`.
pub fn mel(hz: f64) -> Result<f64> {
    if !(hz >= 0.0) {
        return Err(Error::invalid("mel", format!("frequency {hz} Hz is negative")));
    }
    Ok(1125.0 * (hz / 700.0).ln_1p())
}

/// Inverse of [`mel`].
pub fn inv_mel(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::invalid("inv_mel", format!("mel value {m} is negative")));
    }
    Ok(700.0 * (m / 1125.0).exp_m1())
}

/// One overlapped frequency band: the half-open bin range `[bin_from, bin_to)`
/// and the frequency stride of the band's first convolution.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub bin_from: usize,
    pub bin_to: usize,
    pub stride_freq: usize,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, bin_from: usize, bin_to: usize, stride_freq: usize) -> Self {
        BandSpec {
            name: name.into(),
            bin_from,
            bin_to,
            stride_freq,
        }
    }

    pub fn width(&self) -> usize {
        self.bin_to - self.bin_from
    }

    /// Width after the strided first layer.
    pub fn output_width(&self) -> usize {
        self.width().div_ceil(self.stride_freq)
    }

    /// Edge frequencies in Hz, the upper one capped at Nyquist.
    pub fn hz_range(&self, config: &StftConfig, sample_rate: u32) -> (f64, f64) {
        let nyquist = sample_rate as f64 / 2.0;
        (
            config.bin_hz(self.bin_from, sample_rate).min(nyquist),
            config.bin_hz(self.bin_to, sample_rate).min(nyquist),
        )
    }

    pub fn validate(&self, bins: usize) -> Result<()> {
        if self.bin_from >= self.bin_to || self.bin_to > bins {
            return Err(Error::invalid(
                "band",
                format!(
                    "band {} [{}, {}) does not fit in {bins} bins",
                    self.name, self.bin_from, self.bin_to
                ),
            ));
        }
        if self.stride_freq == 0 {
            return Err(Error::invalid("band", format!("band {} has zero stride", self.name)));
        }
        Ok(())
    }
}

/// The five bands a-e used by the multi-band network.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("a", 0, 73, 1),
        BandSpec::new("b", 26, 156, 1),
        BandSpec::new("c", 73, 305, 1),
        BandSpec::new("d", 221, 571, 1),
        BandSpec::new("e", 305, 1025, 3),
    ]
}

/// `k` overlapped bands from `k + 2` points equally spaced in mel between
/// `f_lo` and `f_hi`; band `i` spans points `i..=i + 2`. Bins assume the
/// default 44.1 kHz rate with `bins = fft_size / 2 + 1`.
pub fn mel_band_edges(k: usize, f_lo: f64, f_hi: f64, bins: usize) -> Result<Vec<BandSpec>> {
    const OP: &str = "mel_band_edges";
    if k == 0 || bins < 2 {
        return Err(Error::invalid(OP, "need at least one band and two bins"));
    }
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::invalid(OP, format!("degenerate range {f_lo}..{f_hi} Hz")));
    }
    let (m_lo, m_hi) = (mel(f_lo)?, mel(f_hi)?);
    let step = (m_hi - m_lo) / (k + 1) as f64;
    let to_bin = |m: f64| -> Result<f64> { Ok(inv_mel(m)? / nyquist * (bins - 1) as f64) };
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let lo = to_bin(m_lo + step * i as f64)?.floor() as usize;
        let hi = if i + 1 == k {
            // The last band reaches `f_hi` exactly; avoid rounding it away.
            (to_bin(m_hi)?.ceil() as usize + 1).min(bins)
        } else {
            (to_bin(m_lo + step * (i + 2) as f64)?.ceil() as usize + 1).min(bins)
        };
        let name = band_name(i);
        if hi <= lo {
            return Err(Error::invalid(OP, format!("band {name} is empty")));
        }
        out.push(BandSpec::new(name, lo, hi, 1));
    }
    Ok(out)
}

fn band_name(i: usize) -> String {
    if i < 26 {
        ((b'a' + i as u8) as char).to_string()
    } else {
        format!("band{i}")
    }
}

/// Copies each band's bins out of a `(B, C, T, F)` patch.
pub fn slice_bands<T: Real>(patch: &Tensor<T>, bands: &[BandSpec]) -> Result<Vec<Tensor<T>>> {
    bands
        .iter()
        .map(|b| {
            b.validate(patch.shape().freq)?;
            patch.slice_freq(b.bin_from, b.bin_to)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn mel_reference_values() {
        assert_eq!(mel(0.0).unwrap(), 0.0);
        assert!((mel(700.0).unwrap() - 1125.0 * 2f64.ln()).abs() < 1e-12);
        assert!((mel(700.0).unwrap() - 779.79).abs() < 0.01);
        assert!((mel(22050.0).unwrap() - 3916.4).abs() < 0.05);
        assert!(mel(-1.0).is_err());
        assert!(inv_mel(-1.0).is_err());
    }

    #[test]
    fn default_band_table() {
        let b = default_bands();
        let widths: Vec<_> = b.iter().map(BandSpec::width).collect();
        assert_eq!(widths, [73, 130, 232, 350, 720]);
        let out: Vec<_> = b.iter().map(BandSpec::output_width).collect();
        assert_eq!(out, [73, 130, 232, 350, 240]);
        assert_eq!(out.iter().sum::<usize>(), 1025);
        let cfg = StftConfig::default();
        let hz = |i: usize| {
            let (lo, hi) = b[i].hz_range(&cfg, 44_100);
            (lo.round(), hi.round())
        };
        assert_eq!(hz(0), (0.0, 1572.0));
        assert_eq!(hz(4), (6568.0, 22050.0));
        assert_eq!(b[4].stride_freq, 3);
    }

    #[test]
    fn single_mel_band_spans_the_range() {
        let b = mel_band_edges(1, 0.0, 22050.0, 1025).unwrap();
        assert_eq!((b[0].bin_from, b[0].bin_to), (0, 1025));
    }

    #[test]
    fn mel_bands_increase_and_overlap() {
        let b = mel_band_edges(5, 0.0, 22050.0, 1025).unwrap();
        for w in b.windows(2) {
            assert!(w[1].bin_from > w[0].bin_from && w[1].bin_to > w[0].bin_to);
            assert!(w[1].bin_from < w[0].bin_to);
        }
        assert_eq!(b[4].bin_to, 1025);
    }

    #[test]
    fn degenerate_mel_ranges_are_rejected() {
        assert!(mel_band_edges(0, 0.0, 100.0, 1025).is_err());
        assert!(mel_band_edges(3, 500.0, 500.0, 1025).is_err());
        assert!(mel_band_edges(3, 0.0, 30000.0, 1025).is_err());
    }

    #[test]
    fn slices_are_independent_copies() {
        let p = Tensor::<f32>::from_fn(Shape::new(1, 1, 29, 1025), |_, _, t, f| (t * 1025 + f) as f32);
        let mut parts = slice_bands(&p, &default_bands()).unwrap();
        let widths: Vec<_> = parts.iter().map(|t| t.shape().freq).collect();
        assert_eq!(widths, [73, 130, 232, 350, 720]);
        assert_eq!(parts[1].at(0, 0, 0, 0), 26.0);
        parts[0].data_mut().fill(-1.0);
        assert_eq!(parts[1].at(0, 0, 0, 0), 26.0);
        let full = slice_bands(&p, &[BandSpec::new("all", 0, 1025, 1)]).unwrap();
        assert_eq!(full[0], p);
        assert!(slice_bands(&p, &[BandSpec::new("x", 1000, 1030, 1)]).is_err());
    }
}
