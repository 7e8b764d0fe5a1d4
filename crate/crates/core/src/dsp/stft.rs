use realfft::num_complex::Complex;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use super::AudioClip;
use crate::error::{check_dim, Error, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Hann,
}

/// STFT framing. `bins` is always `fft_size / 2 + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window: WindowKind,
    pub window_size: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub bins: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window: WindowKind::Hann,
            window_size: 2048,
            hop: 512,
            fft_size: 2048,
            bins: 1025,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        const OP: &str = "stft_config";
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::invalid(OP, "hop must be in 1..=window_size"));
        }
        if self.window_size > self.fft_size {
            return Err(Error::invalid(OP, "window_size exceeds fft_size"));
        }
        check_dim(OP, "bins", self.fft_size / 2 + 1, self.bins)
    }

    /// Frames produced for a signal of `len` samples (0 when shorter than a window).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_size {
            0
        } else {
            (len - self.window_size) / self.hop + 1
        }
    }

    /// Samples spanned by `frames` frames.
    pub fn signal_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window_size
        }
    }

    pub fn bin_hz(&self, bin: usize, sample_rate: u32) -> f64 {
        bin as f64 * sample_rate as f64 / self.fft_size as f64
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann(self.window_size),
        }
    }
}

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Magnitude (and optionally phase) of an STFT, stored frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub magnitude: Vec<f64>,
    pub phase: Option<Vec<f64>>,
    pub config: StftConfig,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn magnitude_at(&self, frame: usize, bin: usize) -> f64 {
        self.magnitude[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.magnitude[frame * self.bins..(frame + 1) * self.bins]
    }

    /// Same framing with a new magnitude and no phase.
    pub fn with_magnitude(&self, magnitude: Vec<f64>) -> Result<Self> {
        check_dim("spectrogram", "magnitude", self.magnitude.len(), magnitude.len())?;
        Ok(Spectrogram {
            magnitude,
            phase: None,
            ..self.clone()
        })
    }

    /// Magnitude as a `(1, 1, frames, bins)` tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let data = self.magnitude.iter().map(|&v| T::of(v)).collect();
        Tensor::from_vec(Shape::new(1, 1, self.frames, self.bins), data).expect("length matches by construction")
    }

    pub fn energy(&self) -> f64 {
        self.magnitude.iter().map(|m| m * m).sum()
    }
}

/// Short-time Fourier transform with no centring padding: frame `t` covers
/// samples `t * hop .. t * hop + window_size`.
pub fn stft(clip: &AudioClip, config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    let frames = config.frame_count(clip.len());
    if frames == 0 {
        return Err(Error::invalid(
            "stft",
            format!(
                "clip of {} samples is shorter than the {}-sample window",
                clip.len(),
                config.window_size
            ),
        ));
    }
    let window = config.window();
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
    let mut buf = fft.make_input_vec();
    let mut spec = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut magnitude = Vec::with_capacity(frames * config.bins);
    let mut phase = Vec::with_capacity(frames * config.bins);
    for t in 0..frames {
        let start = t * config.hop;
        buf.fill(0.0);
        for (i, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
            *b = clip.samples[start + i] * w;
        }
        fft.process_with_scratch(&mut buf, &mut spec, &mut scratch)
            .expect("buffer lengths come from the plan");
        for c in &spec {
            magnitude.push(c.norm());
            phase.push(c.arg());
        }
    }
    Ok(Spectrogram {
        frames,
        bins: config.bins,
        magnitude,
        phase: Some(phase),
        config: *config,
        sample_rate: clip.sample_rate,
    })
}

/// Overlap-add synthesis normalised by the summed squared window, so that
/// `istft(stft(x))` reproduces `x` wherever some frame has non-zero weight.
pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let config = &spec.config;
    config.validate()?;
    let phase = spec
        .phase
        .as_ref()
        .ok_or_else(|| Error::invalid("istft", "spectrogram has no phase"))?;
    check_dim("istft", "bins", config.bins, spec.bins)?;
    check_dim("istft", "phase", spec.magnitude.len(), phase.len())?;
    let window = config.window();
    let len = config.signal_len(spec.frames);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(config.fft_size);
    let mut buf = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / config.fft_size as f64;
    for t in 0..spec.frames {
        let row = t * spec.bins..(t + 1) * spec.bins;
        for ((b, &m), &p) in buf.iter_mut().zip(&spec.magnitude[row.clone()]).zip(&phase[row]) {
            *b = Complex::from_polar(m, p);
        }
        // Real signals have real DC and Nyquist terms.
        buf[0].im = 0.0;
        if config.fft_size.is_multiple_of(2) {
            buf[spec.bins - 1].im = 0.0;
        }
        ifft.process_with_scratch(&mut buf, &mut frame, &mut scratch)
            .expect("buffer lengths come from the plan");
        let start = t * config.hop;
        for (i, &w) in window.iter().enumerate() {
            out[start + i] += frame[i] * scale * w;
            norm[start + i] += w * w;
        }
    }
    // Edge samples see only the tails of one window. Dividing by that tiny sum
    // blows up any magnitude that did not come from this signal, so floor it.
    let floor = 0.1 * norm.iter().cloned().fold(0.0, f64::max);
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > 1e-10 { *o / n.max(floor) } else { 0.0 };
    }
    Ok(AudioClip::new(out, spec.sample_rate))
}

/// Pairs an estimated magnitude (negative values clamped to zero) with the
/// mixture's phase and synthesises the waveform.
pub fn reconstruct(estimated: &Spectrogram, mixture: &Spectrogram) -> Result<AudioClip> {
    const OP: &str = "reconstruct";
    check_dim(OP, "frames", mixture.frames, estimated.frames)?;
    check_dim(OP, "bins", mixture.bins, estimated.bins)?;
    let phase = mixture
        .phase
        .clone()
        .ok_or_else(|| Error::invalid(OP, "mixture spectrogram has no phase"))?;
    let spec = Spectrogram {
        magnitude: estimated.magnitude.iter().map(|&m| m.max(0.0)).collect(),
        phase: Some(phase),
        ..mixture.clone()
    };
    istft(&spec)
}
