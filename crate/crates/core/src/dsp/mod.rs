//! Audio I/O, STFT analysis and synthesis, mel-spaced band layouts, and
//! spectrogram patching.

mod bands;
mod patches;
mod stft;
mod wav;

pub use bands::{default_bands, inv_mel, mel, mel_band_edges, slice_bands, BandSpec};
pub use patches::{segment, stitch, Patches, SegmentMode, DEFAULT_PATCH_FRAMES};
pub use stft::{hann, istft, reconstruct, stft, Spectrogram, StftConfig, WindowKind};
pub use wav::{load_audio, save_audio};

/// Sample rate every stage assumes.
pub const SAMPLE_RATE: u32 = 44_100;

/// Mono signal with its sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
