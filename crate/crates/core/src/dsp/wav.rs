use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};

/// Reads a PCM16 or float32 WAV with one or two channels, averaging stereo
/// to mono. PCM values are scaled by 1/32768.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::UnsupportedEncoding(format!("{channels} channels")));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, bits) => {
            return Err(Error::UnsupportedEncoding(format!("PCM{bits}")));
        }
        (SampleFormat::Float, bits) => {
            return Err(Error::UnsupportedEncoding(format!("float{bits}")));
        }
    };
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes `clip` as mono IEEE float32.
pub fn save_audio(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        writer.write_sample(s as f32)?;
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pcm16(path: &Path, channels: u16, frames: &[i16]) {
        let spec = WavSpec {
            channels,
            sample_rate: 44_100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in frames {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_square_wave_scales_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sq.wav");
        write_pcm16(&p, 1, &[32767, -32767, 32767, -32767]);
        let clip = load_audio(&p).unwrap();
        let hi = 32767.0 / 32768.0;
        assert_eq!(clip.samples, vec![hi, -hi, hi, -hi]);
    }

    #[test]
    fn opposite_stereo_channels_cancel() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        write_pcm16(&p, 2, &[1000, -1000, -5, 5, 7, -7]);
        let clip = load_audio(&p).unwrap();
        assert_eq!(clip.samples, vec![0.0; 3]);
    }

    #[test]
    fn constant_stereo_float_averages() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44_100,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(0.5f32).unwrap();
            w.write_sample(0.25f32).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_audio(&p).unwrap().samples, vec![0.375; 4]);
    }

    #[test]
    fn pcm24_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        let err = load_audio(&p).unwrap_err();
        assert!(err.to_string().contains("PCM24"), "{err}");
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let clip = AudioClip::new(vec![0.5, -0.25, 0.125], 44_100);
        save_audio(&p, &clip).unwrap();
        assert_eq!(load_audio(&p).unwrap(), clip);
    }

    #[test]
    fn garbage_header_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"RIFF0000WAVEjunk").unwrap();
        assert!(load_audio(&p).is_err());
    }
}
