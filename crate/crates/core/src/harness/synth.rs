use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DatasetManifest, ManifestEntry, Split};
use crate::dsp::{save_audio, AudioClip, SAMPLE_RATE};
use crate::error::Result;

/// Highest partial frequency of the synthetic voice, including vibrato excursion.
pub const VOICE_CEILING_HZ: f64 = 5_000.0;

/// Vocal and accompaniment stems of one toy song.
#[derive(Clone, Debug)]
pub struct ToySong {
    pub vocal: Vec<f64>,
    pub music: Vec<f64>,
}

impl ToySong {
    pub fn mixture(&self) -> Vec<f64> {
        self.vocal.iter().zip(&self.music).map(|(v, m)| v + m).collect()
    }
}

/// Sung notes: a harmonic stack on a 150-400 Hz fundamental with vibrato,
/// partials kept below [`VOICE_CEILING_HZ`], shaped by per-note envelopes
/// with short rests.
fn voice(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let mut out = vec![0.0; len];
    let mut start = 0;
    while start < len {
        let note = (rng.gen_range(0.25..0.8) * fs) as usize;
        let rest = (rng.gen_range(0.0..0.25) * fs) as usize;
        let f0 = rng.gen_range(150.0..400.0);
        let rate = rng.gen_range(4.5..6.5);
        let depth = rng.gen_range(0.005..0.02);
        let partials = ((VOICE_CEILING_HZ / (f0 * (1.0 + depth))) as usize).max(1);
        // Formant-like tilt: louder around a random resonance.
        let formant = rng.gen_range(500.0..2500.0);
        let amps: Vec<f64> = (1..=partials)
            .map(|k| {
                let f = k as f64 * f0;
                (1.0 / k as f64) * (1.0 + 2.0 * (-((f - formant) / 400.0).powi(2)).exp())
            })
            .collect();
        let end = (start + note).min(len);
        let mut phase = vec![rng.gen_range(0.0..TAU); partials];
        let attack = 0.04 * fs;
        let release = 0.06 * fs;
        for n in start..end {
            let t = (n - start) as f64;
            let inst = f0 * (1.0 + depth * (TAU * rate * t / fs).sin());
            let env = (t / attack).min(1.0) * (((end - n) as f64) / release).min(1.0);
            let mut s = 0.0;
            for (k, (p, a)) in phase.iter_mut().zip(&amps).enumerate() {
                *p += TAU * inst * (k + 1) as f64 / fs;
                s += a * p.sin();
            }
            out[n] = env * s;
        }
        start = end + rest;
    }
    normalise(&mut out, 0.25);
    out
}

/// Accompaniment: overlapping exponential chirps over 200 Hz-16 kHz, noise
/// bursts, and a steady hiss tilted toward high frequencies.
fn music(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let mut out = vec![0.0; len];
    let chirps = (len as f64 / fs * 3.0).ceil() as usize;
    for _ in 0..chirps {
        let dur = (rng.gen_range(0.3..1.5) * fs) as usize;
        let at = rng.gen_range(0..len);
        let (f1, f2) = (rng.gen_range(200.0f64..16_000.0), rng.gen_range(200.0f64..16_000.0));
        let amp = rng.gen_range(0.3..1.0) * (f1.min(f2) / 2000.0).clamp(0.3, 1.0);
        let mut phase = 0.0;
        for i in 0..dur.min(len - at) {
            let x = i as f64 / dur as f64;
            let f = f1 * (f2 / f1).powf(x);
            phase += TAU * f / fs;
            let env = (std::f64::consts::PI * x).sin();
            out[at + i] += amp * env * phase.sin();
        }
    }
    // Hiss: first difference of white noise, brighter toward Nyquist.
    let mut prev = 0.0;
    let mut burst = 0.0f64;
    for o in out.iter_mut() {
        let w: f64 = rng.gen_range(-1.0..1.0);
        if rng.gen_bool(2.0 / fs) {
            burst = 1.0;
        }
        burst *= 0.9995;
        *o += (0.15 + 0.8 * burst) * (w - prev);
        prev = w;
    }
    normalise(&mut out, 0.3);
    out
}

fn normalise(x: &mut [f64], rms: f64) {
    let now = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if now > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / now);
    }
}

/// Song `index` of the dataset seeded with `seed`. Stems are rounded to
/// `f32` so that files written from them sum exactly as generated.
pub fn toy_song(seed: u64, index: usize, duration_s: f64) -> ToySong {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let len = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let mut vocal = voice(len, &mut rng);
    let mut music = music(len, &mut rng);
    let peak = vocal.iter().zip(&music).map(|(v, m)| (v + m).abs()).fold(0.0, f64::max);
    if peak > 0.95 {
        let k = 0.95 / peak;
        vocal.iter_mut().for_each(|v| *v *= k);
        music.iter_mut().for_each(|v| *v *= k);
    }
    let round = |v: &mut Vec<f64>| v.iter_mut().for_each(|s| *s = *s as f32 as f64);
    round(&mut vocal);
    round(&mut music);
    ToySong { vocal, music }
}

/// Split sizes for `n` songs: one sixth each (at least one) for validation
/// and test, the rest for training.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let held = ((n as f64 / 6.0).round() as usize).max(1);
    let held = held.min(n.saturating_sub(1) / 2);
    (n - 2 * held, held, held)
}

/// Writes `n_songs` toy songs (mixture and vocal WAVs) plus `manifest.json`
/// into `out_dir`.
pub fn cmd_synth(out_dir: &Path, n_songs: usize, duration_s: f64, seed: u64) -> Result<DatasetManifest> {
    fs::create_dir_all(out_dir)?;
    let (train, valid, _) = split_sizes(n_songs);
    let mut entries = Vec::with_capacity(n_songs);
    for i in 0..n_songs {
        let song = toy_song(seed, i, duration_s);
        let id = format!("song{i:02}");
        let mix = format!("{id}_mixture.wav");
        let voc = format!("{id}_vocal.wav");
        save_audio(out_dir.join(&mix), &AudioClip::new(song.mixture(), SAMPLE_RATE))?;
        save_audio(out_dir.join(&voc), &AudioClip::new(song.vocal, SAMPLE_RATE))?;
        let split = if i < train {
            Split::Train
        } else if i < train + valid {
            Split::Valid
        } else {
            Split::Test
        };
        log::info!("synth {id} ({split:?})");
        entries.push(ManifestEntry {
            id: Some(id),
            mixture_path: mix.into(),
            vocal_stem_path: voc.into(),
            split,
        });
    }
    let manifest = DatasetManifest {
        sample_rate: SAMPLE_RATE,
        entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}
