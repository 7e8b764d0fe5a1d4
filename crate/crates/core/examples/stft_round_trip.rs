//! Analysis and resynthesis of a chirp, plus magnitude-only reconstruction
//! with the original phase.

use mbrsep::dsp::{istft, reconstruct, stft, AudioClip, StftConfig, SAMPLE_RATE};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    let fs = SAMPLE_RATE as f64;
    let x: Vec<f64> = (0..SAMPLE_RATE as usize)
        .map(|i| {
            let t = i as f64 / fs;
            0.5 * (std::f64::consts::TAU * (200.0 * t + 2000.0 * t * t)).sin()
        })
        .collect();
    let clip = AudioClip::new(x.clone(), SAMPLE_RATE);
    let cfg = StftConfig::default();
    let spec = stft(&clip, &cfg)?;
    println!("{} frames x {} bins", spec.frames, spec.bins);
    let y = istft(&spec)?;
    let m = cfg.window_size;
    let err = (m..y.len() - m)
        .map(|i| (y.samples[i] - x[i]).abs())
        .fold(0.0, f64::max);
    println!("round trip: max interior error {err:.2e}");
    let z = reconstruct(&spec, &spec)?;
    let err = (m..z.len() - m)
        .map(|i| (z.samples[i] - x[i]).abs())
        .fold(0.0, f64::max);
    println!("magnitude + own phase: max interior error {err:.2e}");
    Ok(())
}
