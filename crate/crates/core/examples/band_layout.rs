//! The overlapped frequency bands of MBR-FCN next to an even mel split.

use mbrsep::dsp::{default_bands, mel, mel_band_edges, StftConfig, SAMPLE_RATE};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    let cfg = StftConfig::default();
    println!("stock bands");
    for b in default_bands() {
        let (lo, hi) = b.hz_range(&cfg, SAMPLE_RATE);
        println!(
            "  {}: bins {:4}..{:4}  {:7.1}..{:7.1} Hz  mel {:6.1}..{:6.1}  stride {} -> {} wide",
            b.name,
            b.bin_from,
            b.bin_to,
            lo,
            hi,
            mel(lo)?,
            mel(hi)?,
            b.stride_freq,
            b.output_width()
        );
    }
    println!("five bands equally spaced in mel, 0 Hz to Nyquist");
    for b in mel_band_edges(5, 0.0, SAMPLE_RATE as f64 / 2.0, cfg.bins)? {
        println!("  {}: bins {:4}..{:4}", b.name, b.bin_from, b.bin_to);
    }
    Ok(())
}
