//! SDR, SIR and SAR of a few distorted estimates of a noise source.

use mbrsep::metrics::{bss_eval, DEFAULT_FILTER_LEN};
use rand::{Rng, SeedableRng};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut noise = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let (s1, s2, art) = (noise(20_000), noise(20_000), noise(20_000));
    let cases: [(&str, Vec<f64>); 4] = [
        ("exact", s1.clone()),
        (
            "+ 0.5 interferer",
            s1.iter().zip(&s2).map(|(a, b)| a + 0.5 * b).collect(),
        ),
        (
            "+ 0.1 artifact",
            s1.iter().zip(&art).map(|(a, b)| a + 0.1 * b).collect(),
        ),
        (
            "delayed 3 samples",
            (0..s1.len()).map(|i| if i >= 3 { s1[i - 3] } else { 0.0 }).collect(),
        ),
    ];
    for (name, est) in cases {
        let r = bss_eval(&est, &[&s1, &s2], 0, DEFAULT_FILTER_LEN)?;
        let ([sdr, sir, sar], _) = r.capped();
        println!("{name:18} SDR {sdr:7.2}  SIR {sir:7.2}  SAR {sar:7.2}");
    }
    Ok(())
}
