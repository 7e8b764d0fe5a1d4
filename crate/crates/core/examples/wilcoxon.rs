//! Exact and large-sample signed-rank tests on paired scores.

use mbrsep::metrics::{bonferroni, wilcoxon_signed_rank};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    let model = [4.1, 3.2, 5.0, 2.2, 3.9, 4.4];
    let baseline = [1.0, 1.5, 0.2, 2.5, 0.8, 1.1];
    let r = wilcoxon_signed_rank(&model, &baseline)?;
    println!("n = 6: W = {}, p = {:.5} ({:?})", r.statistic, r.p_value, r.method);
    let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
    let b = vec![0.0; 40];
    let r = wilcoxon_signed_rank(&a, &b)?;
    println!("n = 40: W = {}, p = {:.5} ({:?})", r.statistic, r.p_value, r.method);
    println!("Bonferroni over 3 tests: {:?}", bonferroni(&[0.01, 0.03, 0.2], 3));
    Ok(())
}
