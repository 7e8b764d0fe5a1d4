//! Synthesise a small toy dataset, train MBR-FCN briefly, separate the test
//! songs and score them against the mixture. Pass a directory to keep the files.

use std::path::PathBuf;

use mbrsep::harness::{cmd_evaluate, cmd_separate, cmd_synth, cmd_train, Split, TrainConfig};
use mbrsep::metrics::DEFAULT_FILTER_LEN;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() -> mbrsep::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mbrsep-toy"));
    let manifest = cmd_synth(&root.join("data"), 6, 4.0, 0)?;
    let config = TrainConfig {
        batch_size: 8,
        max_epochs: 5,
        ..TrainConfig::default()
    };
    let ckpt = root.join("mbr-fcn.ckpt");
    let report = cmd_train(&config, &manifest, &ckpt)?;
    println!(
        "best validation loss {:.4e} at epoch {}",
        report.best_valid_loss, report.best_epoch
    );
    let est = root.join("estimates");
    std::fs::create_dir_all(&est)?;
    for e in manifest.require(Split::Test)? {
        cmd_separate(
            &ckpt,
            &manifest.resolve(&e.mixture_path),
            &est.join(format!("{}.wav", e.song_id())),
            None,
        )?;
    }
    let eval = cmd_evaluate(&manifest, &est, "mbr-fcn", DEFAULT_FILTER_LEN, true, &root.join("eval"))?;
    for row in &eval.rows {
        println!(
            "{} {:8} SDR {:6.2} SIR {:6.2} SAR {:6.2}",
            row.song_id, row.model, row.sdr_db, row.sir_db, row.sar_db
        );
    }
    Ok(())
}
