use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mbrsep::harness::{cmd_evaluate, cmd_inspect, cmd_separate, cmd_synth, cmd_train, DatasetManifest, TrainConfig};
use mbrsep::metrics::DEFAULT_FILTER_LEN;
use mbrsep::model::ModelKind;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "mbrsep",
    version,
    about = "Singing voice separation with multi-band convolutional networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic toy dataset plus its manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        songs: usize,
        /// Seconds per song.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model; the best validation checkpoint goes to `--out`.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// JSON training config; unset fields keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the vocal of one mixture, or of every test song with `--manifest`.
    Separate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        input: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Refuse checkpoints that do not hold this stock model.
        #[arg(long)]
        model: Option<ModelKind>,
        /// Output WAV, or a directory with `--manifest`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score `<estimates>/<song_id>.wav` for every test song.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        /// Label for the estimates in the reports.
        #[arg(long, default_value = "mbr-fcn")]
        model: String,
        #[arg(long, default_value_t = DEFAULT_FILTER_LEN)]
        filter_len: usize,
        /// Also score the mixture itself and test the model against it.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a model's layer table and parameter counts.
    Inspect {
        #[arg(long, default_value = "mbr-fcn")]
        model: ModelKind,
    },
}

fn run(cli: Cli) -> mbrsep::Result<bool> {
    match cli.command {
        Command::Synth {
            out,
            songs,
            duration,
            seed,
        } => {
            let m = cmd_synth(&out, songs, duration, seed)?;
            println!("wrote {} songs to {}", m.entries.len(), out.display());
        }
        Command::Train {
            manifest,
            config,
            model,
            seed,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => TrainConfig::load(&p)?,
                None => TrainConfig::default(),
            };
            if let Some(m) = model {
                cfg.model = m;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = cmd_train(&cfg, &DatasetManifest::load(&manifest)?, &out)?;
            println!(
                "best epoch {} of {}, validation loss {:.6e}; checkpoint {}",
                report.best_epoch,
                report.history.len(),
                report.best_valid_loss,
                out.display()
            );
        }
        Command::Separate {
            checkpoint,
            input,
            manifest,
            model,
            out,
        } => match (input, manifest) {
            (Some(input), _) => cmd_separate(&checkpoint, &input, &out, model)?,
            (None, Some(manifest)) => {
                let manifest = DatasetManifest::load(&manifest)?;
                std::fs::create_dir_all(&out)?;
                for entry in manifest.require(mbrsep::harness::Split::Test)? {
                    let dst = out.join(format!("{}.wav", entry.song_id()));
                    cmd_separate(&checkpoint, &manifest.resolve(&entry.mixture_path), &dst, model)?;
                    println!("{}", dst.display());
                }
            }
            (None, None) => unreachable!("clap requires one of them"),
        },
        Command::Evaluate {
            manifest,
            estimates,
            model,
            filter_len,
            baseline,
            out,
        } => {
            let manifest = DatasetManifest::load(&manifest)?;
            let report = cmd_evaluate(&manifest, &estimates, &model, filter_len, baseline, &out)?;
            for s in &report.summaries {
                if let Some(q) = s.sdr_db {
                    println!(
                        "{}: median SDR {:.2} dB (q1 {:.2}, q3 {:.2}, n {})",
                        s.model, q.median, q.q1, q.q3, q.n
                    );
                }
            }
            for c in &report.comparisons {
                match (c.p_bonferroni, &c.skipped) {
                    (Some(p), _) => println!("{} vs {} {}: p = {p:.4} (Bonferroni)", c.a, c.b, c.metric),
                    (None, Some(why)) => println!("{} vs {} {}: skipped, {why}", c.a, c.b, c.metric),
                    _ => {}
                }
            }
            for m in &report.missing {
                eprintln!("missing estimate: {}", m.display());
            }
            return Ok(report.missing.is_empty());
        }
        Command::Inspect { model } => print!("{}", cmd_inspect(model)?),
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
