//! The command-line workflows: toy-data synthesis, training, separation,
//! evaluation and model inspection, plus their file formats.

mod checkpoint;
mod config;
mod evaluate;
mod separate;
mod synth;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, MAGIC, VERSION};
pub use config::{DatasetManifest, ManifestEntry, Split, TrainConfig};
pub use evaluate::{
    cmd_evaluate, compare, evaluate, quartiles, summarise, write_csv, Comparison, EvalReport, MetricRow, ModelSummary,
    Quartiles, MIXTURE_LABEL,
};
pub use separate::{cmd_separate, load_network, separate_clip};
pub use synth::{cmd_synth, split_sizes, toy_song, ToySong, VOICE_CEILING_HZ};
pub use train::{
    cmd_train, evaluate_loss, load_patches, train, EpochLog, PatchSet, Plateau, PlateauStep, TrainReport,
    MIN_IMPROVEMENT,
};

use crate::error::Result;
use crate::model::{build, describe, ModelKind};

/// Layer and band tables of a stock model.
pub fn cmd_inspect(model: ModelKind) -> Result<String> {
    describe(&build(model))
}
