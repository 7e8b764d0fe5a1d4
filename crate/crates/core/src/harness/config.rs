use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::{DEFAULT_PATCH_FRAMES, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::tensor::AdamConfig;

/// Training hyper-parameters, read from JSON with these exact field names.
/// Missing fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau_patience_epochs: usize,
    pub plateau_factor: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub patch_frames: usize,
    pub patch_hop: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::MbrFcn,
            batch_size: 100,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_patience_epochs: 3,
            plateau_factor: 0.1,
            max_epochs: 30,
            seed: 0,
            patch_frames: DEFAULT_PATCH_FRAMES,
            patch_hop: DEFAULT_PATCH_FRAMES,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: TrainConfig = serde_json::from_slice(&fs::read(path)?)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "train_config";
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::invalid(OP, "plateau_factor must be in (0, 1)"));
        }
        if self.plateau_patience_epochs == 0 {
            return Err(Error::invalid(OP, "plateau_patience_epochs must be >= 1"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid(OP, "batch_size and max_epochs must be >= 1"));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid(OP, "learning_rate must be positive and betas in [0, 1)"));
        }
        if self.patch_hop == 0 || self.patch_hop > self.patch_frames {
            return Err(Error::invalid(OP, "patch_hop must be in 1..=patch_frames"));
        }
        if self.model != ModelKind::Dnn && self.patch_frames != DEFAULT_PATCH_FRAMES {
            return Err(Error::invalid(
                OP,
                format!("convolutional models take {DEFAULT_PATCH_FRAMES}-frame patches"),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Song label used in metric tables and estimate file names; defaults
    /// to the mixture file's stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub mixture_path: PathBuf,
    pub vocal_stem_path: PathBuf,
    pub split: Split,
}

impl ManifestEntry {
    pub fn song_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.mixture_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

/// Songs and their splits. Relative paths resolve against the manifest's
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub sample_rate: u32,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = serde_json::from_slice(&fs::read(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if m.sample_rate != SAMPLE_RATE {
            return Err(Error::invalid(
                "manifest",
                format!("sample_rate {} is not {SAMPLE_RATE}", m.sample_rate),
            ));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }

    /// The entries of `split`, or an error naming the empty split.
    pub fn require(&self, split: Split) -> Result<Vec<&ManifestEntry>> {
        let v = self.split(split);
        if v.is_empty() {
            return Err(Error::invalid("manifest", format!("no {split:?} songs").to_lowercase()));
        }
        Ok(v)
    }
}
