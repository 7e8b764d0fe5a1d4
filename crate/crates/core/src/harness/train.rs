use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta};
use super::config::{DatasetManifest, Split, TrainConfig};
use crate::dsp::{load_audio, segment, stft, AudioClip, SegmentMode, StftConfig, SAMPLE_RATE};
use crate::error::{check_dim, Error, Result};
use crate::model::{build, init_weights, Network, Optimizer};
use crate::tensor::{mse_loss, Real, Shape, Tensor};

/// Mixture patches and the matching vocal patches, stacked on the batch axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSet<T> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
}

impl<T: Real> PatchSet<T> {
    pub fn len(&self) -> usize {
        self.inputs.shape().batch
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The patches at `index`, in that order.
    pub fn gather(&self, index: &[usize]) -> (Tensor<T>, Tensor<T>) {
        (pick(&self.inputs, index), pick(&self.targets, index))
    }
}

fn pick<T: Real>(t: &Tensor<T>, index: &[usize]) -> Tensor<T> {
    let s = t.shape();
    let block = s.channels * s.plane_len();
    let mut data = Vec::with_capacity(index.len() * block);
    for &i in index {
        data.extend_from_slice(&t.data()[i * block..(i + 1) * block]);
    }
    Tensor::from_vec(s.with_batch(index.len()), data).expect("sizes match")
}

pub(crate) fn load_clip(path: &Path) -> Result<AudioClip> {
    let clip = load_audio(path)?;
    if clip.sample_rate != SAMPLE_RATE {
        return Err(Error::invalid(
            "load",
            format!("{} is {} Hz, expected {SAMPLE_RATE}", path.display(), clip.sample_rate),
        ));
    }
    Ok(clip)
}

/// STFT patches of every song in `split`.
pub fn load_patches<T: Real>(manifest: &DatasetManifest, split: Split, config: &TrainConfig) -> Result<PatchSet<T>> {
    let stft_config = StftConfig::default();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut count = 0;
    for entry in manifest.require(split)? {
        let mix = load_clip(&manifest.resolve(&entry.mixture_path))?;
        let voc = load_clip(&manifest.resolve(&entry.vocal_stem_path))?;
        check_dim("load_patches", "samples", mix.len(), voc.len())?;
        let pm = segment::<T>(
            &stft(&mix, &stft_config)?,
            config.patch_frames,
            config.patch_hop,
            SegmentMode::Train,
        )?;
        let pv = segment::<T>(
            &stft(&voc, &stft_config)?,
            config.patch_frames,
            config.patch_hop,
            SegmentMode::Train,
        )?;
        count += pm.count();
        inputs.extend_from_slice(pm.tensor.data());
        targets.extend_from_slice(pv.tensor.data());
    }
    let shape = Shape::new(count, 1, config.patch_frames, stft_config.bins);
    Ok(PatchSet {
        inputs: Tensor::from_vec(shape, inputs)?,
        targets: Tensor::from_vec(shape, targets)?,
    })
}

/// Learning-rate reduction on a validation plateau.
#[derive(Clone, Debug, PartialEq)]
pub struct Plateau {
    pub patience: usize,
    pub factor: f64,
    pub best: Option<f64>,
    /// Epochs since the last improvement or reduction.
    pub stale: usize,
}

/// What one observed validation loss implies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlateauStep {
    pub improved: bool,
    pub reduce: bool,
}

/// Relative margin a loss must beat the best by to count as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

impl Plateau {
    pub fn new(patience: usize, factor: f64) -> Self {
        Plateau {
            patience,
            factor,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> PlateauStep {
        let improved = match self.best {
            None => true,
            Some(best) => loss < best - MIN_IMPROVEMENT * best.abs(),
        };
        if improved {
            self.best = Some(loss);
            self.stale = 0;
            return PlateauStep {
                improved,
                reduce: false,
            };
        }
        self.stale += 1;
        let reduce = self.stale >= self.patience;
        if reduce {
            self.stale = 0;
        }
        PlateauStep { improved, reduce }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub learning_rate: f64,
    pub improved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub steps: usize,
}

/// Mean squared error of inference-mode predictions over `set`.
pub fn evaluate_loss<T: Real>(net: &mut Network<T>, set: &PatchSet<T>, batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    let index: Vec<usize> = (0..set.len()).collect();
    for chunk in index.chunks(batch_size.max(1)) {
        let (x, y) = set.gather(chunk);
        let (loss, _) = mse_loss(&net.predict(&x)?, &y)?;
        total += loss.as_f64() * chunk.len() as f64;
    }
    Ok(total / set.len().max(1) as f64)
}

/// Trains from freshly initialised weights, writing the best-validation
/// checkpoint to `out` when given.
pub fn train<T: Real>(
    config: &TrainConfig,
    train_set: &PatchSet<T>,
    valid_set: &PatchSet<T>,
    out: Option<&Path>,
) -> Result<(TrainReport, Checkpoint<T>)> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Empty { op: "train" });
    }
    let spec = build(config.model);
    let mut net = Network::new(spec.clone(), init_weights::<T>(&spec, config.seed))?;
    let mut opt = Optimizer::new(net.weights(), config.adam());
    let mut plateau = Plateau::new(config.plateau_patience_epochs, config.plateau_factor);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, Checkpoint<T>)> = None;
    let mut steps = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            steps += 1;
            let (x, y) = train_set.gather(batch);
            let (loss, grads) = match net.mse_step(&x, &y) {
                Err(Error::NonFinite { .. }) => return Err(Error::Diverged { step: steps }),
                Err(Error::Node { source, .. }) if matches!(*source, Error::NonFinite { .. }) => {
                    return Err(Error::Diverged { step: steps })
                }
                other => other?,
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { step: steps });
            }
            opt.step(net.weights_mut(), &grads)
                .map_err(|_| Error::Diverged { step: steps })?;
            sum += loss * batch.len() as f64;
        }
        let train_loss = sum / train_set.len() as f64;
        let valid_loss = evaluate_loss(&mut net, valid_set, config.batch_size)?;
        if !valid_loss.is_finite() {
            return Err(Error::Diverged { step: steps });
        }
        let lr = opt.learning_rate();
        let step = plateau.observe(valid_loss);
        log::info!("epoch {epoch}: train {train_loss:.6e} valid {valid_loss:.6e} lr {lr:.1e}");
        history.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
            learning_rate: lr,
            improved: step.improved,
        });
        if step.improved {
            let ckpt = Checkpoint {
                meta: CheckpointMeta {
                    spec: spec.clone(),
                    config: Some(config.clone()),
                    epoch,
                    best_valid_loss: Some(valid_loss),
                    learning_rate: lr,
                    adam_step: opt.states.iter().flatten().next().map_or(0, |s| s.step),
                    seed: config.seed,
                },
                weights: net.weights().clone(),
                optimizer: Some(opt.clone()),
            };
            if let Some(path) = out {
                ckpt.save(path)?;
            }
            best = Some((epoch, ckpt));
        }
        if step.reduce {
            opt.set_learning_rate(lr * config.plateau_factor);
            log::info!("validation plateau: learning rate now {:.1e}", opt.learning_rate());
        }
    }
    let (best_epoch, ckpt) = best.expect("the first epoch always improves");
    let report = TrainReport {
        best_valid_loss: ckpt.meta.best_valid_loss.unwrap_or(f64::NAN),
        best_epoch,
        history,
        steps,
    };
    Ok((report, ckpt))
}

/// Loads the train and valid splits and runs [`train`] in `f32`.
pub fn cmd_train(config: &TrainConfig, manifest: &DatasetManifest, out: &Path) -> Result<TrainReport> {
    config.validate()?;
    let train_set = load_patches::<f32>(manifest, Split::Train, config)?;
    let valid_set = load_patches::<f32>(manifest, Split::Valid, config)?;
    log::info!(
        "{} training and {} validation patches",
        train_set.len(),
        valid_set.len()
    );
    let (report, _) = train(config, &train_set, &valid_set, Some(out))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_hand_trace() {
        let mut p = Plateau::new(3, 0.1);
        let steps: Vec<_> = [1.0, 0.9, 0.9, 0.9, 0.9].iter().map(|&l| p.observe(l)).collect();
        let reduce: Vec<bool> = steps.iter().map(|s| s.reduce).collect();
        assert_eq!(reduce, [false, false, false, false, true]);
        assert!(steps[1].improved && !steps[2].improved);
    }

    #[test]
    fn tiny_gains_are_not_improvements() {
        let mut p = Plateau::new(1, 0.5);
        p.observe(1.0);
        assert!(!p.observe(1.0 - 1e-9).improved);
        assert!(p.observe(0.99).improved);
    }
}
