use std::path::Path;

use super::checkpoint::Checkpoint;
use super::train::load_clip;
use crate::dsp::{
    reconstruct, save_audio, segment, stft, stitch, AudioClip, SegmentMode, StftConfig, DEFAULT_PATCH_FRAMES,
};
use crate::error::{Error, Result};
use crate::model::{build, ModelKind, Network};
use crate::tensor::{Real, Tensor};

/// Patches pushed through the network at once.
const CHUNK: usize = 16;

/// Estimates the vocal of `mixture`: magnitude patches through the network
/// in inference mode, stitched, paired with the mixture phase and
/// synthesised. The result has exactly the mixture's length.
pub fn separate_clip<T: Real>(net: &mut Network<T>, mixture: &AudioClip, patch_frames: usize) -> Result<AudioClip> {
    let config = StftConfig::default();
    let spec = stft(mixture, &config)?;
    let patches = segment::<T>(&spec, patch_frames, patch_frames, SegmentMode::Infer)?;
    let n = patches.count();
    let s = patches.tensor.shape();
    let block = s.plane_len();
    let mut out = Vec::with_capacity(patches.tensor.len());
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let x = Tensor::from_vec(
            s.with_batch(end - start),
            patches.tensor.data()[start * block..end * block].to_vec(),
        )?;
        out.extend_from_slice(net.predict(&x)?.data());
    }
    let magnitude = stitch(&Tensor::from_vec(s, out)?, &patches)?;
    let mut clip = reconstruct(&spec.with_magnitude(magnitude)?, &spec)?;
    clip.samples.resize(mixture.len(), 0.0);
    Ok(clip)
}

/// Frames per patch a checkpoint was trained with.
pub(crate) fn patch_frames<T>(ckpt: &Checkpoint<T>) -> usize {
    ckpt.meta
        .config
        .as_ref()
        .map(|c| c.patch_frames)
        .unwrap_or(if ckpt.meta.spec.frame_wise {
            DEFAULT_PATCH_FRAMES
        } else {
            ckpt.meta.spec.input.0
        })
}

/// Loads a checkpoint, optionally insisting it holds the stock `expected` model.
pub fn load_network(checkpoint: &Path, expected: Option<ModelKind>) -> Result<(Network<f32>, usize)> {
    let ckpt = Checkpoint::<f32>::load(checkpoint)?;
    if let Some(kind) = expected {
        if ckpt.meta.spec.hash() != build(kind).hash() {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, not the stock {kind}",
                checkpoint.display(),
                ckpt.meta.spec.kind
            )));
        }
    }
    let frames = patch_frames(&ckpt);
    Ok((Network::new(ckpt.meta.spec, ckpt.weights)?, frames))
}

pub fn cmd_separate(checkpoint: &Path, mixture_wav: &Path, out_wav: &Path, expected: Option<ModelKind>) -> Result<()> {
    let (mut net, frames) = load_network(checkpoint, expected)?;
    let mix = load_clip(mixture_wav)?;
    let vocal = separate_clip(&mut net, &mix, frames)?;
    save_audio(out_wav, &vocal)
}
