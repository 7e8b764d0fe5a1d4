use super::Spectrogram;
use crate::error::{check_dim, Error, Result};
use crate::tensor::{Real, Shape, Tensor};

pub const DEFAULT_PATCH_FRAMES: usize = 29;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentMode {
    /// Drop trailing frames that do not fill a patch.
    Train,
    /// Zero-pad the tail so every frame lands in some patch.
    Infer,
}

/// Magnitude patches stacked along the batch axis as `(N, 1, frames_per_patch, bins)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Patches<T> {
    pub tensor: Tensor<T>,
    /// Zero frames appended after the last real frame.
    pub padding: usize,
    /// Frames in the source spectrogram.
    pub frames: usize,
    pub hop: usize,
}

impl<T: Real> Patches<T> {
    pub fn count(&self) -> usize {
        self.tensor.shape().batch
    }
}

pub fn segment<T: Real>(
    spec: &Spectrogram,
    frames_per_patch: usize,
    hop: usize,
    mode: SegmentMode,
) -> Result<Patches<T>> {
    const OP: &str = "segment";
    if frames_per_patch == 0 || hop == 0 || hop > frames_per_patch {
        return Err(Error::invalid(
            OP,
            format!("bad patching {frames_per_patch} frames, hop {hop}"),
        ));
    }
    let (frames, bins) = (spec.frames, spec.bins);
    let (count, padding) = match mode {
        SegmentMode::Train => {
            if frames < frames_per_patch {
                return Err(Error::invalid(
                    OP,
                    format!("{frames} frames cannot fill a {frames_per_patch}-frame patch"),
                ));
            }
            ((frames - frames_per_patch) / hop + 1, 0)
        }
        SegmentMode::Infer => {
            if frames == 0 {
                return Err(Error::Empty { op: OP });
            }
            let n = frames.saturating_sub(frames_per_patch).div_ceil(hop) + 1;
            (n, (n - 1) * hop + frames_per_patch - frames)
        }
    };
    let shape = Shape::new(count, 1, frames_per_patch, bins);
    let mut data = vec![T::zero(); shape.len()];
    for (p, dst) in data.chunks_exact_mut(frames_per_patch * bins).enumerate() {
        let first = p * hop;
        let last = (first + frames_per_patch).min(frames);
        let src = &spec.magnitude[first * bins..last * bins];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = T::of(s);
        }
    }
    Ok(Patches {
        tensor: Tensor::from_vec(shape, data)?,
        padding,
        frames,
        hop,
    })
}

/// Reassembles patch outputs into a `frames x bins` magnitude, averaging
/// overlapped frames and discarding the padding.
pub fn stitch<T: Real>(patches: &Tensor<T>, layout: &Patches<T>) -> Result<Vec<f64>> {
    const OP: &str = "stitch";
    let s = patches.shape();
    let want = layout.tensor.shape();
    check_dim(OP, "batch", want.batch, s.batch)?;
    check_dim(OP, "channel", 1, s.channels)?;
    check_dim(OP, "time", want.time, s.time)?;
    let (bins, len) = (s.freq, s.time);
    let mut sum = vec![0.0f64; layout.frames * bins];
    let mut hits = vec![0u32; layout.frames];
    for p in 0..s.batch {
        let plane = patches.plane(p, 0);
        for t in 0..len {
            let frame = p * layout.hop + t;
            if frame >= layout.frames {
                break;
            }
            hits[frame] += 1;
            for (d, v) in sum[frame * bins..(frame + 1) * bins]
                .iter_mut()
                .zip(&plane[t * bins..(t + 1) * bins])
            {
                *d += v.as_f64();
            }
        }
    }
    for (row, &h) in sum.chunks_exact_mut(bins).zip(&hits) {
        if h > 1 {
            row.iter_mut().for_each(|v| *v /= h as f64);
        }
    }
    Ok(sum)
}
