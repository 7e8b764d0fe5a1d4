//! Binary checkpoints: `MBRW`, format version, model-spec digest, tensor
//! count, then `(name, rank, dims, dtype, little-endian values)` per tensor
//! and a trailing CRC32 of everything before it.
//!
//! Dtype tags: 0 = f32, 1 = f64, 2 = raw bytes (used for the JSON metadata
//! record).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Optimizer, Param, WeightSet};
use crate::tensor::{AdamState, DType, Real, Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"MBRW";
pub const VERSION: u32 = 1;
const BYTES_TAG: u8 = 2;
const META: &str = "meta.json";

/// Training progress stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub config: Option<TrainConfig>,
    pub epoch: usize,
    pub best_valid_loss: Option<f64>,
    pub learning_rate: f64,
    pub adam_step: u64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub meta: CheckpointMeta,
    /// Includes batch-norm moving statistics.
    pub weights: WeightSet<T>,
    pub optimizer: Option<Optimizer<T>>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_name(buf: &mut Vec<u8>, name: &str) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
}

fn put_values<T: Real>(buf: &mut Vec<u8>, values: &[T]) {
    buf.push(T::DTYPE.tag());
    for v in values {
        match T::DTYPE {
            DType::F32 => buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
            DType::F64 => buf.extend_from_slice(&v.as_f64().to_le_bytes()),
        }
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut records: Vec<(String, Vec<u32>, &[T])> = self
            .weights
            .params
            .iter()
            .map(|p| {
                (
                    p.name.clone(),
                    p.tensor.shape().dims().map(|d| d as u32).to_vec(),
                    p.tensor.data(),
                )
            })
            .collect();
        if let Some(opt) = &self.optimizer {
            for (state, p) in opt.states.iter().zip(&self.weights.params) {
                if let Some(state) = state {
                    let n = vec![state.m.len() as u32];
                    records.push((format!("adam.m.{}", p.name), n.clone(), &state.m));
                    records.push((format!("adam.v.{}", p.name), n, &state.v));
                }
            }
        }
        let meta = serde_json::to_vec(&self.meta)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        put_u32(&mut buf, VERSION);
        buf.extend_from_slice(&self.meta.spec.hash());
        put_u32(&mut buf, records.len() as u32 + 1);
        put_name(&mut buf, META);
        put_u32(&mut buf, 1);
        put_u32(&mut buf, meta.len() as u32);
        buf.push(BYTES_TAG);
        buf.extend_from_slice(&meta);
        for (name, dims, values) in records {
            put_name(&mut buf, &name);
            put_u32(&mut buf, dims.len() as u32);
            dims.iter().for_each(|&d| put_u32(&mut buf, d));
            put_values(&mut buf, values);
        }
        let crc = crc32fast::hash(&buf);
        put_u32(&mut buf, crc);
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        // Write then rename so a crash never leaves a truncated checkpoint.
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.to_bytes()?)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        if bytes.len() < 4 + 4 + 32 + 4 + 4 {
            return Err(bad("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(bad("CRC mismatch".into()));
        }
        let mut r = Reader { buf: body, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let count = r.u32()? as usize;
        let mut meta: Option<CheckpointMeta> = None;
        let mut tensors: Vec<(String, Vec<usize>, Vec<T>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| bad("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = dims.iter().product();
            let tag = r.take(1)?[0];
            if tag == BYTES_TAG {
                let raw = r.take(n)?;
                if name == META {
                    meta = Some(serde_json::from_slice(raw)?);
                }
                continue;
            }
            let dtype = DType::from_tag(tag).ok_or_else(|| bad(format!("unknown dtype tag {tag} for `{name}`")))?;
            let values: Vec<T> = match dtype {
                DType::F32 => r
                    .take(4 * n)?
                    .chunks_exact(4)
                    .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
                    .collect(),
                DType::F64 => r
                    .take(8 * n)?
                    .chunks_exact(8)
                    .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
                    .collect(),
            };
            tensors.push((name, dims, values));
        }
        if r.at != body.len() {
            return Err(bad("trailing bytes after the last tensor".into()));
        }
        let meta = meta.ok_or_else(|| bad("missing metadata record".into()))?;
        if meta.spec.hash() != hash {
            return Err(bad("model spec digest does not match the stored spec".into()));
        }
        let layout = crate::model::WeightSet::<T>::layout_of(&meta.spec);
        let mut it = tensors.into_iter();
        let mut params = Vec::with_capacity(layout.len());
        for (name, role, shape) in layout {
            let (got, dims, values) = it.next().ok_or_else(|| bad(format!("missing tensor `{name}`")))?;
            if got != name || dims != shape.dims() {
                return Err(bad(format!(
                    "expected `{name}` {:?}, found `{got}` {dims:?}",
                    shape.dims()
                )));
            }
            params.push(Param {
                name,
                role,
                tensor: Tensor::from_vec(Shape::new(dims[0], dims[1], dims[2], dims[3]), values)?,
            });
        }
        let weights = WeightSet {
            seed: meta.seed,
            params,
        };
        let rest: Vec<_> = it.collect();
        let optimizer = if rest.is_empty() {
            None
        } else {
            let config = meta.config.as_ref().map(TrainConfig::adam).unwrap_or_default();
            let mut opt = Optimizer::new(&weights, config);
            opt.set_learning_rate(meta.learning_rate);
            let mut rest = rest.into_iter();
            for (state, p) in opt.states.iter_mut().zip(&weights.params) {
                let Some(state) = state else { continue };
                let mut next = |kind: &str| -> Result<Vec<T>> {
                    let want = format!("adam.{kind}.{}", p.name);
                    match rest.next() {
                        Some((name, _, v)) if name == want && v.len() == p.tensor.len() => Ok(v),
                        _ => Err(bad(format!("missing or malformed `{want}`"))),
                    }
                };
                *state = AdamState {
                    step: meta.adam_step,
                    m: next("m")?,
                    v: next("v")?,
                    config: state.config,
                };
            }
            if rest.next().is_some() {
                return Err(bad("unexpected extra tensors".into()));
            }
            Some(opt)
        };
        Ok(Checkpoint {
            meta,
            weights,
            optimizer,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
