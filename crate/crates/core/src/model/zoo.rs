use super::spec::{GraphBuilder, LayerKind, ModelKind, ModelSpec};
use crate::dsp::{default_bands, BandSpec, DEFAULT_PATCH_FRAMES};
use crate::error::{Error, Result};
use crate::tensor::ConvParams;

pub const BINS: usize = 1025;

/// `(filters, (time, freq))`.
pub type FilterSet = (usize, (usize, usize));

/// Layout of a multi-band network: per-band filter sets for the two
/// convolutions, the shared transposed convolution and the output head.
#[derive(Clone, Debug, PartialEq)]
pub struct MbrFcnConfig {
    pub frames: usize,
    pub bins: usize,
    pub bands: Vec<BandSpec>,
    /// Sets 1 and 2 of each band, in band order.
    pub sets: Vec<[FilterSet; 2]>,
    pub set3: FilterSet,
    /// Kernel of the single-filter output layer.
    pub head: (usize, usize),
}

impl Default for MbrFcnConfig {
    fn default() -> Self {
        MbrFcnConfig {
            frames: DEFAULT_PATCH_FRAMES,
            bins: BINS,
            bands: default_bands(),
            sets: vec![
                [(7, (15, 11)), (15, (15, 7))],
                [(7, (13, 18)), (15, (13, 11))],
                [(5, (11, 33)), (13, (11, 19))],
                [(3, (9, 51)), (6, (9, 25))],
                [(3, (7, 101)), (6, (7, 51))],
            ],
            set3: (5, (15, 131)),
            head: (DEFAULT_PATCH_FRAMES, BINS),
        }
    }
}

impl MbrFcnConfig {
    /// A small network with the same topology, for finite-difference checks:
    /// 41 bins in five adjacent bands of widths 8, 10, 11, 6 and 6, all
    /// unstrided, over 9 frames.
    pub fn shrunken() -> Self {
        let widths = [8, 10, 11, 6, 6];
        let mut from = 0;
        let bands = widths
            .iter()
            .zip(["a", "b", "c", "d", "e"])
            .map(|(&w, name)| {
                from += w;
                BandSpec::new(name, from - w, from, 1)
            })
            .collect();
        MbrFcnConfig {
            frames: 9,
            bins: 41,
            bands,
            sets: vec![
                [(2, (5, 3)), (3, (5, 2))],
                [(2, (4, 3)), (3, (4, 3))],
                [(2, (3, 4)), (2, (3, 3))],
                [(1, (3, 5)), (2, (3, 3))],
                [(1, (2, 5)), (2, (2, 4))],
            ],
            set3: (2, (5, 7)),
            head: (9, 41),
        }
    }

    pub fn build(&self) -> Result<ModelSpec> {
        if self.sets.len() != self.bands.len() {
            return Err(Error::invalid(
                "build_mbr_fcn",
                format!("{} bands but {} filter-set pairs", self.bands.len(), self.sets.len()),
            ));
        }
        let width: usize = self.bands.iter().map(BandSpec::output_width).sum();
        if width != self.bins {
            return Err(Error::invalid(
                "build_mbr_fcn",
                format!("band outputs concatenate to {width} bins, not {}", self.bins),
            ));
        }
        let mut g = GraphBuilder::new();
        let mut branches = Vec::with_capacity(self.bands.len());
        for (band, [s1, s2]) in self.bands.iter().zip(&self.sets) {
            let p = format!("{}.", band.name);
            let slice = g.push(format!("{p}slice"), LayerKind::SliceBand(band.clone()), vec![0]);
            let c1 = ConvParams::new(s1.0, 1, s1.1).with_stride(1, band.stride_freq);
            let x = g.block(&p, "1", LayerKind::Conv(c1), true, slice);
            let x = g.block(&p, "2", LayerKind::Conv(ConvParams::new(s2.0, s1.0, s2.1)), true, x);
            let c3 = ConvParams::new(self.set3.0, s2.0, self.set3.1);
            branches.push(g.block(&p, "3", LayerKind::ConvTranspose(c3), true, x));
        }
        let cat = g.push("concat", LayerKind::ConcatFreq, branches);
        g.block(
            "out.",
            "4",
            LayerKind::ConvTranspose(ConvParams::new(1, self.set3.0, self.head)),
            false,
            cat,
        );
        let spec = ModelSpec {
            kind: ModelKind::MbrFcn,
            input: (self.frames, self.bins),
            frame_wise: false,
            layers: g.finish(),
            depth: 2,
            bands: self.bands.len(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn build_mbr_fcn() -> ModelSpec {
    MbrFcnConfig::default()
        .build()
        .expect("the default band layout is consistent")
}

fn fcn_like(kind: ModelKind) -> ModelSpec {
    let mut g = GraphBuilder::new();
    let l1 = g.block("", "1", LayerKind::Conv(ConvParams::new(25, 1, (11, 42))), true, 0);
    let l2 = g.block("", "2", LayerKind::Conv(ConvParams::new(55, 25, (11, 22))), false, l1);
    let l3 = g.block(
        "",
        "3",
        LayerKind::ConvTranspose(ConvParams::new(25, 55, (15, 131))),
        false,
        l2,
    );
    let (from, channels) = if kind == ModelKind::Unet {
        (g.push("skip", LayerKind::ConcatChannel, vec![l1, l3]), 50)
    } else {
        (l3, 25)
    };
    let head = ConvParams::new(1, channels, (DEFAULT_PATCH_FRAMES, BINS));
    g.block("", "4", LayerKind::ConvTranspose(head), false, from);
    ModelSpec {
        kind,
        input: (DEFAULT_PATCH_FRAMES, BINS),
        frame_wise: false,
        layers: g.finish(),
        depth: 2,
        bands: 1,
    }
}

pub fn build_fcn() -> ModelSpec {
    fcn_like(ModelKind::Fcn)
}

/// The FCN with the first layer's output stacked onto the third layer's
/// output before the head.
pub fn build_unet() -> ModelSpec {
    fcn_like(ModelKind::Unet)
}

/// Four 1025-wide dense layers with ReLU, applied frame by frame.
pub fn build_dnn() -> ModelSpec {
    let mut g = GraphBuilder::new();
    let mut at = 0;
    for i in 1..=4 {
        let dense = LayerKind::Dense {
            inputs: BINS,
            outputs: BINS,
        };
        at = g.block("", &i.to_string(), dense, false, at);
    }
    ModelSpec {
        kind: ModelKind::Dnn,
        input: (1, BINS),
        frame_wise: true,
        layers: g.finish(),
        depth: 4,
        bands: 1,
    }
}

pub fn build(kind: ModelKind) -> ModelSpec {
    match kind {
        ModelKind::MbrFcn => build_mbr_fcn(),
        ModelKind::Fcn => build_fcn(),
        ModelKind::Unet => build_unet(),
        ModelKind::Dnn => build_dnn(),
    }
}
