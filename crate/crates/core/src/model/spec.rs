use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::BandSpec;
use crate::error::{check_dim, Error, Result};
use crate::tensor::{check_shape, ConvParams, Shape};

/// The four network families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mbr-fcn")]
    MbrFcn,
    #[serde(rename = "fcn")]
    Fcn,
    #[serde(rename = "unet")]
    Unet,
    #[serde(rename = "dnn")]
    Dnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::MbrFcn, ModelKind::Fcn, ModelKind::Unet, ModelKind::Dnn];

    /// Command-line spelling.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::MbrFcn => "mbr-fcn",
            ModelKind::Fcn => "fcn",
            ModelKind::Unet => "unet",
            ModelKind::Dnn => "dnn",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            ModelKind::MbrFcn => "MBR-FCN",
            ModelKind::Fcn => "FCN",
            ModelKind::Unet => "U-Net",
            ModelKind::Dnn => "DNN",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        ModelKind::ALL
            .into_iter()
            .find(|k| k.id() == key || k.title().to_ascii_lowercase() == key)
            .ok_or_else(|| {
                Error::invalid(
                    "model",
                    format!("unknown model `{s}` (expected mbr-fcn, fcn, unet or dnn)"),
                )
            })
    }
}

/// What a graph node computes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Input,
    SliceBand(BandSpec),
    Conv(ConvParams),
    ConvTranspose(ConvParams),
    /// Affine map on the frequency axis, applied to every frame.
    Dense {
        inputs: usize,
        outputs: usize,
    },
    BatchNorm {
        channels: usize,
        affine: bool,
    },
    Relu,
    ConcatFreq,
    ConcatChannel,
}

impl LayerKind {
    pub fn label(&self) -> &'static str {
        match self {
            LayerKind::Input => "Input",
            LayerKind::SliceBand(_) => "SliceBand",
            LayerKind::Conv(_) => "Conv2D",
            LayerKind::ConvTranspose(_) => "Conv2DTr",
            LayerKind::Dense { .. } => "Dense",
            LayerKind::BatchNorm { .. } => "BatchNorm",
            LayerKind::Relu => "ReLU",
            LayerKind::ConcatFreq => "ConcatFreq",
            LayerKind::ConcatChannel => "ConcatChannel",
        }
    }

    pub fn conv(&self) -> Option<&ConvParams> {
        match self {
            LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => Some(p),
            _ => None,
        }
    }

    /// Trainable values followed by tracked statistics.
    pub fn param_counts(&self) -> (usize, usize) {
        match self {
            LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => (p.param_count(), 0),
            LayerKind::Dense { inputs, outputs } => (inputs * outputs + outputs, 0),
            LayerKind::BatchNorm { channels, affine } => (if *affine { 2 * channels } else { 0 }, 2 * channels),
            _ => (0, 0),
        }
    }
}

/// One node of a model graph. `inputs` index earlier nodes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<usize>,
}

/// A model as a topologically ordered layer graph whose last node is the output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// `(frames, bins)` of one input example.
    pub input: (usize, usize),
    /// Whether the network treats every frame independently, so any number
    /// of frames is accepted.
    pub frame_wise: bool,
    pub layers: Vec<LayerSpec>,
    pub depth: usize,
    pub bands: usize,
}

impl ModelSpec {
    pub fn input_shape(&self, batch: usize) -> Shape {
        Shape::new(batch, 1, self.input.0, self.input.1)
    }

    pub fn output_index(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Node output shapes for an input of shape `input`.
    pub fn shapes_for(&self, input: Shape) -> Result<Vec<Shape>> {
        let mut shapes: Vec<Shape> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let shape = node_shape(layer, i, input, &shapes).map_err(|e| e.in_node(&layer.name))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn shapes(&self, batch: usize) -> Result<Vec<Shape>> {
        self.shapes_for(self.input_shape(batch))
    }

    /// Checks wiring and that the output shape equals the input shape.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty { op: "model" });
        }
        let shapes = self.shapes(1)?;
        let out = *shapes.last().expect("non-empty");
        if out != self.input_shape(1) {
            return Err(Error::invalid(
                "model",
                format!("{} maps {:?} to {out:?}", self.kind.title(), self.input_shape(1)),
            ));
        }
        Ok(())
    }

    /// Digest of the canonical JSON form; stored in checkpoints.
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("model specs always serialise");
        Sha256::digest(&json).into()
    }
}

fn node_shape(layer: &LayerSpec, index: usize, input: Shape, done: &[Shape]) -> Result<Shape> {
    let arity = |n: usize| -> Result<()> {
        if layer.inputs.len() == n || (n == usize::MAX && !layer.inputs.is_empty()) {
            Ok(())
        } else {
            Err(Error::invalid(
                "model",
                format!("{} takes {n} inputs, got {}", layer.kind.label(), layer.inputs.len()),
            ))
        }
    };
    if let Some(&bad) = layer.inputs.iter().find(|&&j| j >= index) {
        return Err(Error::invalid("model", format!("input {bad} is not an earlier node")));
    }
    let ins: Vec<Shape> = layer.inputs.iter().map(|&j| done[j]).collect();
    match &layer.kind {
        LayerKind::Input => {
            arity(0)?;
            Ok(input)
        }
        LayerKind::SliceBand(b) => {
            arity(1)?;
            b.validate(ins[0].freq)?;
            Ok(Shape {
                freq: b.width(),
                ..ins[0]
            })
        }
        LayerKind::Conv(p) => {
            arity(1)?;
            check_dim("conv2d", "channel", p.in_channels, ins[0].channels)?;
            let (t, f) = p.conv_output(ins[0].time, ins[0].freq)?;
            Ok(Shape::new(ins[0].batch, p.out_channels, t, f))
        }
        LayerKind::ConvTranspose(p) => {
            arity(1)?;
            check_dim("conv2d_transpose", "channel", p.in_channels, ins[0].channels)?;
            let (t, f) = p.transpose_output(ins[0].time, ins[0].freq)?;
            Ok(Shape::new(ins[0].batch, p.out_channels, t, f))
        }
        LayerKind::Dense { inputs, outputs } => {
            arity(1)?;
            check_dim("dense", "freq", *inputs, ins[0].freq)?;
            Ok(Shape {
                freq: *outputs,
                ..ins[0]
            })
        }
        LayerKind::BatchNorm { channels, .. } => {
            arity(1)?;
            check_dim("batchnorm", "channel", *channels, ins[0].channels)?;
            Ok(ins[0])
        }
        LayerKind::Relu => {
            arity(1)?;
            Ok(ins[0])
        }
        LayerKind::ConcatFreq => {
            arity(usize::MAX)?;
            for s in &ins[1..] {
                check_shape(
                    "concat_freq",
                    Shape {
                        freq: ins[0].freq,
                        ..*s
                    },
                    ins[0],
                )?;
            }
            Ok(Shape {
                freq: ins.iter().map(|s| s.freq).sum(),
                ..ins[0]
            })
        }
        LayerKind::ConcatChannel => {
            arity(usize::MAX)?;
            for s in &ins[1..] {
                check_shape(
                    "concat_channels",
                    Shape {
                        channels: ins[0].channels,
                        ..*s
                    },
                    ins[0],
                )?;
            }
            Ok(Shape {
                channels: ins.iter().map(|s| s.channels).sum(),
                ..ins[0]
            })
        }
    }
}

/// Appends layers to a graph under construction.
pub(crate) struct GraphBuilder {
    layers: Vec<LayerSpec>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            layers: vec![LayerSpec {
                name: "input".into(),
                kind: LayerKind::Input,
                inputs: Vec::new(),
            }],
        }
    }

    pub fn push(&mut self, name: impl Into<String>, kind: LayerKind, inputs: Vec<usize>) -> usize {
        self.layers.push(LayerSpec {
            name: name.into(),
            kind,
            inputs,
        });
        self.layers.len() - 1
    }

    /// `layer -> [BN] -> ReLU` chained after `from`; returns the ReLU node.
    pub fn block(&mut self, prefix: &str, tag: &str, kind: LayerKind, bn: bool, from: usize) -> usize {
        let channels = kind.conv().map(|p| p.out_channels);
        let name = match kind {
            LayerKind::ConvTranspose(_) => format!("{prefix}convt{tag}"),
            LayerKind::Dense { .. } => format!("{prefix}dense{tag}"),
            _ => format!("{prefix}conv{tag}"),
        };
        let mut at = self.push(name, kind, vec![from]);
        if bn {
            let channels = channels.expect("batch norm follows a convolution");
            at = self.push(
                format!("{prefix}bn{tag}"),
                LayerKind::BatchNorm { channels, affine: true },
                vec![at],
            );
        }
        self.push(format!("{prefix}relu{tag}"), LayerKind::Relu, vec![at])
    }

    pub fn finish(self) -> Vec<LayerSpec> {
        self.layers
    }
}
