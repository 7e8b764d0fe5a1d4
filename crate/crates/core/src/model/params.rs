use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerKind, ModelSpec};
use crate::error::{check_dim, Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Parameter totals per layer and overall. Batch-norm moving statistics are
/// counted as non-trainable parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamReport {
    pub layers: Vec<(String, usize)>,
    pub total: usize,
    pub trainable: usize,
    pub statistics: usize,
}

pub fn count_params(spec: &ModelSpec) -> ParamReport {
    let mut report = ParamReport {
        layers: Vec::new(),
        total: 0,
        trainable: 0,
        statistics: 0,
    };
    for layer in &spec.layers {
        let (trainable, stats) = layer.kind.param_counts();
        if trainable + stats == 0 {
            continue;
        }
        report.layers.push((layer.name.clone(), trainable + stats));
        report.trainable += trainable;
        report.statistics += stats;
    }
    report.total = report.trainable + report.statistics;
    report
}

/// Role of one stored tensor within its layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Gamma,
    Beta,
    MovingMean,
    MovingVar,
}

impl ParamRole {
    pub fn suffix(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::Gamma => "gamma",
            ParamRole::Beta => "beta",
            ParamRole::MovingMean => "moving_mean",
            ParamRole::MovingVar => "moving_var",
        }
    }

    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::MovingMean | ParamRole::MovingVar)
    }
}

/// Tensors a layer stores, in storage order.
pub(crate) fn layer_params(kind: &LayerKind) -> Vec<(ParamRole, Shape)> {
    let vector = |n: usize| Shape::new(1, 1, 1, n);
    match kind {
        LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => {
            let mut v = vec![(ParamRole::Weight, p.weight_shape())];
            if p.use_bias {
                v.push((ParamRole::Bias, vector(p.out_channels)));
            }
            v
        }
        LayerKind::Dense { inputs, outputs } => vec![
            (ParamRole::Weight, Shape::new(1, 1, *outputs, *inputs)),
            (ParamRole::Bias, vector(*outputs)),
        ],
        LayerKind::BatchNorm { channels, affine } => {
            let mut v = Vec::new();
            if *affine {
                v.push((ParamRole::Gamma, vector(*channels)));
                v.push((ParamRole::Beta, vector(*channels)));
            }
            v.push((ParamRole::MovingMean, vector(*channels)));
            v.push((ParamRole::MovingVar, vector(*channels)));
            v
        }
        _ => Vec::new(),
    }
}

/// Fan-in used to scale the initial weights.
fn fan_in(kind: &LayerKind) -> usize {
    match kind {
        LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => p.in_channels * p.kernel_time * p.kernel_freq,
        LayerKind::Dense { inputs, .. } => *inputs,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub role: ParamRole,
    pub tensor: Tensor<T>,
}

/// Every stored tensor of a model, named `<layer>.<role>`, in graph order.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T> {
    pub seed: u64,
    pub params: Vec<Param<T>>,
}

impl<T: Real> WeightSet<T> {
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total stored values.
    pub fn value_count(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> WeightSet<U> {
        WeightSet {
            seed: self.seed,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    role: p.role,
                    tensor: p.tensor.cast(),
                })
                .collect(),
        }
    }

    /// `(name, role, shape)` of every tensor `spec` stores, in storage order.
    pub fn layout_of(spec: &ModelSpec) -> Vec<(String, ParamRole, Shape)> {
        layout(spec)
    }

    /// Checks names and shapes against `spec`.
    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        let expected = layout(spec);
        if expected.len() != self.params.len() {
            return Err(Error::invalid(
                "weights",
                format!(
                    "model stores {} tensors, weight set has {}",
                    expected.len(),
                    self.params.len()
                ),
            ));
        }
        for ((name, role, shape), p) in expected.iter().zip(&self.params) {
            if *name != p.name || *role != p.role {
                return Err(Error::invalid(
                    "weights",
                    format!("expected `{name}`, found `{}`", p.name),
                ));
            }
            let got = p.tensor.shape();
            for (axis, (e, g)) in ["batch", "channel", "time", "freq"]
                .into_iter()
                .zip(shape.dims().into_iter().zip(got.dims()))
            {
                check_dim("weights", axis, e, g).map_err(|e| e.in_node(name))?;
            }
        }
        Ok(())
    }
}

/// `(name, role, shape)` of every stored tensor.
pub(crate) fn layout(spec: &ModelSpec) -> Vec<(String, ParamRole, Shape)> {
    spec.layers
        .iter()
        .flat_map(|l| {
            layer_params(&l.kind)
                .into_iter()
                .map(move |(role, shape)| (format!("{}.{}", l.name, role.suffix()), role, shape))
        })
        .collect()
}

/// Weights drawn from `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))` with one
/// seeded stream in graph order; biases and shifts start at zero, scales and
/// moving variances at one.
pub fn init_weights<T: Real>(spec: &ModelSpec, seed: u64) -> WeightSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for layer in &spec.layers {
        let bound = (6.0 / fan_in(&layer.kind) as f64).sqrt();
        for (role, shape) in layer_params(&layer.kind) {
            let tensor = match role {
                ParamRole::Weight => Tensor::uniform(shape, -bound, bound, &mut rng),
                ParamRole::Gamma | ParamRole::MovingVar => Tensor::full(shape, T::one()),
                _ => Tensor::zeros(shape),
            };
            params.push(Param {
                name: format!("{}.{}", layer.name, role.suffix()),
                role,
                tensor,
            });
        }
    }
    WeightSet { seed, params }
}
