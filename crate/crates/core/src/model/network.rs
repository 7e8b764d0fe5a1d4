use super::params::{Param, WeightSet};
use super::spec::{LayerKind, ModelSpec};
use crate::error::{check_dim, Error, Result};
use crate::tensor::{
    adam_step, batchnorm_backward, batchnorm_forward, dense_backward, dense_forward, mse_loss, relu, relu_backward,
    AdamConfig, AdamState, BatchNormCache, BatchNormState, BnMode, ConvLayer, Real, Shape, Tensor,
};

/// Activations kept by a training-mode forward pass.
struct Tape<T> {
    values: Vec<Option<Tensor<T>>>,
    norms: Vec<Option<BatchNormCache<T>>>,
    shapes: Vec<Shape>,
}

/// Gradient of every stored tensor (`None` for statistics) and of the input.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub params: Vec<Option<Tensor<T>>>,
    pub input: Tensor<T>,
}

/// A model graph bound to its weights.
pub struct Network<T: Real> {
    spec: ModelSpec,
    weights: WeightSet<T>,
    /// Index of each layer's first tensor in `weights.params`.
    slots: Vec<usize>,
    convs: Vec<Option<ConvLayer<T>>>,
    tape: Option<Tape<T>>,
}

impl<T: Real> Network<T> {
    pub fn new(spec: ModelSpec, weights: WeightSet<T>) -> Result<Self> {
        spec.validate()?;
        weights.check(&spec)?;
        let mut slots = Vec::with_capacity(spec.layers.len());
        let mut next = 0;
        let mut convs = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            slots.push(next);
            next += super::params::layer_params(&layer.kind).len();
            convs.push(match &layer.kind {
                LayerKind::Conv(p) => Some(ConvLayer::new(*p, false)?),
                LayerKind::ConvTranspose(p) => Some(ConvLayer::new(*p, true)?),
                _ => None,
            });
        }
        Ok(Network {
            spec,
            weights,
            slots,
            convs,
            tape: None,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &WeightSet<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightSet<T> {
        &mut self.weights
    }

    pub fn into_weights(self) -> WeightSet<T> {
        self.weights
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        const OP: &str = "forward";
        let s = input.shape();
        check_dim(OP, "channel", 1, s.channels)?;
        check_dim(OP, "freq", self.spec.input.1, s.freq)?;
        if !self.spec.frame_wise {
            check_dim(OP, "time", self.spec.input.0, s.time)?;
        }
        if s.is_empty() {
            return Err(Error::Empty { op: OP });
        }
        Ok(())
    }

    /// Runs the graph. `Train` mode normalises with batch statistics, updates
    /// the moving statistics and records what [`Network::backward`] needs.
    pub fn forward(&mut self, input: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let training = mode == BnMode::Train;
        let n = self.spec.layers.len();
        let mut pending = vec![0usize; n];
        // Outputs the backward pass reads: inputs of weighted layers and ReLU outputs.
        let mut keep = vec![false; n];
        for (i, layer) in self.spec.layers.iter().enumerate() {
            for &j in &layer.inputs {
                pending[j] += 1;
                if matches!(
                    layer.kind,
                    LayerKind::Conv(_) | LayerKind::ConvTranspose(_) | LayerKind::Dense { .. }
                ) {
                    keep[j] = true;
                }
            }
            if layer.kind == LayerKind::Relu {
                keep[i] = true;
            }
        }
        let mut values: Vec<Option<Tensor<T>>> = vec![None; n];
        let mut norms: Vec<Option<BatchNormCache<T>>> = vec![None; n];
        let mut shapes = Vec::with_capacity(n);
        self.tape = None;
        let Network {
            spec,
            weights,
            slots,
            convs,
            ..
        } = self;
        for (i, layer) in spec.layers.iter().enumerate() {
            let ins: Vec<&Tensor<T>> = layer
                .inputs
                .iter()
                .map(|&j| values[j].as_ref().expect("inputs stay alive until consumed"))
                .collect();
            let params = &mut weights.params[slots[i]..];
            let (out, cache) =
                eval(&layer.kind, convs[i].as_mut(), params, &ins, input, mode).map_err(|e| e.in_node(&layer.name))?;
            shapes.push(out.shape());
            values[i] = Some(out);
            norms[i] = if training { cache } else { None };
            for &j in &layer.inputs {
                pending[j] -= 1;
                if pending[j] == 0 && !(training && keep[j]) {
                    values[j] = None;
                }
            }
        }
        let out = values[n - 1].clone().expect("the output node was just evaluated");
        if training {
            self.tape = Some(Tape { values, norms, shapes });
        }
        Ok(out)
    }

    /// Inference-mode forward pass.
    pub fn predict(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward(input, BnMode::Infer)
    }

    /// Back-propagates `grad_out` through the last training-mode forward pass.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Gradients<T>> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::invalid("backward", "no training-mode forward pass to differentiate"))?;
        let n = self.spec.layers.len();
        crate::tensor::check_shape("backward", tape.shapes[n - 1], grad_out.shape())?;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        grads[n - 1] = Some(grad_out.clone());
        let mut params: Vec<Option<Tensor<T>>> = vec![None; self.weights.params.len()];
        let mut input_grad = None;
        let Network {
            spec,
            weights,
            slots,
            convs,
            ..
        } = self;
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let layer = &spec.layers[i];
            let slot = slots[i];
            let value = |j: usize| tape.values[j].as_ref().expect("kept for backward");
            let result: Result<Vec<Tensor<T>>> = (|| {
                Ok(match &layer.kind {
                    LayerKind::Input => {
                        input_grad = Some(g);
                        Vec::new()
                    }
                    LayerKind::SliceBand(b) => {
                        let parent = tape.shapes[layer.inputs[0]];
                        let mut full = Tensor::zeros(parent);
                        let w = b.width();
                        for (dst, src) in full
                            .data_mut()
                            .chunks_exact_mut(parent.freq)
                            .zip(g.data().chunks_exact(w))
                        {
                            dst[b.bin_from..b.bin_to].copy_from_slice(src);
                        }
                        vec![full]
                    }
                    LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => {
                        let w = &weights.params[slot].tensor;
                        let conv = convs[i].as_mut().expect("conv layers own a ConvLayer");
                        let cg = conv.backward(&g, value(layer.inputs[0]), w)?;
                        params[slot] = Some(cg.weights);
                        if p.use_bias {
                            params[slot + 1] = Some(vector(cg.bias));
                        }
                        vec![cg.input]
                    }
                    LayerKind::Dense { .. } => {
                        let dg = dense_backward(&g, value(layer.inputs[0]), &weights.params[slot].tensor)?;
                        params[slot] = Some(dg.weights);
                        params[slot + 1] = Some(vector(dg.bias));
                        vec![dg.input]
                    }
                    LayerKind::BatchNorm { affine, .. } => {
                        let state = bn_state(&weights.params[slot..], *affine);
                        let cache = tape.norms[i].as_ref().expect("training pass caches batch norm");
                        let (gx, dgamma, dbeta) = batchnorm_backward(&g, cache, &state)?;
                        if *affine {
                            params[slot] = Some(vector(dgamma));
                            params[slot + 1] = Some(vector(dbeta));
                        }
                        vec![gx]
                    }
                    LayerKind::Relu => vec![relu_backward(&g, value(i))?],
                    LayerKind::ConcatFreq => {
                        let widths: Vec<usize> = layer.inputs.iter().map(|&j| tape.shapes[j].freq).collect();
                        g.split_freq(&widths)?
                    }
                    LayerKind::ConcatChannel => {
                        let counts: Vec<usize> = layer.inputs.iter().map(|&j| tape.shapes[j].channels).collect();
                        g.split_channels(&counts)?
                    }
                })
            })();
            let parts = result.map_err(|e| e.in_node(&layer.name))?;
            for (&j, part) in layer.inputs.iter().zip(parts) {
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&part)?,
                    slot @ None => *slot = Some(part),
                }
            }
        }
        // Trainable tensors that received no gradient (unreachable layers) get zeros.
        for (g, p) in params.iter_mut().zip(&weights.params) {
            if g.is_none() && p.role.trainable() {
                *g = Some(Tensor::zeros(p.tensor.shape()));
            }
        }
        Ok(Gradients {
            params,
            input: input_grad.unwrap_or_else(|| Tensor::zeros(tape.shapes[0])),
        })
    }

    /// Training-mode forward pass, MSE against `target`, and its gradients.
    pub fn mse_step(&mut self, input: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Gradients<T>)> {
        let out = self.forward(input, BnMode::Train)?;
        let (loss, g) = mse_loss(&out, target)?;
        Ok((loss.as_f64(), self.backward(&g)?))
    }
}

fn vector<T: Real>(v: Vec<T>) -> Tensor<T> {
    let n = v.len();
    Tensor::from_vec(Shape::new(1, 1, 1, n), v).expect("length matches")
}

fn bn_state<T: Real>(params: &[Param<T>], affine: bool) -> BatchNormState<T> {
    let channels = params[0].tensor.len();
    let mut state = BatchNormState::new(channels, affine);
    let stats = if affine {
        state.gamma = params[0].tensor.data().to_vec();
        state.beta = params[1].tensor.data().to_vec();
        &params[2..4]
    } else {
        &params[0..2]
    };
    state.moving_mean = stats[0].tensor.data().to_vec();
    state.moving_var = stats[1].tensor.data().to_vec();
    state
}

fn eval<T: Real>(
    kind: &LayerKind,
    conv: Option<&mut ConvLayer<T>>,
    params: &mut [Param<T>],
    ins: &[&Tensor<T>],
    input: &Tensor<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, Option<BatchNormCache<T>>)> {
    let out = match kind {
        LayerKind::Input => input.clone(),
        LayerKind::SliceBand(b) => {
            b.validate(ins[0].shape().freq)?;
            ins[0].slice_freq(b.bin_from, b.bin_to)?
        }
        LayerKind::Conv(p) | LayerKind::ConvTranspose(p) => {
            let conv = conv.expect("conv layers own a ConvLayer");
            let bias = p.use_bias.then(|| params[1].tensor.data());
            conv.forward(ins[0], &params[0].tensor, bias)?
        }
        LayerKind::Dense { .. } => dense_forward(ins[0], &params[0].tensor, params[1].tensor.data())?,
        LayerKind::BatchNorm { affine, .. } => {
            let mut state = bn_state(params, *affine);
            let (y, cache) = batchnorm_forward(ins[0], &mut state, mode)?;
            if mode == BnMode::Train {
                let at = if *affine { 2 } else { 0 };
                params[at].tensor.data_mut().copy_from_slice(&state.moving_mean);
                params[at + 1].tensor.data_mut().copy_from_slice(&state.moving_var);
            }
            return Ok((y, Some(cache)));
        }
        LayerKind::Relu => relu(ins[0]),
        LayerKind::ConcatFreq => Tensor::concat_freq(ins)?,
        LayerKind::ConcatChannel => Tensor::concat_channels(ins)?,
    };
    Ok((out, None))
}

/// Adam over every trainable tensor of a network.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    pub states: Vec<Option<AdamState<T>>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(weights: &WeightSet<T>, config: AdamConfig) -> Self {
        Optimizer {
            states: weights
                .params
                .iter()
                .map(|p| p.role.trainable().then(|| AdamState::new(p.tensor.len(), config)))
                .collect(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.states
            .iter()
            .flatten()
            .next()
            .map_or(0.0, |s| s.config.learning_rate)
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        for s in self.states.iter_mut().flatten() {
            s.config.learning_rate = lr;
        }
    }

    pub fn step(&mut self, weights: &mut WeightSet<T>, grads: &Gradients<T>) -> Result<()> {
        check_dim("optimizer", "tensor", self.states.len(), grads.params.len())?;
        for ((state, p), g) in self.states.iter_mut().zip(&mut weights.params).zip(&grads.params) {
            if let (Some(state), Some(g)) = (state, g) {
                adam_step(&mut p.tensor, g, state).map_err(|e| e.in_node(&p.name))?;
            }
        }
        Ok(())
    }
}
