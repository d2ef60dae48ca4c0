use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;
use super::layers::{self, ConvGeometry};
use crate::error::{invalid, shape, Error, Result};
use crate::loss::GroupLayout;
use crate::tensor::Tensor;

fn one() -> usize {
    1
}

/// One entry of the linear layer sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    GlobalAvgPool,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Dropout {
        rate: f64,
    },
    /// Final classification layer: a dense map to `target + auxiliary`
    /// logits followed by a single softmax over all of them.
    Head {
        inputs: usize,
        target: usize,
        auxiliary: usize,
    },
}

impl Layer {
    pub fn is_trainable(&self) -> bool {
        matches!(
            self,
            Layer::Conv2d { .. } | Layer::Dense { .. } | Layer::Head { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dense { .. } => "dense",
            Layer::Dropout { .. } => "dropout",
            Layer::Head { .. } => "head",
        }
    }

    /// Weight and bias shapes for trainable layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => Some((
                vec![kernel_size, kernel_size, in_channels, out_channels],
                vec![out_channels],
            )),
            Layer::Dense { inputs, outputs } => Some((vec![inputs, outputs], vec![outputs])),
            Layer::Head {
                inputs,
                target,
                auxiliary,
            } => Some((vec![inputs, target + auxiliary], vec![target + auxiliary])),
            _ => None,
        }
    }

    fn fans(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_size,
                ..
            } => {
                let area = kernel_size * kernel_size;
                Some((area * in_channels, area * out_channels))
            }
            Layer::Dense { inputs, outputs } => Some((inputs, outputs)),
            Layer::Head {
                inputs,
                target,
                auxiliary,
            } => Some((inputs, target + auxiliary)),
            _ => None,
        }
    }
}

/// Layered network definition. `input_shape` is the per-sample shape:
/// `[height, width, channels]` for images or `[features]` for vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    /// Checks the layer sequence and returns the per-sample output shape of
    /// every layer.
    pub fn output_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let head_count = self
            .layers
            .iter()
            .filter(|l| matches!(l, Layer::Head { .. }))
            .count();
        if head_count != 1 || !matches!(self.layers.last(), Some(Layer::Head { .. })) {
            return Err(invalid("model needs exactly one head layer, placed last"));
        }
        let mut current = self.input_shape.clone();
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            current = match (layer, current.as_slice()) {
                (
                    Layer::Conv2d {
                        in_channels,
                        out_channels,
                        kernel_size,
                        stride,
                        padding,
                    },
                    &[h, w, c],
                ) => {
                    if c != *in_channels {
                        return Err(shape(format!(
                            "layer {i}: conv expects {in_channels} channels, got {c}"
                        )));
                    }
                    if *out_channels == 0 {
                        return Err(invalid(format!("layer {i}: conv with zero channels")));
                    }
                    let geom = ConvGeometry {
                        stride: *stride,
                        padding: *padding,
                    };
                    vec![
                        geom.output_extent(h, *kernel_size)?,
                        geom.output_extent(w, *kernel_size)?,
                        *out_channels,
                    ]
                }
                (Layer::GlobalAvgPool, &[_, _, c]) => vec![c],
                (Layer::Dense { inputs, outputs }, &[p]) => {
                    if p != *inputs || *outputs == 0 {
                        return Err(shape(format!(
                            "layer {i}: dense {inputs}->{outputs} fed with width {p}"
                        )));
                    }
                    vec![*outputs]
                }
                (
                    Layer::Head {
                        inputs,
                        target,
                        auxiliary,
                    },
                    &[p],
                ) => {
                    if p != *inputs || *target == 0 {
                        return Err(shape(format!(
                            "layer {i}: head {inputs}->{target}+{auxiliary} fed with width {p}"
                        )));
                    }
                    vec![target + auxiliary]
                }
                (Layer::Relu, s) => s.to_vec(),
                (Layer::Dropout { rate }, s) => {
                    layers::check_dropout_rate(*rate)?;
                    s.to_vec()
                }
                (layer, s) => {
                    return Err(shape(format!(
                        "layer {i} ({}) cannot take input of shape {s:?}",
                        layer.kind()
                    )))
                }
            };
            shapes.push(current.clone());
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.output_shapes().map(|_| ())
    }

    pub fn head_index(&self) -> usize {
        self.layers.len() - 1
    }

    /// Group layout of the head.
    pub fn layout(&self) -> GroupLayout {
        match self.layers.last() {
            Some(Layer::Head {
                target, auxiliary, ..
            }) => GroupLayout {
                k: *target,
                m: *auxiliary,
            },
            _ => GroupLayout { k: 0, m: 0 },
        }
    }

    pub fn head_outputs(&self) -> usize {
        self.layout().n()
    }

    /// Width of the first dense layer, if any.
    pub fn n1(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match l {
            Layer::Dense { outputs, .. } => Some(*outputs),
            _ => None,
        })
    }

    /// Width feeding the head.
    pub fn n2(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Head { inputs, .. }) => *inputs,
            _ => 0,
        }
    }

    pub fn last_conv_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Conv2d { .. }))
    }

    pub fn conv_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, Layer::Conv2d { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn has_dropout(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l, Layer::Dropout { rate } if *rate > 0.0))
    }
}

/// Compact description of the base architecture: convolutional feature
/// extractor, global average pooling, two ReLU dense layers and the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
    pub conv_channels: Vec<usize>,
    #[serde(default = "three")]
    pub kernel_size: usize,
    /// Stride per conv layer; missing entries default to 1.
    #[serde(default)]
    pub conv_strides: Vec<usize>,
    pub n1: usize,
    pub n2: usize,
    /// Dropout applied after each dense layer.
    #[serde(default)]
    pub dropout: Option<f64>,
}

fn three() -> usize {
    3
}

impl Architecture {
    pub fn build(&self, target_classes: usize) -> Result<ModelSpec> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(invalid("dense widths n1 and n2 must be at least 1"));
        }
        let mut layers = Vec::new();
        let mut channels = self.channels;
        for (i, &out) in self.conv_channels.iter().enumerate() {
            layers.push(Layer::Conv2d {
                in_channels: channels,
                out_channels: out,
                kernel_size: self.kernel_size,
                stride: self.conv_strides.get(i).copied().unwrap_or(1),
                padding: 0,
            });
            layers.push(Layer::Relu);
            channels = out;
        }
        layers.push(Layer::GlobalAvgPool);
        let mut width = channels;
        for n in [self.n1, self.n2] {
            layers.push(Layer::Dense {
                inputs: width,
                outputs: n,
            });
            layers.push(Layer::Relu);
            if let Some(rate) = self.dropout {
                layers.push(Layer::Dropout { rate });
            }
            width = n;
        }
        layers.push(Layer::Head {
            inputs: width,
            target: target_classes,
            auxiliary: 0,
        });
        let spec = ModelSpec {
            input_shape: vec![self.height, self.width, self.channels],
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Trainable weights, one slot per layer (empty for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    slots: Vec<Option<LayerParams>>,
}

impl ParameterStore {
    pub fn new(slots: Vec<Option<LayerParams>>) -> Self {
        ParameterStore { slots }
    }

    /// Zero-filled store with the shapes required by `spec`.
    pub fn zeros_for(spec: &ModelSpec) -> Self {
        let slots = spec
            .layers
            .iter()
            .map(|l| {
                l.param_shapes().map(|(w, b)| LayerParams {
                    weight: Tensor::zeros(&w),
                    bias: Tensor::zeros(&b),
                })
            })
            .collect();
        ParameterStore { slots }
    }

    pub fn zeros_like(&self) -> Self {
        let slots = self
            .slots
            .iter()
            .map(|s| {
                s.as_ref().map(|p| LayerParams {
                    weight: Tensor::zeros(p.weight.shape()),
                    bias: Tensor::zeros(p.bias.shape()),
                })
            })
            .collect();
        ParameterStore { slots }
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn layer(&self, index: usize) -> Option<&LayerParams> {
        self.slots.get(index).and_then(Option::as_ref)
    }

    pub fn layer_mut(&mut self, index: usize) -> Option<&mut LayerParams> {
        self.slots.get_mut(index).and_then(Option::as_mut)
    }

    pub fn total_count(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// Parameter arrays in canonical order, each weight before its bias.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.slots
            .iter()
            .flatten()
            .flat_map(|p| [&p.weight, &p.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.slots
            .iter_mut()
            .flatten()
            .flat_map(|p| [&mut p.weight, &mut p.bias])
    }

    /// `(name, tensor)` pairs, named `layer<i>.weight` / `layer<i>.bias`.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, slot) in self.slots.iter().enumerate() {
            if let Some(p) = slot {
                out.push((format!("layer{i}.weight"), &p.weight));
                out.push((format!("layer{i}.bias"), &p.bias));
            }
        }
        out
    }

    /// Equality on the bit patterns of every value.
    pub fn bitwise_eq(&self, other: &ParameterStore) -> bool {
        self.slots.len() == other.slots.len()
            && self.tensors().count() == other.tensors().count()
            && self.tensors().zip(other.tensors()).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Checks that the store holds exactly the arrays `spec` needs.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        if self.slots.len() != spec.layers.len() {
            return Err(shape(format!(
                "parameter store has {} slots, model has {} layers",
                self.slots.len(),
                spec.layers.len()
            )));
        }
        for (i, (slot, layer)) in self.slots.iter().zip(&spec.layers).enumerate() {
            match (slot, layer.param_shapes()) {
                (None, None) => {}
                (Some(p), Some((w, b))) if p.weight.shape() == w && p.bias.shape() == b => {}
                _ => {
                    return Err(shape(format!(
                        "parameters for layer {i} ({}) do not match its shape",
                        layer.kind()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Everything the forward pass produced. `activations[0]` is the input and
/// `activations[i + 1]` the output of layer `i`; the last entry holds the
/// head logits.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub activations: Vec<Tensor>,
    pub dropout_masks: Vec<Option<Tensor>>,
    pub probabilities: Tensor,
}

impl ForwardPass {
    pub fn logits(&self) -> &Tensor {
        self.activations.last().expect("forward pass has activations")
    }

    /// Output of layer `index`.
    pub fn layer_output(&self, index: usize) -> Option<&Tensor> {
        self.activations.get(index + 1)
    }
}

/// Result of back-propagation. `activations[i]` is the gradient with
/// respect to `ForwardPass::activations[i]`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: ParameterStore,
    pub activations: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParameterStore,
}

impl Model {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Model> {
        spec.validate()?;
        let mut slots = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            slots.push(match (layer.param_shapes(), layer.fans()) {
                (Some((w, b)), Some((fan_in, fan_out))) => Some(LayerParams {
                    weight: glorot_uniform(fan_in, fan_out, &w, rng)?,
                    bias: Tensor::zeros(&b),
                }),
                _ => None,
            });
        }
        Ok(Model {
            spec,
            params: ParameterStore::new(slots),
        })
    }

    pub fn from_parts(spec: ModelSpec, params: ParameterStore) -> Result<Model> {
        spec.validate()?;
        params.check_against(&spec)?;
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelSpec, ParameterStore) {
        (self.spec, self.params)
    }

    pub fn layout(&self) -> GroupLayout {
        self.spec.layout()
    }

    fn slot(&self, i: usize) -> Result<&LayerParams> {
        self.params
            .layer(i)
            .ok_or_else(|| Error::InvalidState(format!("layer {i} has no parameters")))
    }

    /// Runs the network on a batch. Dropout is active only when `training`
    /// carries a random source.
    pub fn forward(
        &self,
        input: &Tensor,
        mut training: Option<&mut dyn RngCore>,
    ) -> Result<ForwardPass> {
        if input.shape().get(1..) != Some(self.spec.input_shape.as_slice()) {
            return Err(shape(format!(
                "model expects per-sample shape {:?}, got batch {:?}",
                self.spec.input_shape,
                input.shape()
            )));
        }
        let mut activations = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.spec.layers.len());
        activations.push(input.clone());
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = &activations[i];
            let mut mask = None;
            let y = match layer {
                Layer::Conv2d {
                    stride, padding, ..
                } => {
                    let p = self.slot(i)?;
                    let geom = ConvGeometry {
                        stride: *stride,
                        padding: *padding,
                    };
                    layers::conv2d_forward(x, &p.weight, &p.bias, geom)?
                }
                Layer::Relu => layers::relu_forward(x),
                Layer::GlobalAvgPool => layers::gap_forward(x)?,
                Layer::Dense { .. } | Layer::Head { .. } => {
                    let p = self.slot(i)?;
                    layers::dense_forward(x, &p.weight, &p.bias)?
                }
                Layer::Dropout { rate } => match training.as_deref_mut() {
                    Some(rng) => {
                        let (y, m) = layers::dropout_forward(x, *rate, rng, true)?;
                        mask = Some(m);
                        y
                    }
                    None => x.clone(),
                },
            };
            masks.push(mask);
            activations.push(y);
        }
        let probabilities = layers::softmax(activations.last().expect("non-empty"))?;
        Ok(ForwardPass {
            activations,
            dropout_masks: masks,
            probabilities,
        })
    }

    /// Inference-mode class probabilities, `[B, k + m]`.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward(input, None)?.probabilities)
    }

    /// Back-propagates a gradient with respect to the head logits.
    pub fn backward(&self, pass: &ForwardPass, logit_grad: &Tensor) -> Result<Gradients> {
        if logit_grad.shape() != pass.logits().shape() {
            return Err(shape(format!(
                "logit gradient {:?} vs logits {:?}",
                logit_grad.shape(),
                pass.logits().shape()
            )));
        }
        let n = self.spec.layers.len();
        let mut params = self.params.zeros_like();
        let mut act_grads: Vec<Tensor> = Vec::with_capacity(n + 1);
        act_grads.push(logit_grad.clone());
        for i in (0..n).rev() {
            let upstream = act_grads.last().expect("non-empty");
            let x = &pass.activations[i];
            let grad_in = match &self.spec.layers[i] {
                Layer::Conv2d {
                    stride, padding, ..
                } => {
                    let p = self.slot(i)?;
                    let geom = ConvGeometry {
                        stride: *stride,
                        padding: *padding,
                    };
                    let g = layers::conv2d_backward(x, &p.weight, upstream, geom)?;
                    let slot = params.layer_mut(i).expect("trainable slot");
                    slot.weight = g.weight;
                    slot.bias = g.bias;
                    g.input
                }
                Layer::Dense { .. } | Layer::Head { .. } => {
                    let p = self.slot(i)?;
                    let g = layers::dense_backward(x, &p.weight, upstream)?;
                    let slot = params.layer_mut(i).expect("trainable slot");
                    slot.weight = g.weight;
                    slot.bias = g.bias;
                    g.input
                }
                Layer::Relu => layers::relu_backward(x, upstream)?,
                Layer::GlobalAvgPool => layers::gap_backward(x.shape(), upstream)?,
                Layer::Dropout { rate } => match &pass.dropout_masks[i] {
                    Some(mask) => layers::dropout_backward(mask, *rate, upstream)?,
                    None => upstream.clone(),
                },
            };
            act_grads.push(grad_in);
        }
        act_grads.reverse();
        Ok(Gradients {
            params,
            activations: act_grads,
        })
    }

    /// Widens the head from `k` to `k + m` outputs. The existing `k` output
    /// columns and biases are kept bit for bit; the new columns are Glorot
    /// initialised and the new biases are zero.
    pub fn extend_multi_group<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Model> {
        if m < 1 {
            return Err(invalid("auxiliary class count must be at least 1"));
        }
        let head = self.spec.head_index();
        let Layer::Head {
            inputs,
            target,
            auxiliary,
        } = self.spec.layers[head]
        else {
            unreachable!("validated spec ends with a head");
        };
        if auxiliary != 0 {
            return Err(Error::InvalidState(format!(
                "head already has {auxiliary} auxiliary outputs"
            )));
        }
        let k = target;
        let n = k + m;
        let old = self.slot(head)?;
        let fresh = glorot_uniform(inputs, n, &[inputs, m], rng)?;
        let mut weight = Tensor::zeros(&[inputs, n]);
        for r in 0..inputs {
            let dst = weight.row_mut(r);
            dst[..k].copy_from_slice(old.weight.row(r));
            dst[k..].copy_from_slice(fresh.row(r));
        }
        let mut bias = Tensor::zeros(&[n]);
        bias.data_mut()[..k].copy_from_slice(old.bias.data());

        let mut spec = self.spec.clone();
        spec.layers[head] = Layer::Head {
            inputs,
            target: k,
            auxiliary: m,
        };
        let mut params = self.params.clone();
        *params.layer_mut(head).expect("head slot") = LayerParams { weight, bias };
        Model::from_parts(spec, params)
    }

    /// Drops the auxiliary outputs and their parameters, leaving a `k`-way head.
    pub fn strip_auxiliary_head(&self) -> Result<Model> {
        let head = self.spec.head_index();
        let Layer::Head {
            inputs,
            target,
            auxiliary,
        } = self.spec.layers[head]
        else {
            unreachable!("validated spec ends with a head");
        };
        if auxiliary == 0 {
            return Err(Error::InvalidState(
                "model has no auxiliary outputs to strip".into(),
            ));
        }
        let old = self.slot(head)?;
        let mut weight = Tensor::zeros(&[inputs, target]);
        for r in 0..inputs {
            weight
                .row_mut(r)
                .copy_from_slice(&old.weight.row(r)[..target]);
        }
        let bias = Tensor::new(vec![target], old.bias.data()[..target].to_vec())?;
        let mut spec = self.spec.clone();
        spec.layers[head] = Layer::Head {
            inputs,
            target,
            auxiliary: 0,
        };
        let mut params = self.params.clone();
        *params.layer_mut(head).expect("head slot") = LayerParams { weight, bias };
        Model::from_parts(spec, params)
    }
}
