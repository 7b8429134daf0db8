use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: &Matrix) -> Matrix {
        match self {
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::Tanh => z.map(f64::tanh),
            Activation::Identity => z.clone(),
        }
    }

    /// Derivative expressed through the activation output.
    pub(crate) fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub input: usize,
    pub output: usize,
    pub activation: Activation,
}

/// Dense network layout. The last layer produces the logits of the softmax
/// classifier, so its width is the number of classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.input == 0 || l.output == 0 {
                return Err(Error::InvalidSpec(format!("layer {i} has a zero width")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output != pair[1].input {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].output,
                    i + 1,
                    pair[1].input
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Hidden layers of the given widths followed by an identity-activated
    /// classifier layer.
    pub fn mlp(input: usize, hidden: &[(usize, Activation)], classes: usize) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = input;
        for &(w, activation) in hidden {
            layers.push(LayerSpec {
                input: width,
                output: w,
                activation,
            });
            width = w;
        }
        layers.push(LayerSpec {
            input: width,
            output: classes,
            activation: Activation::Identity,
        });
        Self::new(layers)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input
    }

    /// Width of the softmax head.
    pub fn output_head(&self) -> usize {
        self.layers[self.layers.len() - 1].output
    }

    pub fn check_layer(&self, index: usize) -> Result<()> {
        if index >= self.layers.len() {
            return Err(Error::LayerOutOfRange {
                index,
                layers: self.layers.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamKind {
    Weights,
    Bias,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamKey {
    pub layer: usize,
    pub kind: ParamKind,
}

/// Weights are stored `input × output` so a layer computes `X·W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Matrix,
}

impl Layer {
    pub fn param(&self, kind: ParamKind) -> &Matrix {
        match kind {
            ParamKind::Weights => &self.weights,
            ParamKind::Bias => &self.bias,
        }
    }

    pub fn param_mut(&mut self, kind: ParamKind) -> &mut Matrix {
        match kind {
            ParamKind::Weights => &mut self.weights,
            ParamKind::Bias => &mut self.bias,
        }
    }
}

/// Parameters are held in `f64` but always carry `f32`-representable values:
/// initialization and every optimizer step round through `f32`, so a model
/// written to disk reads back bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

pub(crate) fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Seeded initialization: He-uniform for relu layers, Xavier-uniform
/// otherwise, zero biases.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .layers()
        .iter()
        .map(|l| {
            let limit = match l.activation {
                Activation::Relu => (6.0 / l.input as f64).sqrt(),
                Activation::Tanh | Activation::Identity => (6.0 / (l.input + l.output) as f64).sqrt(),
            };
            let data = (0..l.input * l.output)
                .map(|_| round_f32(rng.gen_range(-limit..limit)))
                .collect();
            Layer {
                weights: Matrix::from_raw(l.input, l.output, data),
                bias: Matrix::zeros(1, l.output),
            }
        })
        .collect();
    Model {
        spec: spec.clone(),
        layers,
    }
}

/// Activations of every layer for one batch, plus the tape nodes that
/// produced them when the pass was recorded.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    pub activations: Vec<Matrix>,
    pub nodes: Vec<NodeId>,
}

impl ForwardRecord {
    pub fn logits(&self) -> &Matrix {
        self.activations.last().expect("networks have at least one layer")
    }

    pub fn logits_node(&self) -> Option<NodeId> {
        self.nodes.last().copied()
    }

    pub fn node(&self, layer: usize) -> Option<NodeId> {
        self.nodes.get(layer).copied()
    }
}

pub(crate) fn add_bias(z: &mut Matrix, bias: &Matrix) {
    let cols = z.cols();
    let b = bias.as_slice();
    for row in z.as_mut_slice().chunks_mut(cols) {
        for (v, bv) in row.iter_mut().zip(b) {
            *v += bv;
        }
    }
}

impl Model {
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != spec.depth() {
            return Err(Error::InvalidSpec(format!(
                "{} parameter layers for a {}-layer spec",
                layers.len(),
                spec.depth()
            )));
        }
        for (i, (l, s)) in layers.iter().zip(spec.layers()).enumerate() {
            if l.weights.shape() != (s.input, s.output) || l.bias.shape() != (1, s.output) {
                return Err(Error::InvalidSpec(format!(
                    "layer {i} parameter shapes do not match spec"
                )));
            }
            if !l.weights.is_finite() || !l.bias.is_finite() {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer {
        &mut self.layers[index]
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.as_slice().len())
            .sum()
    }

    /// Parameter tensors in canonical order: for each layer, weights then bias.
    pub fn param_keys(&self) -> impl Iterator<Item = ParamKey> + '_ {
        (0..self.layers.len()).flat_map(|layer| {
            [ParamKind::Weights, ParamKind::Bias]
                .into_iter()
                .map(move |kind| ParamKey { layer, kind })
        })
    }

    pub fn param(&self, key: ParamKey) -> &Matrix {
        self.layers[key.layer].param(key.kind)
    }

    pub fn param_mut(&mut self, key: ParamKey) -> &mut Matrix {
        self.layers[key.layer].param_mut(key.kind)
    }

    fn locate(&self, mut index: usize) -> (ParamKey, usize) {
        for key in self.param_keys() {
            let len = self.param(key).as_slice().len();
            if index < len {
                return (key, index);
            }
            index -= len;
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access in canonical order.
    pub fn get_flat(&self, index: usize) -> f64 {
        let (key, i) = self.locate(index);
        self.param(key).as_slice()[i]
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        let (key, i) = self.locate(index);
        self.param_mut(key).as_mut_slice()[i] = value;
    }

    /// Runs the network on a batch. With a tape, every parameter and
    /// intermediate is recorded and the record carries the node ids.
    pub fn forward(&self, batch: &Matrix, tape: Option<&mut Tape>) -> Result<ForwardRecord> {
        if batch.cols() != self.spec.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, network expects {}",
                batch.cols(),
                self.spec.input_width()
            )));
        }
        match tape {
            Some(tape) => self.forward_taped(batch, tape),
            None => self.forward_plain(batch),
        }
    }

    fn forward_plain(&self, batch: &Matrix) -> Result<ForwardRecord> {
        let mut activations: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for (i, (layer, spec)) in self.layers.iter().zip(self.spec.layers()).enumerate() {
            let input = activations.last().unwrap_or(batch);
            let mut z = input.matmul(&layer.weights)?;
            add_bias(&mut z, &layer.bias);
            let a = spec.activation.apply(&z);
            if !a.is_finite() {
                return Err(Error::NonFiniteActivation(i));
            }
            activations.push(a);
        }
        Ok(ForwardRecord {
            activations,
            nodes: Vec::new(),
        })
    }

    fn forward_taped(&self, batch: &Matrix, tape: &mut Tape) -> Result<ForwardRecord> {
        let mut x = tape.constant(batch.clone());
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut nodes = Vec::with_capacity(self.layers.len());
        for (i, (layer, spec)) in self.layers.iter().zip(self.spec.layers()).enumerate() {
            let w = tape.param(
                layer.weights.clone(),
                ParamKey {
                    layer: i,
                    kind: ParamKind::Weights,
                },
            );
            let b = tape.param(
                layer.bias.clone(),
                ParamKey {
                    layer: i,
                    kind: ParamKind::Bias,
                },
            );
            let z = tape.matmul(x, w)?;
            let z = tape.add_bias(z, b)?;
            let a = tape.activation(z, spec.activation);
            if !tape.value(a).is_finite() {
                return Err(Error::NonFiniteActivation(i));
            }
            activations.push(tape.value(a).clone());
            nodes.push(a);
            x = a;
        }
        Ok(ForwardRecord { activations, nodes })
    }
}

/// Per-layer gradients, shaped like the model's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<Layer>,
}

impl ModelGrads {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: Matrix::zeros(1, l.bias.cols()),
                })
                .collect(),
        }
    }

    pub fn get(&self, key: ParamKey) -> &Matrix {
        self.layers[key.layer].param(key.kind)
    }

    pub fn get_mut(&mut self, key: ParamKey) -> &mut Matrix {
        self.layers[key.layer].param_mut(key.kind)
    }

    /// Flattened in the canonical parameter order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.as_slice().iter().chain(l.bias.as_slice()).copied())
            .collect()
    }
}
