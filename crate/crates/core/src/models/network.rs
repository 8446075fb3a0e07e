use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{init_uniform, quat_conv, quat_linear};
use super::spec::{ConvItem, Field, ModelSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// One named parameter tensor of a [`Network`].
#[derive(Clone, Debug)]
pub struct Param<T> {
    /// `<layer>.<tensor>`, e.g. `conv1.w_r` or `fc3.bias`.
    pub name: String,
    pub layer: usize,
    pub role: ParamRole,
    /// Belongs to a convolutional layer.
    pub conv: bool,
    pub value: Tensor<T>,
}

impl<T> Param<T> {
    /// Weights are pruned; biases are exempt.
    pub fn prunable(&self) -> bool {
        self.role == ParamRole::Weight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Linear { weight: usize, bias: usize },
    QuatLinear { parts: [usize; 4], bias: usize },
    Conv { weight: usize, bias: usize },
    QuatConv { parts: [usize; 4], bias: usize },
    Relu,
    MaxPool,
    Flatten,
}

/// Which registry entries to count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamFilter {
    All,
    /// Weights only (the pruning pool).
    Prunable,
    /// Weights of convolutional layers.
    ConvWeights,
}

/// Layer stack plus a parameter registry in a fixed global order: layer
/// order, then tensor name, then flat offset within the tensor.
#[derive(Clone, Debug)]
pub struct Network<T> {
    pub spec: ModelSpec,
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<Param<T>>,
    layer_names: Vec<String>,
}

impl<T: Scalar> Network<T> {
    /// An empty network taking per-example inputs of `input_shape`.
    pub fn new(spec: ModelSpec, input_shape: Vec<usize>) -> Self {
        Network {
            spec,
            input_shape,
            layers: Vec::new(),
            params: Vec::new(),
            layer_names: Vec::new(),
        }
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_name(&self, layer: usize) -> &str {
        &self.layer_names[layer]
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn count(&self, filter: ParamFilter) -> usize {
        self.params
            .iter()
            .filter(|p| match filter {
                ParamFilter::All => true,
                ParamFilter::Prunable => p.prunable(),
                ParamFilter::ConvWeights => p.prunable() && p.conv,
            })
            .map(|p| p.value.numel())
            .sum()
    }

    fn add_param(&mut self, layer: usize, tensor: &str, role: ParamRole, conv: bool, value: Tensor<T>) -> usize {
        self.params.push(Param {
            name: format!("{}.{}", self.layer_names[layer], tensor),
            layer,
            role,
            conv,
            value,
        });
        self.params.len() - 1
    }

    fn open_layer(&mut self, name: String) -> usize {
        self.layer_names.push(name);
        self.layer_names.len() - 1
    }

    fn push_layer(&mut self, layer: Layer) {
        if self.layer_names.len() == self.layers.len() {
            let name = match layer {
                Layer::Relu => "relu",
                Layer::MaxPool => "pool",
                Layer::Flatten => "flatten",
                _ => "layer",
            };
            self.layer_names.push(format!("{}{}", name, self.layers.len()));
        }
        self.layers.push(layer);
    }

    /// Appends a dense layer `[n, fan_in] -> [n, fan_out]`.
    pub fn push_linear(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
        let l = self.open_layer(name.into());
        let bias = self.add_param(l, "bias", ParamRole::Bias, false, init_uniform(rng, &[fan_out], fan_in));
        let weight = self.add_param(
            l,
            "weight",
            ParamRole::Weight,
            false,
            init_uniform(rng, &[fan_out, fan_in], fan_in),
        );
        self.layers.push(Layer::Linear { weight, bias });
    }

    pub fn push_quat_linear(&mut self, name: &str, in_q: usize, out_q: usize, rng: &mut ChaCha8Rng) {
        let l = self.open_layer(name.into());
        let fan_in = 4 * in_q;
        let bias = self.add_param(l, "bias", ParamRole::Bias, false, init_uniform(rng, &[4 * out_q], fan_in));
        let parts = ["w_r", "w_x", "w_y", "w_z"].map(|n| {
            self.add_param(
                l,
                n,
                ParamRole::Weight,
                false,
                init_uniform(rng, &[out_q, in_q], fan_in),
            )
        });
        self.layers.push(Layer::QuatLinear { parts, bias });
    }

    pub fn push_conv(&mut self, name: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) {
        let l = self.open_layer(name.into());
        let fan_in = c_in * 9;
        let bias = self.add_param(l, "bias", ParamRole::Bias, true, init_uniform(rng, &[c_out], fan_in));
        let weight = self.add_param(
            l,
            "weight",
            ParamRole::Weight,
            true,
            init_uniform(rng, &[c_out, c_in, 3, 3], fan_in),
        );
        self.layers.push(Layer::Conv { weight, bias });
    }

    pub fn push_quat_conv(&mut self, name: &str, in_q: usize, out_q: usize, rng: &mut ChaCha8Rng) {
        let l = self.open_layer(name.into());
        let fan_in = 4 * in_q * 9;
        let bias = self.add_param(l, "bias", ParamRole::Bias, true, init_uniform(rng, &[4 * out_q], fan_in));
        let parts = ["w_r", "w_x", "w_y", "w_z"].map(|n| {
            self.add_param(
                l,
                n,
                ParamRole::Weight,
                true,
                init_uniform(rng, &[out_q, in_q, 3, 3], fan_in),
            )
        });
        self.layers.push(Layer::QuatConv { parts, bias });
    }

    pub fn push_relu(&mut self) {
        self.push_layer(Layer::Relu);
    }

    pub fn push_maxpool(&mut self) {
        self.push_layer(Layer::MaxPool);
    }

    pub fn push_flatten(&mut self) {
        self.push_layer(Layer::Flatten);
    }

    /// Places every parameter on `tape` as a leaf, in registry order.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable))
            .collect()
    }

    /// Records the forward pass of input `x: [n, input_shape...]`; returns
    /// logits `[n, classes]`.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, vars: &[Var]) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::State(format!(
                "network has {} parameters but {} were bound",
                self.params.len(),
                vars.len()
            )));
        }
        let shape = tape.value(x)?.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(Error::dim(format!(
                "network `{}` takes [n, {:?}], got {:?}",
                self.spec.name, self.input_shape, shape
            )));
        }
        let mut h = x;
        for layer in &self.layers {
            h = match layer {
                Layer::Linear { weight, bias } => {
                    let y = tape.linear(h, vars[*weight])?;
                    tape.bias_add(y, vars[*bias])?
                }
                Layer::QuatLinear { parts, bias } => {
                    quat_linear(tape, h, parts.map(|p| vars[p]), vars[*bias])?
                }
                Layer::Conv { weight, bias } => {
                    let y = tape.conv2d(h, vars[*weight])?;
                    tape.bias_add(y, vars[*bias])?
                }
                Layer::QuatConv { parts, bias } => {
                    quat_conv(tape, h, parts.map(|p| vars[p]), vars[*bias])?
                }
                Layer::Relu => tape.relu(h)?,
                Layer::MaxPool => tape.maxpool2d(h)?,
                Layer::Flatten => tape.flatten(h)?,
            };
        }
        Ok(h)
    }

    /// Logits for a batch, without recording gradients.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::inference();
        let vars = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, xv, &vars)?;
        Ok(tape.value(y)?.clone())
    }
}

/// Per-example input extents the network expects for a spec.
pub fn input_shape(spec: &ModelSpec) -> Vec<usize> {
    let [c, h, w] = spec.dataset.image_dims();
    if spec.is_convolutional() {
        let channels = match spec.field {
            Field::Real => c,
            // RGB plus a grayscale channel forms one quaternion per pixel.
            Field::Quaternion => 4,
        };
        vec![channels, h, w]
    } else {
        vec![c * h * w]
    }
}

/// Builds and initializes the network for `spec` from `seed`.
pub fn build_network<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Network<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = input_shape(spec);
    let mut net = Network::new(spec.clone(), shape.clone());
    let quat = spec.field == Field::Quaternion;

    let mut features = if spec.is_convolutional() {
        let (mut channels, mut side_h, mut side_w) = (shape[0], shape[1], shape[2]);
        let mut conv_idx = 0;
        for item in &spec.conv_plan {
            match *item {
                ConvItem::Conv(width) => {
                    conv_idx += 1;
                    let name = format!("conv{conv_idx}");
                    if quat {
                        net.push_quat_conv(&name, channels / 4, width / 4, &mut rng);
                    } else {
                        net.push_conv(&name, channels, width, &mut rng);
                    }
                    net.push_relu();
                    channels = width;
                }
                ConvItem::Pool => {
                    if side_h % 2 != 0 || side_w % 2 != 0 {
                        return Err(Error::Config(format!(
                            "model `{}` pools an odd {}x{} map",
                            spec.name, side_h, side_w
                        )));
                    }
                    net.push_maxpool();
                    side_h /= 2;
                    side_w /= 2;
                }
            }
        }
        net.push_flatten();
        channels * side_h * side_w
    } else {
        shape[0]
    };

    if quat && features % 4 != 0 {
        return Err(Error::Config(format!(
            "quaternion model `{}` has {} input features, not divisible by 4",
            spec.name, features
        )));
    }
    for (i, &width) in spec.fc_plan.iter().enumerate() {
        let name = format!("fc{}", i + 1);
        if quat {
            net.push_quat_linear(&name, features / 4, width / 4, &mut rng);
        } else {
            net.push_linear(&name, features, width, &mut rng);
        }
        net.push_relu();
        features = width;
    }
    // The classifier head is real for both fields.
    net.push_linear(&format!("fc{}", spec.fc_plan.len() + 1), features, spec.classes, &mut rng);
    Ok(net)
}

/// Total parameter count, with or without biases.
pub fn count_parameters<T: Scalar>(net: &Network<T>, include_biases: bool) -> usize {
    if include_biases {
        net.count(ParamFilter::All)
    } else {
        net.count(ParamFilter::Prunable)
    }
}
