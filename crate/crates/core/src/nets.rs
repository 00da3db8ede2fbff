//! Fully connected generator and discriminator networks.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nd::{Tape, Tensor, Var};
use crate::rng::{self, Rng};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Tanh,
    Relu,
    LeakyRelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    Sigmoid,
    Tanh,
}

impl OutputActivation {
    pub fn is_bounded(self) -> bool {
        !matches!(self, OutputActivation::Linear)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub init_scale: f64,
}

impl NetworkSpec {
    /// Ring-task generator: `z_dim → 128 → 128 → 2`, tanh hidden, linear output.
    pub fn ring_generator(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![128, 128],
            output_dim,
            hidden_activation: HiddenActivation::Tanh,
            output_activation: OutputActivation::Linear,
            init_scale: 1.0,
        }
    }

    /// Ring-task discriminator: `input → 128 → 128 → 1`, ReLU hidden, logit output.
    pub fn ring_discriminator(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![128, 128],
            output_dim: 1,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Linear,
            init_scale: std::f64::consts::SQRT_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("network dims must be >= 1: {self:?}")));
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return Err(Error::Config(format!("init_scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Expected shapes of the flattened parameter list `[w0, b0, w1, b1, ...]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layer_dims()
            .into_iter()
            .flat_map(|(i, o)| [vec![i, o], vec![o]])
            .collect()
    }
}

/// Weights and biases of one MLP, stored flat as `[w0, b0, w1, b1, ...]`.
///
/// Weight `l` has shape `[fan_in, fan_out]`, so a batch `[n, fan_in]`
/// multiplies from the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub tensors: Vec<Tensor>,
}

impl NetworkParams {
    pub fn from_tensors(spec: NetworkSpec, tensors: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != tensors.len() {
            return Err(Error::shape("network params", &[shapes.len()], &[tensors.len()]));
        }
        for (want, t) in shapes.iter().zip(&tensors) {
            if want.as_slice() != t.shape() {
                return Err(Error::shape("network params", want, t.shape()));
            }
            t.ensure_finite("network params")?;
        }
        Ok(Self { spec, tensors })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let tensors = spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
        Ok(Self { spec, tensors })
    }

    pub fn num_layers(&self) -> usize {
        self.tensors.len() / 2
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        &self.tensors[2 * layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Tensor {
        &mut self.tensors[2 * layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        &self.tensors[2 * layer + 1]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Records the parameters on `tape`, as variables when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BoundNetwork<'t, '_> {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.var(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundNetwork { spec: &self.spec, vars }
    }
}

/// Network parameters recorded on a tape.
pub struct BoundNetwork<'t, 'p> {
    spec: &'p NetworkSpec,
    pub vars: Vec<Var<'t>>,
}

impl<'t, 'p> BoundNetwork<'t, 'p> {
    /// Wraps variables already on a tape, in `param_shapes` order.
    pub fn from_vars(spec: &'p NetworkSpec, vars: Vec<Var<'t>>) -> Self {
        Self { spec, vars }
    }

    /// Returns the output and the post-activation hidden layers, input to output.
    pub fn forward(&self, input: Var<'t>) -> Result<(Var<'t>, Vec<Var<'t>>)> {
        let shape = input.shape();
        if shape.len() != 2 || shape[1] != self.spec.input_dim {
            return Err(Error::shape("mlp_forward", &shape, &[0, self.spec.input_dim]));
        }
        let n_layers = self.vars.len() / 2;
        let mut h = input;
        let mut hidden = Vec::with_capacity(n_layers.saturating_sub(1));
        for l in 0..n_layers {
            let pre = h.matmul(self.vars[2 * l])?.add_bias(self.vars[2 * l + 1])?;
            if l + 1 < n_layers {
                h = match self.spec.hidden_activation {
                    HiddenActivation::Tanh => pre.tanh(),
                    HiddenActivation::Relu => pre.relu(),
                    HiddenActivation::LeakyRelu => pre.leaky_relu(LEAKY_SLOPE),
                };
                hidden.push(h);
            } else {
                h = match self.spec.output_activation {
                    OutputActivation::Linear => pre,
                    OutputActivation::Sigmoid => pre.sigmoid(),
                    OutputActivation::Tanh => pre.tanh(),
                };
            }
        }
        Ok((h, hidden))
    }
}

/// Scaled-Gaussian initialisation: `w ~ N(0, init_scale² / fan_in)`, zero biases.
pub fn mlp_init(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    mlp_init_with(spec, &mut rng::seeded(seed))
}

pub fn mlp_init_with(spec: &NetworkSpec, rng: &mut Rng) -> Result<NetworkParams> {
    spec.validate()?;
    let mut tensors = Vec::new();
    for (fan_in, fan_out) in spec.layer_dims() {
        let std = spec.init_scale / (fan_in as f64).sqrt();
        tensors.push(Tensor::from_fn(&[fan_in, fan_out], |_| {
            std * rng.sample::<f64, _>(StandardNormal)
        }));
        tensors.push(Tensor::zeros(&[fan_out]));
    }
    Ok(NetworkParams {
        spec: spec.clone(),
        tensors,
    })
}

/// Batch generator input: optional condition rows concatenated in front of the latent rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorInput {
    pub condition: Option<Tensor>,
    pub latent: Tensor,
}

impl GeneratorInput {
    pub fn unconditional(latent: Tensor) -> Self {
        Self {
            condition: None,
            latent,
        }
    }

    pub fn to_matrix(&self) -> Result<Tensor> {
        join_condition(self.condition.as_ref(), &self.latent)
    }
}

pub(crate) fn join_condition(condition: Option<&Tensor>, rest: &Tensor) -> Result<Tensor> {
    match condition {
        Some(c) => c.concat_cols(rest),
        None => Ok(rest.clone()),
    }
}

/// Records `concat(condition, rest)` with the condition held constant.
pub(crate) fn join_condition_var<'t>(tape: &'t Tape, condition: Option<&Tensor>, rest: Var<'t>) -> Result<Var<'t>> {
    match condition {
        Some(c) => tape.constant(c.clone()).concat_cols(rest),
        None => Ok(rest),
    }
}

/// `G(x, z)` for a batch; returns `[n, output_dim]`.
pub fn generator_forward(params: &NetworkParams, input: &GeneratorInput) -> Result<Tensor> {
    let tape = Tape::new();
    let x = tape.constant(input.to_matrix()?);
    let (out, _) = params.bind(&tape, false).forward(x)?;
    Ok(out.value())
}

/// Discriminator logits `[n]` (pre-sigmoid) and hidden features for a batch.
pub fn discriminator_forward(
    params: &NetworkParams,
    condition: Option<&Tensor>,
    y: &Tensor,
) -> Result<(Tensor, Vec<Tensor>)> {
    let tape = Tape::new();
    let input = tape.constant(join_condition(condition, y)?);
    let (out, hidden) = params.bind(&tape, false).forward(input)?;
    let n = out.shape()[0];
    let logits = out.value().reshape(vec![n])?;
    Ok((logits, hidden.iter().map(Var::value).collect()))
}
