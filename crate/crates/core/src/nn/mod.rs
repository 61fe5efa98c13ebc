//! Dense feed-forward regressor.
//!
//! Hidden layers apply ReLU, the output layer is linear with width 1. The
//! training objective for one example is `(prediction - target)^2` plus
//! `lambda * sum(W^2)` over every weight entry (biases are not penalized).
//! Everything runs in `f64`.

mod adam;
mod checkpoint;
mod gradcheck;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, TrainedModel};
pub use gradcheck::{grad_check, grad_check_with};
pub use train::{predict, train, EpochLoss, TrainingHistory};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Hidden widths of the default five-layer architecture (four ReLU layers
/// and the linear output).
pub const DEFAULT_HIDDEN: [usize; 4] = [256, 128, 64, 32];

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("bad architecture {0:?}: need at least two positive sizes ending in 1")]
    BadArchitecture(Vec<usize>),
    #[error("input has {found} values, network expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("trace does not match the network layout")]
    TraceMismatch,
    #[error("parameter and gradient shapes disagree")]
    ShapeMismatch,
    #[error("no training rows")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid hyperparameter {0}")]
    BadHyperParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// `outputs x inputs` weights stored row-major, plus one bias per output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.inputs..(i + 1) * self.inputs]
    }

    fn pre_activation_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.weight_row(i), x) + self.bias[i];
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn activate(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => z.max(0.0),
        Activation::Identity => z,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<DenseLayer>,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    pub prediction: f64,
}

impl ForwardTrace {
    fn for_network(net: &Network) -> Self {
        Self {
            inputs: net.layers.iter().map(|l| vec![0.0; l.inputs]).collect(),
            pre_activations: net.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            activations: net.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
            prediction: 0.0,
        }
    }

    fn matches(&self, net: &Network) -> bool {
        self.inputs.len() == net.layers.len()
            && net.layers.iter().enumerate().all(|(k, l)| {
                self.inputs[k].len() == l.inputs
                    && self.pre_activations[k].len() == l.outputs
                    && self.activations[k].len() == l.outputs
            })
    }
}

/// Gradients laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    /// Flat blocks in parameter order: weights then bias, layer by layer.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }
}

/// Validates `sizes` and builds a network with ReLU on every layer except the
/// last. Weights are uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` from a
/// ChaCha8 stream seeded with `seed`; biases start at zero.
pub fn init_network(sizes: &[usize], seed: u64) -> Result<Network, NnError> {
    if sizes.len() < 2 || sizes.contains(&0) || sizes.last() != Some(&1) {
        return Err(NnError::BadArchitecture(sizes.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = sizes.len() - 2;
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(k, pair)| {
            let (inputs, outputs) = (pair[0], pair[1]);
            let bound = 1.0 / (inputs as f64).sqrt();
            DenseLayer {
                inputs,
                outputs,
                weights: (0..inputs * outputs).map(|_| rng.gen_range(-bound..=bound)).collect(),
                bias: vec![0.0; outputs],
                activation: if k == last { Activation::Identity } else { Activation::Relu },
            }
        })
        .collect();
    Ok(Network { layers })
}

impl Network {
    /// Input width first, 1 last.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_square_sum(&self) -> f64 {
        self.layers.iter().flat_map(|l| &l.weights).map(|w| w * w).sum()
    }

    /// Mutable parameter blocks in [`Gradients::blocks`] order.
    pub fn parameter_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace, NnError> {
        let mut trace = ForwardTrace::for_network(self);
        self.forward_into(x, &mut trace)?;
        Ok(trace)
    }

    /// Forward pass reusing the buffers of `trace`.
    pub fn forward_into(&self, x: &[f64], trace: &mut ForwardTrace) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if !trace.matches(self) {
            *trace = ForwardTrace::for_network(self);
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if k == 0 {
                trace.inputs[0].copy_from_slice(x);
            } else {
                trace.inputs[k].copy_from_slice(&trace.activations[k - 1]);
            }
            layer.pre_activation_into(&trace.inputs[k], &mut trace.pre_activations[k]);
            for (a, &z) in trace.activations[k].iter_mut().zip(&trace.pre_activations[k]) {
                *a = activate(layer.activation, z);
            }
        }
        trace.prediction = trace.activations.last().map_or(0.0, |a| a[0]);
        Ok(())
    }

    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, NnError> {
        Ok(self.forward(x)?.prediction)
    }
}

/// Returns `(data_loss, regularized_loss)` for one example.
pub fn loss(prediction: f64, target: f64, net: &Network, lambda: f64) -> (f64, f64) {
    let diff = prediction - target;
    let data = diff * diff;
    (data, data + lambda * net.weight_square_sum())
}

/// Adds the data-loss gradient of one example into `grads` (no L2 term).
pub(crate) fn accumulate_data_gradients(
    net: &Network,
    trace: &ForwardTrace,
    target: f64,
    grads: &mut Gradients,
    delta: &mut Vec<f64>,
    next_delta: &mut Vec<f64>,
) {
    delta.clear();
    delta.push(2.0 * (trace.prediction - target));
    for k in (0..net.layers.len()).rev() {
        let layer = &net.layers[k];
        // delta holds dL/dz for this layer's outputs
        let g = &mut grads.layers[k];
        let input = &trace.inputs[k];
        for (i, &d) in delta.iter().enumerate() {
            g.bias[i] += d;
            if d != 0.0 {
                let row = &mut g.weights[i * layer.inputs..(i + 1) * layer.inputs];
                for (gw, &x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
        }
        if k == 0 {
            break;
        }
        next_delta.clear();
        next_delta.resize(layer.inputs, 0.0);
        for (i, &d) in delta.iter().enumerate() {
            if d != 0.0 {
                for (nd, &w) in next_delta.iter_mut().zip(layer.weight_row(i)) {
                    *nd += w * d;
                }
            }
        }
        let below = &net.layers[k - 1];
        if below.activation == Activation::Relu {
            // subgradient at exactly zero is taken as zero
            for (nd, &z) in next_delta.iter_mut().zip(&trace.pre_activations[k - 1]) {
                if z <= 0.0 {
                    *nd = 0.0;
                }
            }
        }
        std::mem::swap(delta, next_delta);
    }
}

/// Adds `2 * lambda * W` to every weight gradient.
pub(crate) fn add_l2_gradients(net: &Network, lambda: f64, grads: &mut Gradients) {
    if lambda == 0.0 {
        return;
    }
    for (l, g) in net.layers.iter().zip(&mut grads.layers) {
        for (gw, &w) in g.weights.iter_mut().zip(&l.weights) {
            *gw += 2.0 * lambda * w;
        }
    }
}

/// Exact gradient of the regularized single-example loss.
pub fn backward(net: &Network, trace: &ForwardTrace, target: f64, lambda: f64) -> Result<Gradients, NnError> {
    if !trace.matches(net) {
        return Err(NnError::TraceMismatch);
    }
    let mut grads = Gradients::zeros_like(net);
    let (mut delta, mut next) = (Vec::new(), Vec::new());
    accumulate_data_gradients(net, trace, target, &mut grads, &mut delta, &mut next);
    add_l2_gradients(net, lambda, &mut grads);
    Ok(grads)
}

/// Training settings. Defaults: Adam with eta 1e-3, beta1 0.9, beta2 0.999,
/// eps 1e-8; lambda 1e-4; batch 32; 2000 epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda: 1e-4,
            epochs: 2000,
            batch_size: 32,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), NnError> {
        let ok = |cond: bool, name| if cond { Ok(()) } else { Err(NnError::BadHyperParam(name)) };
        ok(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate")?;
        ok((0.0..1.0).contains(&self.beta1), "beta1")?;
        ok((0.0..1.0).contains(&self.beta2), "beta2")?;
        ok(self.epsilon > 0.0 && self.epsilon.is_finite(), "epsilon")?;
        ok(self.lambda >= 0.0 && self.lambda.is_finite(), "lambda")?;
        ok(self.batch_size > 0, "batch_size")?;
        Ok(())
    }
}
