use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Loss, TrainConfig, BCE_EPSILON};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => super::elu(z),
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    z.exp()
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, activation }
    }
}

/// One dense layer: `activation(x · Wᵀ + b)` with `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub input: Array2<f64>,
    /// Pre-activations per layer.
    pub pre: Vec<Array2<f64>>,
    /// Layer outputs after activation and dropout.
    pub post: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers (0 or 1/(1 − rate)) where dropout ran.
    pub masks: Vec<Option<Array2<f64>>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Array2<f64> {
        self.post.last().unwrap_or(&self.input)
    }
}

/// Gradients of the mean batch loss, shaped like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

fn check_chain(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::InvalidDims("network needs at least one layer".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::InvalidDims(format!("layer {i} has a zero dimension")));
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::InvalidDims(format!(
                "layer {i} outputs {} but layer {} expects {}",
                w[0].out_dim,
                i + 1,
                w[1].in_dim
            )));
        }
    }
    Ok(())
}

impl Network {
    /// Random initialisation: He-uniform for ELU layers, Xavier-uniform
    /// otherwise; biases start at zero.
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        check_chain(specs)?;
        let mut rng = rng::from_seed(seed);
        let layers = specs
            .iter()
            .map(|&spec| {
                let limit = match spec.activation {
                    Activation::Elu => (6.0 / spec.in_dim as f64).sqrt(),
                    _ => (6.0 / (spec.in_dim + spec.out_dim) as f64).sqrt(),
                };
                let weights =
                    Array2::from_shape_fn((spec.out_dim, spec.in_dim), |_| rng.random_range(-limit..=limit));
                Layer { spec, weights, biases: Array1::zeros(spec.out_dim) }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(specs: &[LayerSpec]) -> Result<Self> {
        check_chain(specs)?;
        Ok(Self {
            layers: specs
                .iter()
                .map(|&spec| Layer {
                    spec,
                    weights: Array2::zeros((spec.out_dim, spec.in_dim)),
                    biases: Array1::zeros(spec.out_dim),
                })
                .collect(),
        })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, batch: &Array2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: batch.ncols() });
        }
        Ok(())
    }

    fn run(&self, batch: &Array2<f64>, mut dropout: Option<(f64, &mut Rng)>) -> Result<ForwardPass> {
        self.check_input(batch)?;
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { batch } else { &post[l - 1] };
            let z = input.dot(&layer.weights.t()) + &layer.biases;
            let mut a = z.mapv(|v| layer.spec.activation.apply(v));
            let mut mask = None;
            if l != last && layer.spec.activation == Activation::Elu {
                if let Some((rate, rng)) = dropout.as_mut() {
                    if *rate > 0.0 {
                        let keep = 1.0 - *rate;
                        let scale = 1.0 / keep;
                        let m = Array2::from_shape_fn(a.dim(), |_| {
                            if rng.random::<f64>() < keep {
                                scale
                            } else {
                                0.0
                            }
                        });
                        a *= &m;
                        mask = Some(m);
                    }
                }
            }
            pre.push(z);
            post.push(a);
            masks.push(mask);
        }
        Ok(ForwardPass { input: batch.clone(), pre, post, masks })
    }

    /// Inference pass, dropout off.
    pub fn forward(&self, batch: &Array2<f64>) -> Result<ForwardPass> {
        self.run(batch, None)
    }

    /// Training pass: inverted dropout at `rate` after every hidden ELU layer.
    pub fn forward_train(&self, batch: &Array2<f64>, rate: f64, rng: &mut Rng) -> Result<ForwardPass> {
        self.run(batch, Some((rate, rng)))
    }

    /// Output-layer activations, dropout off.
    pub fn output(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in &self.layers {
            let act = layer.spec.activation;
            a = (a.dot(&layer.weights.t()) + &layer.biases).mapv(|v| act.apply(v));
        }
        Ok(a)
    }

    /// Activations after the first `n_layers` layers, dropout off.
    pub fn activations_at(&self, batch: &Array2<f64>, n_layers: usize) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let mut a = batch.clone();
        for layer in self.layers.iter().take(n_layers) {
            let act = layer.spec.activation;
            a = (a.dot(&layer.weights.t()) + &layer.biases).mapv(|v| act.apply(v));
        }
        Ok(a)
    }

    /// Exact gradients of the mean loss over every output element.
    pub fn backward(&self, pass: &ForwardPass, targets: &Array2<f64>, loss: Loss) -> Result<Gradients> {
        let output = pass.output();
        if targets.dim() != output.dim() {
            return Err(Error::DimensionMismatch { expected: output.ncols(), actual: targets.ncols() });
        }
        let last = self.layers.len() - 1;
        let out_act = self.layers[last].spec.activation;
        let count = output.len() as f64;

        let mut delta = Array2::zeros(output.dim());
        Zip::from(&mut delta)
            .and(output)
            .and(targets)
            .and(&pass.pre[last])
            .for_each(|d, &q, &y, &z| {
                *d = match loss {
                    Loss::Mse => 2.0 * (q - y) * out_act.derivative(z),
                    Loss::Bce if !(BCE_EPSILON..=1.0 - BCE_EPSILON).contains(&q) => 0.0,
                    Loss::Bce if out_act == Activation::Sigmoid => q - y,
                    Loss::Bce => (-y / q + (1.0 - y) / (1.0 - q)) * out_act.derivative(z),
                } / count;
            });

        let mut grad_w = vec![Array2::zeros((0, 0)); self.layers.len()];
        let mut grad_b = vec![Array1::zeros(0); self.layers.len()];
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { &pass.input } else { &pass.post[l - 1] };
            grad_w[l] = delta.t().dot(input);
            grad_b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut prev = delta.dot(&self.layers[l].weights);
                let act = self.layers[l - 1].spec.activation;
                Zip::from(&mut prev)
                    .and(&pass.pre[l - 1])
                    .for_each(|p, &z| *p *= act.derivative(z));
                if let Some(mask) = &pass.masks[l - 1] {
                    prev *= mask;
                }
                delta = prev;
            }
        }
        Ok(Gradients { weights: grad_w, biases: grad_b })
    }

    pub fn to_file(&self, train_config: Option<TrainConfig>, bottleneck_layer: Option<usize>) -> NetworkFile {
        NetworkFile {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_VERSION,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    in_dim: l.spec.in_dim,
                    out_dim: l.spec.out_dim,
                    activation: l.spec.activation,
                    weights: l.weights.iter().copied().collect(),
                    biases: l.biases.to_vec(),
                })
                .collect(),
            train_config,
            bottleneck_layer,
        }
    }
}

pub const NETWORK_FORMAT: &str = "opdetect-network";
pub const NETWORK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major, `out_dim` rows of `in_dim`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// JSON checkpoint of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub layers: Vec<LayerFile>,
    #[serde(default)]
    pub train_config: Option<TrainConfig>,
    /// For autoencoders, the number of encoder layers (the code is the
    /// output of layer `bottleneck_layer - 1`).
    #[serde(default)]
    pub bottleneck_layer: Option<usize>,
}

impl NetworkFile {
    pub fn network(&self) -> Result<Network> {
        if self.format != NETWORK_FORMAT || self.version != NETWORK_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let specs: Vec<LayerSpec> = self
            .layers
            .iter()
            .map(|l| LayerSpec::new(l.in_dim, l.out_dim, l.activation))
            .collect();
        check_chain(&specs)?;
        let layers = self
            .layers
            .iter()
            .zip(specs)
            .map(|(l, spec)| {
                let weights = Array2::from_shape_vec((l.out_dim, l.in_dim), l.weights.clone())
                    .map_err(|e| Error::Format(format!("weights: {e}")))?;
                if l.biases.len() != l.out_dim {
                    return Err(Error::Format("bias length does not match out_dim".into()));
                }
                if weights.iter().chain(&l.biases).any(|w| !w.is_finite()) {
                    return Err(Error::Format("non-finite parameter in checkpoint".into()));
                }
                Ok(Layer { spec, weights, biases: Array1::from(l.biases.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Network { layers })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputNotFound(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
