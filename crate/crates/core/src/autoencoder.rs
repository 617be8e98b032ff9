//! Autoencoder feature extraction.
//!
//! AE-1L has a single encoder layer `d → code`; AE-3L has three,
//! `d → w1 → w2 → code`. The decoder mirrors the encoder and exists only
//! for training: after fitting, rows are mapped to the bottleneck
//! activations and those become the features.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{self, Activation, LayerSpec, Loss, Network, NetworkFile, TrainConfig, TrainOutcome};

pub const DEFAULT_CODE_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AeKind {
    #[serde(rename = "AE 1L")]
    OneLayer,
    #[serde(rename = "AE 3L")]
    ThreeLayer,
}

impl AeKind {
    pub fn encoder_layers(self) -> usize {
        match self {
            AeKind::OneLayer => 1,
            AeKind::ThreeLayer => 3,
        }
    }
}

impl fmt::Display for AeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AeKind::OneLayer => "AE 1L",
            AeKind::ThreeLayer => "AE 3L",
        })
    }
}

/// Reconstruction training defaults: MSE, no dropout.
pub fn default_train_config() -> TrainConfig {
    TrainConfig { loss: Loss::Mse, dropout_rate: 0.0, ..TrainConfig::default() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeConfig {
    pub kind: AeKind,
    pub input_dim: usize,
    pub code_dim: usize,
    /// AE-3L intermediate encoder widths; `None` picks [`default_widths`].
    pub widths: Option<[usize; 2]>,
    pub train: TrainConfig,
}

impl AeConfig {
    pub fn new(kind: AeKind, input_dim: usize) -> Self {
        Self { kind, input_dim, code_dim: DEFAULT_CODE_DIM, widths: None, train: default_train_config() }
    }

    /// Encoder widths after the input, ending with the code.
    pub fn encoder_widths(&self) -> Vec<usize> {
        match self.kind {
            AeKind::OneLayer => vec![self.code_dim],
            AeKind::ThreeLayer => {
                let [w1, w2] = self.widths.unwrap_or_else(|| default_widths(self.input_dim, self.code_dim));
                vec![w1, w2, self.code_dim]
            }
        }
    }
}

/// AE-3L intermediate widths: two points geometrically spaced between the
/// input and code widths, each rounded to the nearest power of two (in log
/// scale) and kept within `[code_dim, input_dim]`. For 1613 → 32 this gives
/// 512 and 128.
pub fn default_widths(input_dim: usize, code_dim: usize) -> [usize; 2] {
    let ratio = (code_dim as f64 / input_dim as f64).cbrt();
    let pick = |k: i32| {
        let w = input_dim as f64 * ratio.powi(k);
        let p = 2f64.powf(w.log2().round()) as usize;
        p.clamp(code_dim, input_dim.max(code_dim))
    };
    [pick(1), pick(2)]
}

/// An autoencoder network with its bottleneck position.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub kind: AeKind,
    pub network: Network,
    /// Number of encoder layers; the code is the output of the last of them.
    pub encoder_layers: usize,
}

impl Autoencoder {
    pub fn code_dim(&self) -> usize {
        self.network.layers[self.encoder_layers - 1].spec.out_dim
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn to_file(&self, train_config: Option<TrainConfig>) -> NetworkFile {
        self.network.to_file(train_config, Some(self.encoder_layers))
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        let network = file.network()?;
        let encoder_layers = file
            .bottleneck_layer
            .ok_or_else(|| Error::Format("checkpoint has no bottleneck layer".into()))?;
        let kind = match encoder_layers {
            1 => AeKind::OneLayer,
            3 => AeKind::ThreeLayer,
            n => return Err(Error::Format(format!("unsupported encoder depth {n}"))),
        };
        if network.layers.len() != 2 * encoder_layers {
            return Err(Error::Format("decoder does not mirror encoder".into()));
        }
        Ok(Self { kind, network, encoder_layers })
    }
}

/// Layer specs of the full encoder + mirrored decoder.
pub fn ae_specs(config: &AeConfig) -> Result<Vec<LayerSpec>> {
    let d = config.input_dim;
    if config.code_dim == 0 || config.code_dim >= d {
        return Err(Error::InvalidDims(format!(
            "code dimension {} must be in 1..{d}",
            config.code_dim
        )));
    }
    let mut dims = vec![d];
    dims.extend(config.encoder_widths());
    if dims.contains(&0) {
        return Err(Error::InvalidDims("zero-width encoder layer".into()));
    }
    let encoder: Vec<LayerSpec> = dims.windows(2).map(|w| LayerSpec::new(w[0], w[1], Activation::Elu)).collect();
    let mut decoder: Vec<LayerSpec> = dims
        .windows(2)
        .rev()
        .map(|w| LayerSpec::new(w[1], w[0], Activation::Elu))
        .collect();
    if let Some(last) = decoder.last_mut() {
        last.activation = Activation::Linear;
    }
    Ok(encoder.into_iter().chain(decoder).collect())
}

pub fn build_ae(config: &AeConfig, seed: u64) -> Result<Autoencoder> {
    let specs = ae_specs(config)?;
    Ok(Autoencoder {
        kind: config.kind,
        network: Network::new(&specs, seed)?,
        encoder_layers: config.kind.encoder_layers(),
    })
}

/// Fits the autoencoder to reconstruct `features` (expected in [0, 1]).
/// No labels are involved.
pub fn train_ae(ae: &Autoencoder, features: &Array2<f64>, config: &TrainConfig) -> Result<(Autoencoder, TrainOutcome)> {
    let config = TrainConfig { loss: Loss::Mse, ..*config };
    let outcome = nn::train(&ae.network, features, features, &config)?;
    let trained = Autoencoder { network: outcome.network.clone(), ..ae.clone() };
    Ok((trained, outcome))
}

/// Bottleneck activations, dropout off.
pub fn encode(ae: &Autoencoder, matrix: &Array2<f64>) -> Result<Array2<f64>> {
    ae.network.activations_at(matrix, ae.encoder_layers)
}

/// Feature names for encoded columns: `code_0`, `code_1`, ...
pub fn code_names(code_dim: usize) -> Vec<String> {
    (0..code_dim).map(|i| format!("code_{i}")).collect()
}
