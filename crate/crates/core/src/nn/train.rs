use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{batch_loss, AdamState, Network};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Bce,
    Mse,
}

/// Mini-batch Adam training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub loss: Loss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            dropout_rate: 0.1,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            loss: Loss::Bce,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("beta1 and beta2 must lie in (0, 1)");
        }
        if !(self.learning_rate >= 0.0 && self.epsilon > 0.0) {
            return bad("learning_rate must be >= 0 and epsilon > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean training loss of each epoch, as seen by the optimiser.
    pub loss_history: Vec<f64>,
}

impl TrainOutcome {
    /// `epoch,loss` CSV, epochs numbered from 1.
    pub fn write_history<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,loss")?;
        for (i, l) in self.loss_history.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, l)?;
        }
        Ok(())
    }

    pub fn save_history(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_history(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Trains a copy of `net` on `(inputs, targets)`.
///
/// Rows are reshuffled every epoch; the shuffle and the dropout masks both
/// draw from one stream seeded by `config.seed`.
pub fn train(net: &Network, inputs: &Array2<f64>, targets: &Array2<f64>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if inputs.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), actual: inputs.ncols() });
    }
    if targets.nrows() != n {
        return Err(Error::LengthMismatch { left: n, right: targets.nrows() });
    }
    if targets.ncols() != net.output_dim() {
        return Err(Error::DimensionMismatch { expected: net.output_dim(), actual: targets.ncols() });
    }

    let mut network = net.clone();
    let mut adam = AdamState::new(&network);
    let mut rng = rng::from_seed(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = inputs.select(Axis(0), chunk);
            let y = targets.select(Axis(0), chunk);
            let pass = network.forward_train(&x, config.dropout_rate, &mut rng)?;
            total += batch_loss(config.loss, pass.output(), &y) * chunk.len() as f64;
            let grads = network.backward(&pass, &y, config.loss)?;
            adam.step(&mut network, &grads, config.learning_rate, config.beta1, config.beta2, config.epsilon);
        }
        loss_history.push(total / n as f64);
    }
    Ok(TrainOutcome { network, loss_history })
}

/// Probability of the positive class for each row (first output unit).
pub fn predict(net: &Network, matrix: &Array2<f64>) -> Result<Vec<f64>> {
    Ok(net.output(matrix)?.column(0).to_vec())
}

/// Label 1 iff the probability is strictly above `threshold`.
pub fn classify(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p > threshold)).collect()
}
