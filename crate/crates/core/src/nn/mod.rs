//! Dense feed-forward networks shared by the DNN classifiers and the
//! autoencoders: ELU/sigmoid/linear layers, inverted dropout, exact
//! backpropagation and Adam.

mod adam;
mod network;
mod train;

pub use adam::AdamState;
pub use network::{Activation, ForwardPass, Gradients, Layer, LayerSpec, Network, NetworkFile};
pub use train::{classify, predict, train, Loss, TrainConfig, TrainOutcome};

use ndarray::Array2;

/// Probability clamp applied before taking logs in the cross-entropy.
pub const BCE_EPSILON: f64 = 1e-7;

/// Exponential linear unit with α = 1.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of one prediction, with `q` clamped to [ε, 1 − ε].
pub fn bce_loss(y: f64, q: f64) -> f64 {
    let q = q.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
}

/// Mean loss over every element of `output` against `targets`.
pub fn batch_loss(loss: Loss, output: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let n = output.len().max(1) as f64;
    let total: f64 = match loss {
        Loss::Bce => output.iter().zip(targets).map(|(&q, &y)| bce_loss(y, q)).sum(),
        Loss::Mse => output.iter().zip(targets).map(|(&q, &y)| (q - y) * (q - y)).sum(),
    };
    total / n
}
