use ndarray::{Array1, Array2, Zip};

use super::{Gradients, Network};

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m_weights: Vec<Array2<f64>>,
    pub v_weights: Vec<Array2<f64>>,
    pub m_biases: Vec<Array1<f64>>,
    pub v_biases: Vec<Array1<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let w: Vec<Array2<f64>> = net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect();
        let b: Vec<Array1<f64>> = net.layers.iter().map(|l| Array1::zeros(l.biases.len())).collect();
        Self { m_weights: w.clone(), v_weights: w, m_biases: b.clone(), v_biases: b, t: 0 }
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            Zip::from(&mut layer.weights)
                .and(&mut self.m_weights[l])
                .and(&mut self.v_weights[l])
                .and(&grads.weights[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.biases)
                .and(&mut self.m_biases[l])
                .and(&mut self.v_biases[l])
                .and(&grads.biases[l])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}
