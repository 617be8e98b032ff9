//! Synthetic opcode-count corpora.
//!
//! Each class has a multinomial opcode profile
//! `(1 − s) · base + s · own`, where the two `own` profiles live on
//! disjoint halves of the vocabulary. The total-variation distance between
//! the class profiles is therefore exactly `s` (`separation`).

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::LogNormal;

use crate::dataset::{LabeledDataset, BENIGN, MALWARE};
use crate::error::{Error, Result};
use crate::rng;

/// Instruction counts per synthetic file are drawn from this range.
pub const FILE_LENGTH: std::ops::RangeInclusive<usize> = 300..=1500;

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Class-conditional opcode profiles `(malware, benign)`.
pub fn class_profiles(d: usize, separation: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::substream(seed, 0);
    let heavy = LogNormal::new(0.0, 1.0).expect("valid log-normal");
    let base = normalized((0..d).map(|_| heavy.sample(&mut r)).collect());
    let half = d / 2;
    let own = |lo: usize, hi: usize, r: &mut rng::Rng| {
        normalized((0..d).map(|j| if (lo..hi).contains(&j) { heavy.sample(r) } else { 0.0 }).collect())
    };
    let mal_own = own(0, half, &mut r);
    let ben_own = own(half, d, &mut r);
    let mix = |own: &[f64]| base.iter().zip(own).map(|(b, o)| (1.0 - separation) * b + separation * o).collect();
    (mix(&mal_own), mix(&ben_own))
}

/// Malware rows first, then benign; feature names `op_000`, `op_001`, ...
pub fn generate_synthetic_corpus(
    n_malware: usize,
    n_benign: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_malware < 3 || n_benign < 3 {
        return Err(Error::InvalidParams("each class needs at least 3 samples".into()));
    }
    if d < 2 {
        return Err(Error::InvalidParams("at least 2 opcodes required".into()));
    }
    if !(0.0..=1.0).contains(&separation) {
        return Err(Error::InvalidParams(format!("separation must lie in [0, 1], got {separation}")));
    }
    let (mal, ben) = class_profiles(d, separation, seed);
    let samplers = [
        WeightedIndex::new(&ben).map_err(|e| Error::InvalidParams(e.to_string()))?,
        WeightedIndex::new(&mal).map_err(|e| Error::InvalidParams(e.to_string()))?,
    ];

    let n = n_malware + n_benign;
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut source_ids = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i < n_malware { MALWARE } else { BENIGN };
        let mut r = rng::substream(seed, 1 + i as u64);
        let len = r.random_range(FILE_LENGTH);
        let sampler = &samplers[usize::from(label)];
        for _ in 0..len {
            features[[i, sampler.sample(&mut r)]] += 1.0;
        }
        labels.push(label);
        source_ids.push(if label == MALWARE {
            format!("synth/malware/{i:05}")
        } else {
            format!("synth/benign/{:05}", i - n_malware)
        });
    }
    let names = (0..d).map(|j| format!("op_{j:03}")).collect();
    LabeledDataset::new(features, labels, names, source_ids)
}
