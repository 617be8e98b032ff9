//! Variance-threshold feature selection.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Population variance of every column, accumulated in one pass (Welford).
pub fn column_variance(matrix: &Array2<f64>) -> Result<Array1<f64>> {
    let n = matrix.nrows();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    let d = matrix.ncols();
    let mut mean = Array1::<f64>::zeros(d);
    let mut m2 = Array1::<f64>::zeros(d);
    for (k, row) in matrix.axis_iter(Axis(0)).enumerate() {
        let count = (k + 1) as f64;
        for ((mu, acc), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(row) {
            let delta = x - *mu;
            *mu += delta / count;
            *acc += delta * (x - *mu);
        }
    }
    Ok(m2 / n as f64)
}

/// Which columns survive the threshold, with the variances that decided it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMask {
    pub keep: Vec<bool>,
    pub threshold: f64,
    pub variances: Vec<f64>,
}

impl FeatureMask {
    pub fn dim(&self) -> usize {
        self.keep.len()
    }

    pub fn kept(&self) -> Vec<usize> {
        self.keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn n_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn kept_names(&self, names: &[String]) -> Vec<String> {
        self.kept().into_iter().map(|i| names[i].clone()).collect()
    }

    pub fn to_file(&self, names: &[String]) -> Result<MaskFile> {
        if names.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: names.len() });
        }
        Ok(MaskFile {
            threshold: self.threshold,
            variance: "population".into(),
            features: names
                .iter()
                .zip(&self.variances)
                .zip(&self.keep)
                .map(|((name, &variance), &keep)| MaskEntry { name: name.clone(), variance, keep })
                .collect(),
        })
    }
}

/// Keeps column `j` iff its variance over `train_matrix` is strictly above `threshold`.
pub fn fit_mask(train_matrix: &Array2<f64>, threshold: f64) -> Result<FeatureMask> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidParams(format!("threshold must be >= 0, got {threshold}")));
    }
    let variances = column_variance(train_matrix)?;
    Ok(FeatureMask {
        keep: variances.iter().map(|&v| v > threshold).collect(),
        threshold,
        variances: variances.to_vec(),
    })
}

/// Projects `matrix` onto the kept columns, preserving their order. The
/// result may have zero columns.
pub fn apply_mask(mask: &FeatureMask, matrix: &Array2<f64>) -> Result<Array2<f64>> {
    if matrix.ncols() != mask.dim() {
        return Err(Error::DimensionMismatch { expected: mask.dim(), actual: matrix.ncols() });
    }
    Ok(matrix.select(Axis(1), &mask.kept()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskEntry {
    pub name: String,
    pub variance: f64,
    pub keep: bool,
}

/// On-disk form of a [`FeatureMask`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskFile {
    pub threshold: f64,
    /// Variance convention used when fitting; always `population`.
    pub variance: String,
    pub features: Vec<MaskEntry>,
}

impl MaskFile {
    pub fn mask(&self) -> FeatureMask {
        FeatureMask {
            keep: self.features.iter().map(|f| f.keep).collect(),
            threshold: self.threshold,
            variances: self.features.iter().map(|f| f.variance).collect(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputNotFound(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
