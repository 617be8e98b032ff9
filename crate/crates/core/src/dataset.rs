//! Labeled feature matrices, the per-class 2:1 split, ADASYN oversampling
//! and min-max scaling.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::disasm::{MasterOpcodeList, OpcodeHistogram};
use crate::error::{Error, Result};
use crate::rng;

pub const MALWARE: u8 = 1;
pub const BENIGN: u8 = 0;

/// Feature matrix with binary labels (1 = malware, 0 = benign).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
    /// Row provenance, one id per row.
    pub source_ids: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u8>,
        feature_names: Vec<String>,
        source_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if labels.len() != n {
            return Err(Error::LengthMismatch { left: n, right: labels.len() });
        }
        if source_ids.len() != n {
            return Err(Error::LengthMismatch { left: n, right: source_ids.len() });
        }
        if feature_names.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: feature_names.len() });
        }
        if d == 0 {
            return Err(Error::EmptyFeatureSet { stage: "dataset construction".into() });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Format(format!("label {bad} is not binary")));
        }
        Ok(Self { features, labels, feature_names, source_ids })
    }

    /// Stacks histograms into a dataset whose columns follow `master`.
    pub fn from_histograms(
        histograms: &[OpcodeHistogram],
        labels: Vec<u8>,
        master: &MasterOpcodeList,
    ) -> Result<Self> {
        let d = master.len();
        let mut features = Array2::zeros((histograms.len(), d));
        for (mut row, h) in features.rows_mut().into_iter().zip(histograms) {
            if h.counts.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: h.counts.len() });
            }
            for (x, &c) in row.iter_mut().zip(&h.counts) {
                *x = c as f64;
            }
        }
        Self::new(
            features,
            labels,
            master.entries().to_vec(),
            histograms.iter().map(|h| h.source_id.clone()).collect(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Rows at `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            source_ids: idx.iter().map(|&i| self.source_ids[i].clone()).collect(),
        }
    }

    /// Same rows and labels with a different feature matrix.
    pub fn with_features(&self, features: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        if features.nrows() != self.n_rows() {
            return Err(Error::LengthMismatch { left: self.n_rows(), right: features.nrows() });
        }
        Self::new(features, self.labels.clone(), feature_names, self.source_ids.clone())
    }

    /// Reindexes columns by name onto `names`; columns missing from `self`
    /// are zero, extra columns are dropped.
    pub fn align_to(&self, names: &[String]) -> Result<Self> {
        let lookup: std::collections::HashMap<&str, usize> = self
            .feature_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut features = Array2::zeros((self.n_rows(), names.len()));
        for (j, name) in names.iter().enumerate() {
            if let Some(&src) = lookup.get(name.as_str()) {
                features.column_mut(j).assign(&self.features.column(src));
            }
        }
        self.with_features(features, names.to_vec())
    }

    /// Header `source_id,label,<feature names>`, one row per sample.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["source_id".to_string(), "label".to_string()];
        header.extend(self.feature_names.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, row) in self.features.rows().into_iter().enumerate() {
            record.clear();
            record.push(self.source_ids[i].clone());
            record.push(self.labels[i].to_string());
            record.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        if header.len() < 2 || &header[0] != "source_id" || &header[1] != "label" {
            return Err(Error::Format("CSV header must start with source_id,label".into()));
        }
        let feature_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let d = feature_names.len();
        let mut values = Vec::new();
        let mut labels = Vec::new();
        let mut source_ids = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 2 {
                return Err(Error::Format(format!(
                    "row {}: expected {} fields, found {}",
                    line + 2,
                    d + 2,
                    rec.len()
                )));
            }
            source_ids.push(rec[0].to_string());
            labels.push(match &rec[1] {
                "0" => BENIGN,
                "1" => MALWARE,
                other => return Err(Error::Format(format!("row {}: bad label {other:?}", line + 2))),
            });
            for field in rec.iter().skip(2) {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("row {}: bad value {field:?}", line + 2)))?;
                values.push(x);
            }
        }
        let features = Array2::from_shape_vec((labels.len(), d), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        Self::new(features, labels, feature_names, source_ids)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputNotFound(path.to_path_buf()));
        }
        Self::read_csv(std::io::BufReader::new(fs::File::open(path)?))
    }
}

/// Train/test partition of a dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub seed: u64,
    /// Input row indices of each partition, ascending.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Split manifest as persisted next to run artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPair {
    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            seed: self.seed,
            train: self.train.source_ids.clone(),
            test: self.test.source_ids.clone(),
        }
    }
}

/// Stratified 2:1 split: within each class, rows are shuffled with a
/// class-specific stream of `seed` and the first ⌊2n/3⌋ go to training.
pub fn split(data: &LabeledDataset, seed: u64) -> Result<SplitPair> {
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for label in [MALWARE, BENIGN] {
        let mut rows: Vec<usize> = (0..data.n_rows()).filter(|&i| data.labels[i] == label).collect();
        if rows.len() < 3 {
            return Err(Error::InsufficientClass { label, count: rows.len(), required: 3 });
        }
        let mut rng = rng::substream(seed, u64::from(label));
        rows.shuffle(&mut rng);
        let n_train = 2 * rows.len() / 3;
        train_rows.extend_from_slice(&rows[..n_train]);
        test_rows.extend_from_slice(&rows[n_train..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(SplitPair {
        train: data.select_rows(&train_rows),
        test: data.select_rows(&test_rows),
        seed,
        train_rows,
        test_rows,
    })
}

/// ADASYN settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdasynParams {
    pub k: usize,
    pub beta: f64,
}

impl Default for AdasynParams {
    fn default() -> Self {
        Self { k: 5, beta: 1.0 }
    }
}

/// Where a synthetic row came from: `parent + lambda * (neighbor - parent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticOrigin {
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct AdasynOutput {
    /// Input rows unchanged and in order, followed by the synthetic rows.
    pub data: LabeledDataset,
    /// One entry per appended row; indices refer to input rows.
    pub synthetics: Vec<SyntheticOrigin>,
}

fn squared_distance(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest rows to `i` (self excluded), nearest first;
/// equal distances go to the lower row index.
fn nearest_neighbors(x: &Array2<f64>, i: usize, k: usize) -> Vec<usize> {
    let target = x.row(i);
    let mut dist: Vec<(f64, usize)> = (0..x.nrows())
        .filter(|&j| j != i)
        .map(|j| (squared_distance(target, x.row(j)), j))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.truncate(k);
    dist.into_iter().map(|(_, j)| j).collect()
}

/// Splits `total` into integer shares proportional to `weights` (which sum
/// to 1) by largest remainder; remainder ties go to the lower index.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut shares: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = shares.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    shares
}

/// Adaptive synthetic oversampling of the minority class.
///
/// `G = round(beta * (n_maj - n_min))` rows are generated. Each minority row
/// gets a share of `G` proportional to the fraction of majority rows among
/// its `k` nearest neighbours in the whole set, and each of its synthetics is
/// interpolated towards a minority row drawn from those neighbours.
/// Row `i` draws from its own substream of `seed`, so the output does not
/// depend on evaluation order.
pub fn adasyn(train: &LabeledDataset, params: AdasynParams, seed: u64) -> Result<AdasynOutput> {
    let AdasynParams { k, beta } = params;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParams(format!("beta must lie in [0, 1], got {beta}")));
    }
    let n = train.n_rows();
    if k == 0 || k >= n {
        return Err(Error::InvalidParams(format!("k must satisfy 1 <= k < {n}, got {k}")));
    }
    let n_mal = train.class_count(MALWARE);
    let n_ben = n - n_mal;
    let (minority_label, n_min, n_maj) =
        if n_ben <= n_mal { (BENIGN, n_ben, n_mal) } else { (MALWARE, n_mal, n_ben) };
    if n_min < 2 {
        return Err(Error::DegenerateMinority { count: n_min });
    }

    let g_total = (beta * (n_maj - n_min) as f64).round() as usize;
    if g_total == 0 {
        return Ok(AdasynOutput { data: train.clone(), synthetics: Vec::new() });
    }

    let x = &train.features;
    let minority: Vec<usize> = (0..n).filter(|&i| train.labels[i] == minority_label).collect();
    let neighborhoods: Vec<Vec<usize>> = {
        use rayon::prelude::*;
        minority.par_iter().map(|&i| nearest_neighbors(x, i, k)).collect()
    };

    let ratios: Vec<f64> = neighborhoods
        .iter()
        .map(|nn| nn.iter().filter(|&&j| train.labels[j] != minority_label).count() as f64 / k as f64)
        .collect();
    let total: f64 = ratios.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        ratios.iter().map(|r| r / total).collect()
    } else {
        vec![1.0 / minority.len() as f64; minority.len()]
    };
    let shares = apportion(g_total, &weights);

    let d = train.n_features();
    let mut synthetic_values = Vec::with_capacity(g_total * d);
    let mut synthetics = Vec::with_capacity(g_total);
    for (m, &i) in minority.iter().enumerate() {
        if shares[m] == 0 {
            continue;
        }
        let mut rng = rng::substream(seed, i as u64);
        let candidates: Vec<usize> = neighborhoods[m]
            .iter()
            .copied()
            .filter(|&j| train.labels[j] == minority_label)
            .collect();
        let fallback: Vec<usize> = minority.iter().copied().filter(|&j| j != i).collect();
        let pool = if candidates.is_empty() { &fallback } else { &candidates };
        for _ in 0..shares[m] {
            let z = pool[rng.random_range(0..pool.len())];
            let lambda: f64 = rng.random();
            let (xi, xz) = (x.row(i), x.row(z));
            synthetic_values.extend(xi.iter().zip(xz).map(|(a, b)| a + lambda * (b - a)));
            synthetics.push(SyntheticOrigin { parent: i, neighbor: z, lambda });
        }
    }

    let extra = Array2::from_shape_vec((synthetics.len(), d), synthetic_values)
        .expect("synthetic rows have d columns");
    let features = ndarray::concatenate![Axis(0), train.features.view(), extra.view()];
    let mut labels = train.labels.clone();
    labels.extend(std::iter::repeat_n(minority_label, synthetics.len()));
    let mut source_ids = train.source_ids.clone();
    source_ids.extend((0..synthetics.len()).map(|s| format!("adasyn-{s}")));
    Ok(AdasynOutput {
        data: LabeledDataset::new(features, labels, train.feature_names.clone(), source_ids)?,
        synthetics,
    })
}

/// Per-feature min-max scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(features: &Array2<f64>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let min: Array1<f64> = features.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
        let max: Array1<f64> = features.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
        let range = &max - &min;
        Ok(Self { min: min.to_vec(), range: range.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / range`, clipped to [0, 1]; zero-range features map to 0.
    pub fn transform(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: features.ncols() });
        }
        let mut out = features.clone();
        for mut row in out.rows_mut() {
            for ((x, &lo), &r) in row.iter_mut().zip(&self.min).zip(&self.range) {
                *x = if r > 0.0 { ((*x - lo) / r).clamp(0.0, 1.0) } else { 0.0 };
            }
        }
        Ok(out)
    }
}

pub fn fit_scaler(train: &LabeledDataset) -> Result<MinMaxScaler> {
    MinMaxScaler::fit(&train.features)
}

pub fn apply_scaler(scaler: &MinMaxScaler, data: &LabeledDataset) -> Result<LabeledDataset> {
    data.with_features(scaler.transform(&data.features)?, data.feature_names.clone())
}
