//! Random forest of CART trees with Gini impurity.
//!
//! Trees are grown on bootstrap samples, drawing a fresh feature subset at
//! every node; prediction is a majority vote of per-tree leaf majorities.
//! Split quality is compared in exact integer arithmetic so that ties are
//! real ties and break deterministically (lower feature, then lower
//! threshold).

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Gini impurity `1 − Σ (n_c / n)²`; 0 for an empty node.
pub fn gini(counts: [u64; 2]) -> f64 {
    let n = counts[0] + counts[1];
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil() as usize,
            MaxFeatures::All => d,
            MaxFeatures::Fixed(k) => k,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for RfConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_features: MaxFeatures::Sqrt, min_samples_split: 2, max_depth: None, seed: 0 }
    }
}

impl RfConfig {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_features: self.max_features,
            min_samples_split: self.min_samples_split,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        RfConfig::default().tree_params()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: [u64; 2] },
}

/// Candidate split; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Parent Gini minus the size-weighted child Gini.
    pub decrease: f64,
    pub left_counts: [u64; 2],
    pub right_counts: [u64; 2],
}

/// `Σ_child Σ_c n_c² / n_child` as an exact fraction; the weighted child
/// Gini is `1 − score / n`, so a larger score is a purer split.
#[derive(Debug, Clone, Copy)]
struct Score {
    num: u128,
    den: u128,
}

impl Score {
    fn of(left: [u64; 2], right: [u64; 2]) -> Self {
        let sq = |c: [u64; 2]| u128::from(c[0]) * u128::from(c[0]) + u128::from(c[1]) * u128::from(c[1]);
        let nl = u128::from(left[0] + left[1]);
        let nr = u128::from(right[0] + right[1]);
        Self { num: sq(left) * nr + sq(right) * nl, den: nl * nr }
    }

    fn parent(counts: [u64; 2]) -> Self {
        let n = u128::from(counts[0] + counts[1]);
        Self { num: u128::from(counts[0]).pow(2) + u128::from(counts[1]).pow(2), den: n }
    }

    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

fn class_counts(y: &[u8], rows: &[usize]) -> [u64; 2] {
    let mut c = [0u64; 2];
    for &r in rows {
        c[usize::from(y[r])] += 1;
    }
    c
}

fn find_split(x: &Array2<f64>, y: &[u8], rows: &[usize], features: &[usize], allow_zero_gain: bool) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let parent_counts = class_counts(y, rows);
    if parent_counts[0] == 0 || parent_counts[1] == 0 {
        return None;
    }
    let parent = Score::parent(parent_counts);
    let parent_gini = gini(parent_counts);
    let n = rows.len() as f64;

    let mut best: Option<(Score, Split)> = None;
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(rows.len());
    for &f in features {
        column.clear();
        column.extend(rows.iter().map(|&r| (x[[r, f]], y[r])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0u64; 2];
        for i in 0..column.len() - 1 {
            left[usize::from(column[i].1)] += 1;
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo >= hi {
                continue;
            }
            let right = [parent_counts[0] - left[0], parent_counts[1] - left[1]];
            let score = Score::of(left, right);
            let gain = score.cmp(&parent);
            if gain.is_lt() || (gain.is_eq() && !allow_zero_gain) {
                continue;
            }
            if best.as_ref().is_some_and(|(b, _)| !score.cmp(b).is_gt()) {
                continue;
            }
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            let (nl, nr) = ((left[0] + left[1]) as f64, (right[0] + right[1]) as f64);
            let decrease = parent_gini - (nl / n) * gini(left) - (nr / n) * gini(right);
            best = Some((
                score,
                Split { feature: f, threshold, decrease: decrease.max(0.0), left_counts: left, right_counts: right },
            ));
        }
    }
    best.map(|(_, s)| s)
}

/// Best Gini split of `rows` over the candidate `features`, or `None` when
/// no threshold strictly lowers impurity. Thresholds are midpoints between
/// consecutive distinct values.
pub fn best_split(x: &Array2<f64>, y: &[u8], rows: &[usize], features: &[usize]) -> Option<Split> {
    find_split(x, y, rows, features, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionTree {
    /// Preorder; node 0 is the root.
    pub nodes: Vec<Node>,
}

struct Grower<'a> {
    x: &'a Array2<f64>,
    y: &'a [u8],
    params: TreeParams,
    n_candidates: usize,
    rng: Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = class_counts(self.y, rows);
        self.nodes.push(Node::Leaf { counts });
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || rows.len() < self.params.min_samples_split || self.params.max_depth.is_some_and(|m| depth >= m) {
            return id;
        }
        let d = self.x.ncols();
        let mut features = rand::seq::index::sample(&mut self.rng, d, self.n_candidates).into_vec();
        features.sort_unstable();
        // A split that leaves impurity unchanged still separates distinct
        // rows; taking it lets consistent data be fitted exactly (XOR).
        let Some(split) = find_split(self.x, self.y, rows, &features, false)
            .or_else(|| find_split(self.x, self.y, rows, &features, true))
        else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.x[[r, split.feature]] <= split.threshold);
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        id
    }
}

impl DecisionTree {
    /// Grows a tree on `rows` of `x` (repeats allowed).
    pub fn fit(x: &Array2<f64>, y: &[u8], rows: &[usize], params: TreeParams, rng: Rng) -> Self {
        let mut g = Grower { x, y, params, n_candidates: params.max_features.resolve(x.ncols()), rng, nodes: Vec::new() };
        g.grow(rows, 0);
        Self { nodes: g.nodes }
    }

    pub fn leaf_for(&self, row: ndarray::ArrayView1<f64>) -> [u64; 2] {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Majority class of the leaf reached by `row`; ties go to 0.
    pub fn vote(&self, row: ndarray::ArrayView1<f64>) -> u8 {
        let c = self.leaf_for(row);
        u8::from(c[1] > c[0])
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub const FOREST_FORMAT: &str = "opdetect-forest";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forest {
    pub format: String,
    pub config: RfConfig,
    pub n_features: usize,
    pub trees: Vec<DecisionTree>,
}

/// Bootstrap sample of size `n` for tree `t`.
pub fn bootstrap_rows(rng: &mut Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Fits `config.n_trees` trees; tree `t` uses the stream seeded by
/// `config.seed + t`, so parallel and sequential fits agree bit for bit.
pub fn fit(x: &Array2<f64>, y: &[u8], config: &RfConfig) -> Result<Forest> {
    let (n, d) = x.dim();
    if n < 2 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if config.n_trees == 0 || config.min_samples_split < 2 {
        return Err(Error::InvalidParams("n_trees >= 1 and min_samples_split >= 2 required".into()));
    }
    let params = config.tree_params();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::from_seed(config.seed.wrapping_add(t as u64));
            let rows = bootstrap_rows(&mut rng, n);
            DecisionTree::fit(x, y, &rows, params, rng)
        })
        .collect();
    Ok(Forest { format: FOREST_FORMAT.into(), config: *config, n_features: d, trees })
}

impl Forest {
    fn check(&self, matrix: &Array2<f64>) -> Result<()> {
        if matrix.ncols() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, actual: matrix.ncols() });
        }
        Ok(())
    }

    fn votes(&self, matrix: &Array2<f64>) -> Result<Vec<usize>> {
        self.check(matrix)?;
        Ok(matrix
            .rows()
            .into_iter()
            .map(|row| self.trees.iter().map(|t| usize::from(t.vote(row))).sum())
            .collect())
    }

    /// Fraction of trees voting malware.
    pub fn predict_proba(&self, matrix: &Array2<f64>) -> Result<Vec<f64>> {
        let n = self.trees.len() as f64;
        Ok(self.votes(matrix)?.into_iter().map(|v| v as f64 / n).collect())
    }

    /// Majority vote; an even split goes to benign.
    pub fn predict(&self, matrix: &Array2<f64>) -> Result<Vec<u8>> {
        let n = self.trees.len();
        Ok(self.votes(matrix)?.into_iter().map(|v| u8::from(2 * v > n)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputNotFound(path.to_path_buf()));
        }
        let forest: Forest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if forest.format != FOREST_FORMAT {
            return Err(Error::Format(format!("not a forest checkpoint: {}", forest.format)));
        }
        Ok(forest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn separable() -> (Array2<f64>, Vec<u8>) {
        (array![[1.0], [2.0], [8.0], [9.0]], vec![0, 0, 1, 1])
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini([10, 0]), 0.0);
        assert_eq!(gini([5, 5]), 0.5);
        assert_eq!(gini([0, 0]), 0.0);
    }

    #[test]
    fn best_split_on_separable_line() {
        let (x, y) = separable();
        let s = best_split(&x, &y, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 5.0));
        assert_eq!((s.left_counts, s.right_counts), ([2, 0], [0, 2]));
        assert_eq!(s.decrease, 0.5);
    }

    #[test]
    fn best_split_none_cases() {
        let x = array![[1.0], [2.0], [3.0]];
        assert!(best_split(&x, &[1, 1, 1], &[0, 1, 2], &[0]).is_none());
        let x = array![[4.0], [4.0], [4.0]];
        assert!(best_split(&x, &[0, 1, 0], &[0, 1, 2], &[0]).is_none());
    }

    #[test]
    fn ties_prefer_lower_feature_and_threshold() {
        // both features separate perfectly
        let x = array![[1.0, 10.0], [2.0, 20.0], [3.0, 30.0], [4.0, 40.0]];
        let s = best_split(&x, &[0, 0, 1, 1], &[0, 1, 2, 3], &[0, 1]).unwrap();
        assert_eq!((s.feature, s.threshold), (0, 2.5));
        // two equally good thresholds on one feature
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]];
        let s = best_split(&x, &[0, 1, 1, 1, 1, 0], &[0, 1, 2, 3, 4, 5], &[0]).unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    #[test]
    fn separable_forest_fits_training_data() {
        let (x, y) = separable();
        let forest = fit(&x, &y, &RfConfig { seed: 3, ..Default::default() }).unwrap();
        assert_eq!(forest.trees.len(), 100);
        assert_eq!(forest.predict(&x).unwrap(), y);
    }

    #[test]
    fn single_class_predicts_that_class() {
        let x = array![[1.0, 2.0], [3.0, 1.0], [0.0, 5.0]];
        let forest = fit(&x, &[1, 1, 1], &RfConfig { n_trees: 5, ..Default::default() }).unwrap();
        assert_eq!(forest.predict_proba(&x).unwrap(), vec![1.0; 3]);
        assert_eq!(forest.predict(&array![[100.0, -4.0]]).unwrap(), vec![1]);
        for t in &forest.trees {
            assert!(matches!(t.nodes.as_slice(), [Node::Leaf { counts: [0, 3] }]));
        }
    }

    #[test]
    fn fixed_seed_reproduces_forest() {
        let x = Array2::from_shape_fn((30, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 3 == 0)).collect();
        let cfg = RfConfig { n_trees: 20, seed: 99, ..Default::default() };
        assert_eq!(fit(&x, &y, &cfg).unwrap(), fit(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn even_vote_goes_to_benign() {
        let leaf = |c| DecisionTree { nodes: vec![Node::Leaf { counts: c }] };
        let forest = Forest {
            format: FOREST_FORMAT.into(),
            config: RfConfig { n_trees: 2, ..Default::default() },
            n_features: 1,
            trees: vec![leaf([0, 4]), leaf([4, 0])],
        };
        assert_eq!(forest.predict(&array![[0.0]]).unwrap(), vec![0]);
        assert_eq!(forest.predict_proba(&array![[0.0]]).unwrap(), vec![0.5]);
    }

    #[test]
    fn stump_routing() {
        let tree = DecisionTree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 5.0, left: 1, right: 2 },
                Node::Leaf { counts: [3, 0] },
                Node::Leaf { counts: [0, 3] },
            ],
        };
        assert_eq!(tree.vote(array![3.0].view()), 0);
        assert_eq!(tree.vote(array![7.0].view()), 1);
        assert_eq!(tree.vote(array![5.0].view()), 0);
    }

    #[test]
    fn xor_is_fitted_by_unrestricted_tree() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [0, 0, 1, 1];
        let params = TreeParams { max_features: MaxFeatures::All, ..Default::default() };
        let tree = DecisionTree::fit(&x, &y, &[0, 1, 2, 3], params, rng::from_seed(0));
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(tree.vote(row), y[i]);
        }
    }

    #[test]
    fn prediction_width_is_checked() {
        let (x, y) = separable();
        let forest = fit(&x, &y, &RfConfig { n_trees: 3, ..Default::default() }).unwrap();
        assert!(matches!(
            forest.predict(&array![[1.0, 2.0]]),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = separable();
        let forest = fit(&x, &y, &RfConfig { n_trees: 3, ..Default::default() }).unwrap();
        let back: Forest = serde_json::from_str(&serde_json::to_string(&forest).unwrap()).unwrap();
        assert_eq!(back, forest);
    }
}
