//! The classifier × feature-regime grid.
//!
//! Pipeline: ingest → split 2:1 per class → ADASYN on the training part →
//! per regime, fit feature transforms on training rows only → train every
//! classifier → score on the test part. Every fitted artifact lands in the
//! output directory, together with one scoring manifest per grid cell that
//! `score` can replay on new data.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{self, AeConfig, AeKind, Autoencoder};
use crate::dataset::{self, AdasynParams, LabeledDataset, MinMaxScaler, SplitPair, BENIGN, MALWARE};
use crate::disasm::{self, MasterOpcodeList, OpcodeSequence};
use crate::error::{Error, Result};
use crate::forest::{self, Forest, RfConfig};
use crate::metrics::{self, ConfusionCounts, MetricsReport};
use crate::nn::{self, Activation, LayerSpec, Loss, Network, NetworkFile, TrainConfig};
use crate::rng::derive_seed;
use crate::select::{self, MaskFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "None")]
    None,
    #[serde(rename = "VT")]
    Vt,
    #[serde(rename = "AE 1L")]
    Ae1L,
    #[serde(rename = "AE 3L")]
    Ae3L,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::None, Regime::Vt, Regime::Ae1L, Regime::Ae3L];

    pub fn name(self) -> &'static str {
        match self {
            Regime::None => "None",
            Regime::Vt => "VT",
            Regime::Ae1L => "AE 1L",
            Regime::Ae3L => "AE 3L",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Regime::None => "none",
            Regime::Vt => "vt",
            Regime::Ae1L => "ae1l",
            Regime::Ae3L => "ae3l",
        }
    }

    fn ae_kind(self) -> Option<AeKind> {
        match self {
            Regime::Ae1L => Some(AeKind::OneLayer),
            Regime::Ae3L => Some(AeKind::ThreeLayer),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase()
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| squash(r.name()) == squash(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown feature regime {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Classifier {
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "DNN 2L")]
    Dnn2L,
    #[serde(rename = "DNN 4L")]
    Dnn4L,
    #[serde(rename = "DNN 7L")]
    Dnn7L,
}

impl Classifier {
    pub const ALL: [Classifier; 4] = [Classifier::Rf, Classifier::Dnn2L, Classifier::Dnn4L, Classifier::Dnn7L];

    pub fn name(self) -> &'static str {
        match self {
            Classifier::Rf => "RF",
            Classifier::Dnn2L => "DNN 2L",
            Classifier::Dnn4L => "DNN 4L",
            Classifier::Dnn7L => "DNN 7L",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Classifier::Rf => "rf",
            Classifier::Dnn2L => "dnn2l",
            Classifier::Dnn4L => "dnn4l",
            Classifier::Dnn7L => "dnn7l",
        }
    }
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Classifier::ALL
            .into_iter()
            .find(|c| squash(c.name()) == squash(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdasynSettings {
    pub enabled: bool,
    pub k: usize,
    pub beta: f64,
    /// Oversample the whole dataset before splitting instead of only the
    /// training part. Synthetic rows then also reach the test split.
    pub before_split: bool,
}

impl Default for AdasynSettings {
    fn default() -> Self {
        let p = AdasynParams::default();
        Self { enabled: true, k: p.k, beta: p.beta, before_split: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeSettings {
    pub code_dim: usize,
    /// AE-3L intermediate widths; derived from the input width when absent.
    pub ae3_widths: Option<[usize; 2]>,
    pub train: TrainConfig,
}

impl Default for AeSettings {
    fn default() -> Self {
        Self { code_dim: autoencoder::DEFAULT_CODE_DIM, ae3_widths: None, train: autoencoder::default_train_config() }
    }
}

/// Hidden widths per DNN depth; a sigmoid unit is always appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnnSettings {
    pub hidden_2l: Vec<usize>,
    pub hidden_4l: Vec<usize>,
    pub hidden_7l: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for DnnSettings {
    fn default() -> Self {
        Self {
            hidden_2l: vec![64],
            hidden_4l: vec![256, 64, 16],
            hidden_7l: vec![512, 256, 128, 64, 32, 16],
            train: TrainConfig::default(),
        }
    }
}

impl DnnSettings {
    pub fn hidden(&self, c: Classifier) -> &[usize] {
        match c {
            Classifier::Dnn2L => &self.hidden_2l,
            Classifier::Dnn4L => &self.hidden_4l,
            Classifier::Dnn7L => &self.hidden_7l,
            Classifier::Rf => &[],
        }
    }
}

/// Layer specs of a DNN: ELU hidden layers then one sigmoid unit.
pub fn dnn_specs(input_dim: usize, hidden: &[usize]) -> Vec<LayerSpec> {
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    let mut specs: Vec<LayerSpec> = dims.windows(2).map(|w| LayerSpec::new(w[0], w[1], Activation::Elu)).collect();
    specs.push(LayerSpec::new(*dims.last().unwrap_or(&input_dim), 1, Activation::Sigmoid));
    specs
}

fn default_vt() -> f64 {
    select::DEFAULT_THRESHOLD
}

fn default_regimes() -> Vec<Regime> {
    Regime::ALL.to_vec()
}

fn default_classifiers() -> Vec<Classifier> {
    Classifier::ALL.to_vec()
}

/// Full experiment description. Exactly one input mode: `malware_dir` +
/// `benign_dir` (objdump listings) or `features_csv`.
///
/// Component seeds inside `autoencoder.train`, `dnn.train` and `rf` are
/// replaced by seeds derived from `seed` and the grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub malware_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benign_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_csv: Option<PathBuf>,
    pub seed: u64,
    #[serde(default)]
    pub adasyn: AdasynSettings,
    #[serde(default = "default_vt")]
    pub vt_threshold: f64,
    #[serde(default)]
    pub autoencoder: AeSettings,
    #[serde(default)]
    pub dnn: DnnSettings,
    #[serde(default)]
    pub rf: RfConfig,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<Classifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn with_features(path: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            malware_dir: None,
            benign_dir: None,
            features_csv: Some(path.into()),
            seed,
            adasyn: AdasynSettings::default(),
            vt_threshold: default_vt(),
            autoencoder: AeSettings::default(),
            dnn: DnnSettings::default(),
            rf: RfConfig::default(),
            regimes: default_regimes(),
            classifiers: default_classifiers(),
            out_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::InputNotFound(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let listings = self.malware_dir.is_some() || self.benign_dir.is_some();
        match (listings, self.features_csv.is_some()) {
            (true, true) => {
                return Err(Error::InvalidParams("give either listing directories or a feature CSV, not both".into()))
            }
            (false, false) => return Err(Error::InvalidParams("no input: set malware_dir + benign_dir or features_csv".into())),
            (true, false) if self.malware_dir.is_none() || self.benign_dir.is_none() => {
                return Err(Error::InvalidParams("both malware_dir and benign_dir are required".into()))
            }
            _ => {}
        }
        if self.regimes.is_empty() || self.classifiers.is_empty() {
            return Err(Error::InvalidParams("regimes and classifiers must be non-empty".into()));
        }
        if self.vt_threshold.is_nan() || self.vt_threshold < 0.0 {
            return Err(Error::InvalidParams("vt_threshold must be >= 0".into()));
        }
        self.dnn.train.validate()?;
        self.autoencoder.train.validate()?;
        Ok(())
    }
}

/// Result of reading two listing directories.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: LabeledDataset,
    pub master: MasterOpcodeList,
    /// Per row, opcodes not present in the master list.
    pub unseen: Vec<u64>,
}

fn listing_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::InputNotFound(dir.to_path_buf()));
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Parses every file of both directories (sorted by name) into a count
/// matrix. With `master = None` the vocabulary is built from these files.
pub fn ingest(malware_dir: &Path, benign_dir: &Path, master: Option<&MasterOpcodeList>) -> Result<Ingested> {
    let mut jobs = Vec::new();
    for (dir, label, prefix) in [(malware_dir, MALWARE, "malware"), (benign_dir, BENIGN, "benign")] {
        for path in listing_files(dir)? {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            jobs.push((path, label, format!("{prefix}/{name}")));
        }
    }
    let sequences: Vec<OpcodeSequence> = jobs
        .par_iter()
        .map(|(path, _, id)| disasm::parse_file(path, id))
        .collect::<Result<_>>()?;
    let master = match master {
        Some(m) => m.clone(),
        None => disasm::build_master_list(&sequences),
    };
    let histograms = sequences
        .iter()
        .map(|s| disasm::histogram(s, &master))
        .collect::<Result<Vec<_>>>()?;
    let unseen = histograms.iter().map(|h| h.unseen_count).collect();
    let labels = jobs.iter().map(|(_, l, _)| *l).collect();
    let dataset = LabeledDataset::from_histograms(&histograms, labels, &master)?;
    Ok(Ingested { dataset, master, unseen })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub classifier: Classifier,
    pub regime: Regime,
    pub counts: ConfusionCounts,
    pub metrics: MetricsReport,
}

/// One row per (regime, classifier), regime-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, classifier: Classifier, regime: Regime) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.classifier == classifier && r.regime == regime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Text,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "text" => Ok(TableFormat::Text),
            _ => Err(Error::InvalidParams(format!("unknown format {s:?} (csv|text)"))),
        }
    }
}

const TABLE_HEADER: [&str; 6] = ["Classifiers", "Features", "Acc", "TPR", "TNR", "PPV"];

fn cells(row: &ResultRow, undefined: &str) -> [String; 6] {
    let fmt = |v: Option<f64>| v.map_or_else(|| undefined.to_string(), |x| format!("{x:.4}"));
    let m = &row.metrics;
    [
        row.classifier.name().to_string(),
        row.regime.name().to_string(),
        fmt(m.accuracy),
        fmt(m.tpr),
        fmt(m.tnr),
        fmt(m.ppv),
    ]
}

/// CSV (undefined metrics as empty cells) or an aligned text table
/// (undefined as `—`); four decimals either way.
pub fn render_table(table: &ResultTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => {
            let mut out = TABLE_HEADER.join(",");
            out.push('\n');
            for row in &table.rows {
                out.push_str(&cells(row, "").join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Text => {
            let body: Vec<[String; 6]> = table.rows.iter().map(|r| cells(r, "—")).collect();
            let mut widths = TABLE_HEADER.map(|h| h.chars().count());
            for row in &body {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |fields: &[String]| {
                let padded: Vec<String> = fields
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (f, &w))| {
                        let pad = " ".repeat(w - f.chars().count());
                        if i < 2 { format!("{f}{pad}") } else { format!("{pad}{f}") }
                    })
                    .collect();
                padded.join(" | ").trim_end().to_string()
            };
            let header: Vec<String> = TABLE_HEADER.iter().map(|s| s.to_string()).collect();
            let mut out = line(&header);
            out.push('\n');
            out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
            out.push('\n');
            let mut previous = None;
            for (row, fields) in table.rows.iter().zip(&body) {
                if previous.is_some_and(|p| p != row.regime) {
                    out.push('\n');
                }
                previous = Some(row.regime);
                out.push_str(&line(fields));
                out.push('\n');
            }
            out
        }
    }
}

/// A transform applied before the model, by artifact path relative to the
/// run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "lowercase", deny_unknown_fields)]
pub enum Step {
    Mask { path: String },
    Scale { path: String },
    Encode { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelRef {
    Forest { path: String },
    Network { path: String },
}

/// Everything needed to score raw count data with one trained grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellManifest {
    pub classifier: Classifier,
    pub regime: Regime,
    /// Column names the first step expects, in order.
    pub input_features: Vec<String>,
    pub steps: Vec<Step>,
    pub model: ModelRef,
}

fn apply_steps(base: &Path, steps: &[Step], mut x: Array2<f64>) -> Result<Array2<f64>> {
    for step in steps {
        x = match step {
            Step::Mask { path } => select::apply_mask(&MaskFile::load(&base.join(path))?.mask(), &x)?,
            Step::Scale { path } => {
                let scaler: MinMaxScaler = serde_json::from_str(&read(&base.join(path))?)?;
                scaler.transform(&x)?
            }
            Step::Encode { path } => {
                let ae = Autoencoder::from_file(&NetworkFile::load(&base.join(path))?)?;
                autoencoder::encode(&ae, &x)?
            }
        };
    }
    Ok(x)
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::InputNotFound(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

/// Replays a cell manifest on `data` (columns matched by name; missing
/// opcodes count as zero) and returns predicted labels.
pub fn predict_with_manifest(manifest_path: &Path, data: &LabeledDataset) -> Result<(CellManifest, Vec<u8>)> {
    let manifest: CellManifest = serde_json::from_str(&read(manifest_path)?)?;
    let base = manifest_path.parent().and_then(Path::parent).unwrap_or(Path::new("."));
    let aligned = data.align_to(&manifest.input_features)?;
    let x = apply_steps(base, &manifest.steps, aligned.features)?;
    let labels = match &manifest.model {
        ModelRef::Forest { path } => Forest::load(&base.join(path))?.predict(&x)?,
        ModelRef::Network { path } => {
            let net = NetworkFile::load(&base.join(path))?.network()?;
            nn::classify(&nn::predict(&net, &x)?, 0.5)
        }
    };
    Ok((manifest, labels))
}

/// Scores `data` with a saved grid cell.
pub fn score(manifest_path: &Path, data: &LabeledDataset) -> Result<ResultRow> {
    let (manifest, predicted) = predict_with_manifest(manifest_path, data)?;
    let counts = metrics::confusion(&predicted, &data.labels)?;
    Ok(ResultRow {
        classifier: manifest.classifier,
        regime: manifest.regime,
        counts,
        metrics: metrics::compute_metrics(&counts),
    })
}

/// Features of one regime for both partitions.
struct RegimeData {
    regime: Regime,
    train: Array2<f64>,
    test: Array2<f64>,
    /// Transforms from raw counts to `train`/`test`.
    steps: Vec<Step>,
    /// Extra scaling in front of the DNNs (None/VT only).
    dnn_scaler: Option<(MinMaxScaler, String)>,
}

struct RunContext<'a> {
    config: &'a ExperimentConfig,
    out: &'a Path,
    input_features: Vec<String>,
    train: &'a LabeledDataset,
    test: &'a LabeledDataset,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

impl RunContext<'_> {
    fn prepare(&self, regime: Regime) -> Result<RegimeData> {
        let dir = format!("regimes/{}", regime.slug());
        fs::create_dir_all(self.out.join(&dir))?;
        let (train, test, steps) = match regime {
            Regime::None => (self.train.features.clone(), self.test.features.clone(), Vec::new()),
            Regime::Vt => {
                let mask = select::fit_mask(&self.train.features, self.config.vt_threshold)?;
                if mask.n_kept() == 0 {
                    return Err(Error::EmptyFeatureSet { stage: format!("variance threshold {}", mask.threshold) });
                }
                let path = format!("{dir}/mask.json");
                mask.to_file(&self.train.feature_names)?.save(&self.out.join(&path))?;
                (
                    select::apply_mask(&mask, &self.train.features)?,
                    select::apply_mask(&mask, &self.test.features)?,
                    vec![Step::Mask { path }],
                )
            }
            Regime::Ae1L | Regime::Ae3L => {
                let kind = regime.ae_kind().expect("autoencoder regime");
                let settings = &self.config.autoencoder;
                let scaler = MinMaxScaler::fit(&self.train.features)?;
                let scaler_path = format!("{dir}/ae_scaler.json");
                write_json(&self.out.join(&scaler_path), &scaler)?;
                let scaled_train = scaler.transform(&self.train.features)?;
                let scaled_test = scaler.transform(&self.test.features)?;
                let ae_config = AeConfig {
                    kind,
                    input_dim: scaled_train.ncols(),
                    code_dim: settings.code_dim,
                    widths: settings.ae3_widths,
                    train: TrainConfig { seed: derive_seed(self.config.seed, &format!("ae-train/{}", regime.slug())), ..settings.train },
                };
                let ae = autoencoder::build_ae(&ae_config, derive_seed(self.config.seed, &format!("ae-init/{}", regime.slug())))?;
                let (ae, outcome) = autoencoder::train_ae(&ae, &scaled_train, &ae_config.train)?;
                let encoder_path = format!("{dir}/encoder.json");
                ae.to_file(Some(ae_config.train)).save(&self.out.join(&encoder_path))?;
                outcome.save_history(&self.out.join(format!("{dir}/ae_loss.csv")))?;
                let train_codes = autoencoder::encode(&ae, &scaled_train)?;
                let test_codes = autoencoder::encode(&ae, &scaled_test)?;
                let names = autoencoder::code_names(ae.code_dim());
                self.train
                    .with_features(train_codes.clone(), names.clone())?
                    .save_csv(&self.out.join(format!("{dir}/train_codes.csv")))?;
                self.test
                    .with_features(test_codes.clone(), names)?
                    .save_csv(&self.out.join(format!("{dir}/test_codes.csv")))?;
                (
                    train_codes,
                    test_codes,
                    vec![Step::Scale { path: scaler_path }, Step::Encode { path: encoder_path }],
                )
            }
        };
        let dnn_scaler = match regime {
            Regime::None | Regime::Vt => {
                let scaler = MinMaxScaler::fit(&train)?;
                let path = format!("{dir}/dnn_scaler.json");
                write_json(&self.out.join(&path), &scaler)?;
                Some((scaler, path))
            }
            _ => None,
        };
        Ok(RegimeData { regime, train, test, steps, dnn_scaler })
    }

    fn run_cell(&self, data: &RegimeData, classifier: Classifier) -> Result<ResultRow> {
        let tag = format!("{}__{}", data.regime.slug(), classifier.slug());
        let mut steps = data.steps.clone();
        let predicted = match classifier {
            Classifier::Rf => {
                let cfg = RfConfig { seed: derive_seed(self.config.seed, &format!("rf/{tag}")), ..self.config.rf };
                let forest = forest::fit(&data.train, &self.train.labels, &cfg)?;
                let path = format!("models/{tag}.json");
                forest.save(&self.out.join(&path))?;
                self.write_manifest(data.regime, classifier, steps, ModelRef::Forest { path })?;
                forest.predict(&data.test)?
            }
            _ => {
                let (train_x, test_x) = match &data.dnn_scaler {
                    Some((scaler, path)) => {
                        steps.push(Step::Scale { path: path.clone() });
                        (scaler.transform(&data.train)?, scaler.transform(&data.test)?)
                    }
                    None => (data.train.clone(), data.test.clone()),
                };
                let specs = dnn_specs(train_x.ncols(), self.config.dnn.hidden(classifier));
                let net = Network::new(&specs, derive_seed(self.config.seed, &format!("dnn-init/{tag}")))?;
                let train_cfg = TrainConfig {
                    loss: Loss::Bce,
                    seed: derive_seed(self.config.seed, &format!("dnn-train/{tag}")),
                    ..self.config.dnn.train
                };
                let targets = Array2::from_shape_fn((train_x.nrows(), 1), |(i, _)| f64::from(self.train.labels[i]));
                let outcome = nn::train(&net, &train_x, &targets, &train_cfg)?;
                let path = format!("models/{tag}.json");
                outcome.network.to_file(Some(train_cfg), None).save(&self.out.join(&path))?;
                outcome.save_history(&self.out.join(format!("models/{tag}_loss.csv")))?;
                self.write_manifest(data.regime, classifier, steps, ModelRef::Network { path })?;
                nn::classify(&nn::predict(&outcome.network, &test_x)?, 0.5)
            }
        };
        let counts = metrics::confusion(&predicted, &self.test.labels)?;
        Ok(ResultRow { classifier, regime: data.regime, counts, metrics: metrics::compute_metrics(&counts) })
    }

    fn write_manifest(&self, regime: Regime, classifier: Classifier, steps: Vec<Step>, model: ModelRef) -> Result<()> {
        let manifest = CellManifest { classifier, regime, input_features: self.input_features.clone(), steps, model };
        write_json(
            &self.out.join(format!("cells/{}__{}.json", regime.slug(), classifier.slug())),
            &manifest,
        )
    }
}

/// RF accuracy minus DNN accuracy, per regime and DNN depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyGap {
    pub regime: Regime,
    pub dnn: Classifier,
    pub gap: Option<f64>,
}

pub fn accuracy_gaps(table: &ResultTable) -> Vec<AccuracyGap> {
    let mut gaps = Vec::new();
    for row in &table.rows {
        if row.classifier == Classifier::Rf {
            continue;
        }
        let rf = table.get(Classifier::Rf, row.regime).and_then(|r| r.metrics.accuracy);
        let gap = rf.zip(row.metrics.accuracy).map(|(a, b)| a - b);
        gaps.push(AccuracyGap { regime: row.regime, dnn: row.classifier, gap });
    }
    gaps
}

pub fn render_gaps(gaps: &[AccuracyGap]) -> String {
    let mut out = String::from("RF accuracy minus DNN accuracy per regime (positive: RF ahead)\n");
    for g in gaps {
        let v = g.gap.map_or_else(|| "—".to_string(), |x| format!("{x:+.4}"));
        out.push_str(&format!("{:<6} RF - {:<7} {v}\n", g.regime.name(), g.dnn.name()));
    }
    let defined: Vec<f64> = gaps.iter().filter_map(|g| g.gap).collect();
    let ahead = defined.iter().filter(|&&x| x > 0.0).count();
    out.push_str(&format!("RF ahead in {ahead} of {} comparisons\n", defined.len()));
    out
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: ResultTable,
    pub gaps: Vec<AccuracyGap>,
    pub out_dir: PathBuf,
    /// Feature columns per regime.
    pub dims: BTreeMap<String, usize>,
    pub split: SplitPair,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    n_input_rows: usize,
    n_input_features: usize,
    train_rows_before_adasyn: usize,
    train_rows: usize,
    test_rows: usize,
    synthetic_rows: usize,
    feature_dims: &'a BTreeMap<String, usize>,
    scaling: &'static str,
}

/// Loads the configured input as a count dataset; listing input also
/// writes `features.csv` and `master.txt` into `out`.
pub fn load_input(config: &ExperimentConfig, out: Option<&Path>) -> Result<LabeledDataset> {
    if let Some(csv) = &config.features_csv {
        return LabeledDataset::load_csv(csv);
    }
    let (Some(mal), Some(ben)) = (&config.malware_dir, &config.benign_dir) else {
        return Err(Error::InvalidParams("no input configured".into()));
    };
    let ingested = ingest(mal, ben, None)?;
    if let Some(out) = out {
        ingested.dataset.save_csv(&out.join("features.csv"))?;
        ingested.master.save(&out.join("master.txt"))?;
    }
    Ok(ingested.dataset)
}

/// Trains and scores every configured (regime, classifier) cell on a given
/// partition. Every transform and model is fitted on `train` alone; `test`
/// is only transformed and scored.
pub fn run_grid(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    out_dir: &Path,
) -> Result<(ResultTable, BTreeMap<String, usize>)> {
    if train.feature_names != test.feature_names {
        return Err(Error::Format("train and test feature columns differ".into()));
    }
    fs::create_dir_all(out_dir.join("models"))?;
    fs::create_dir_all(out_dir.join("cells"))?;
    let ctx = RunContext { config, out: out_dir, input_features: train.feature_names.clone(), train, test };
    let regimes: Vec<RegimeData> = config.regimes.par_iter().map(|&r| ctx.prepare(r)).collect::<Result<_>>()?;
    let dims: BTreeMap<String, usize> = regimes.iter().map(|r| (r.regime.name().to_string(), r.train.ncols())).collect();

    let jobs: Vec<(&RegimeData, Classifier)> =
        regimes.iter().flat_map(|r| config.classifiers.iter().map(move |&c| (r, c))).collect();
    let rows: Vec<ResultRow> = jobs.par_iter().map(|&(r, c)| ctx.run_cell(r, c)).collect::<Result<_>>()?;
    Ok((ResultTable { rows }, dims))
}

/// Runs the configured grid, writing artifacts into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    fs::create_dir_all(out_dir.join("models"))?;
    fs::create_dir_all(out_dir.join("cells"))?;
    write_json(&out_dir.join("config.json"), &ExperimentConfig { out_dir: None, ..config.clone() })?;

    let data = load_input(config, Some(out_dir))?;
    let adasyn_params = AdasynParams { k: config.adasyn.k, beta: config.adasyn.beta };
    let adasyn_seed = derive_seed(config.seed, "adasyn");

    let (split, train, n_synthetic) = if config.adasyn.enabled && config.adasyn.before_split {
        let balanced = dataset::adasyn(&data, adasyn_params, adasyn_seed)?;
        let n = balanced.synthetics.len();
        let split = dataset::split(&balanced.data, config.seed)?;
        let train = split.train.clone();
        (split, train, n)
    } else {
        let split = dataset::split(&data, config.seed)?;
        if config.adasyn.enabled {
            let balanced = dataset::adasyn(&split.train, adasyn_params, adasyn_seed)?;
            let n = balanced.synthetics.len();
            (split, balanced.data, n)
        } else {
            let train = split.train.clone();
            (split, train, 0)
        }
    };
    write_json(&out_dir.join("split.json"), &split.manifest())?;

    let (table, dims) = run_grid(config, &train, &split.test, out_dir)?;
    let gaps = accuracy_gaps(&table);

    fs::write(out_dir.join("results.csv"), render_table(&table, TableFormat::Csv))?;
    fs::write(out_dir.join("results.txt"), render_table(&table, TableFormat::Text))?;
    fs::write(out_dir.join("diagnostics.txt"), render_gaps(&gaps))?;
    write_json(&out_dir.join("results.json"), &table)?;
    write_json(
        &out_dir.join("summary.json"),
        &RunSummary {
            n_input_rows: data.n_rows(),
            n_input_features: data.n_features(),
            train_rows_before_adasyn: split.train.n_rows(),
            train_rows: train.n_rows(),
            test_rows: split.test.n_rows(),
            synthetic_rows: n_synthetic,
            feature_dims: &dims,
            scaling: "RF: unscaled features; DNN: min-max scaled in None/VT, raw codes in AE regimes",
        },
    )?;

    Ok(ExperimentOutcome { table, gaps, out_dir: out_dir.to_path_buf(), dims, split })
}
