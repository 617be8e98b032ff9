use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opdetect::dataset::LabeledDataset;
use opdetect::disasm::MasterOpcodeList;
use opdetect::experiment::{self, Classifier, ExperimentConfig, Regime, ResultTable, TableFormat};
use opdetect::{synth, Error, Result};

/// Opcode-frequency malware detection experiments.
#[derive(Parser)]
#[command(name = "opdetect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse objdump listings into an opcode count matrix.
    Ingest {
        #[arg(long)]
        malware: PathBuf,
        #[arg(long)]
        benign: PathBuf,
        /// Output directory for features.csv and master.txt.
        #[arg(long)]
        out: PathBuf,
        /// Reuse an existing opcode vocabulary instead of building one.
        #[arg(long)]
        master: Option<PathBuf>,
    },
    /// Run the classifier × feature-regime grid and print the result table.
    Run(RunArgs),
    /// Write a synthetic opcode-count corpus as CSV.
    Synth {
        #[arg(long, default_value_t = 300)]
        n_malware: usize,
        #[arg(long, default_value_t = 100)]
        n_benign: usize,
        #[arg(long, default_value_t = 60)]
        dim: usize,
        /// Total-variation distance between the class opcode profiles, in [0, 1].
        #[arg(long, default_value_t = 0.3)]
        separation: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a feature CSV with a trained grid cell from a previous run.
    Score {
        /// Cell manifest, e.g. <run>/cells/none__rf.json.
        #[arg(long)]
        cell: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with_all = ["malware", "benign"])]
    features: Option<PathBuf>,
    #[arg(long, requires = "benign")]
    malware: Option<PathBuf>,
    #[arg(long, requires = "malware")]
    benign: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: String,
    /// Comma-separated subset, e.g. "none,vt".
    #[arg(long, value_delimiter = ',')]
    regimes: Option<Vec<String>>,
    /// Comma-separated subset, e.g. "rf,dnn2l".
    #[arg(long, value_delimiter = ',')]
    classifiers: Option<Vec<String>>,
    /// Epochs for both DNN and autoencoder training.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    trees: Option<usize>,
    /// Disable ADASYN oversampling.
    #[arg(long)]
    no_adasyn: bool,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let seed = args
                .seed
                .ok_or_else(|| Error::InvalidParams("a seed is required (--seed or config)".into()))?;
            let mut c = ExperimentConfig::with_features(PathBuf::new(), seed);
            c.features_csv = None;
            c
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(f) = &args.features {
        config.features_csv = Some(f.clone());
        config.malware_dir = None;
        config.benign_dir = None;
    }
    if let (Some(m), Some(b)) = (&args.malware, &args.benign) {
        config.malware_dir = Some(m.clone());
        config.benign_dir = Some(b.clone());
        config.features_csv = None;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    if let Some(list) = &args.regimes {
        config.regimes = list.iter().map(|s| s.parse::<Regime>()).collect::<Result<_>>()?;
    }
    if let Some(list) = &args.classifiers {
        config.classifiers = list.iter().map(|s| s.parse::<Classifier>()).collect::<Result<_>>()?;
    }
    if let Some(e) = args.epochs {
        config.dnn.train.epochs = e;
        config.autoencoder.train.epochs = e;
    }
    if let Some(t) = args.trees {
        config.rf.n_trees = t;
    }
    if args.no_adasyn {
        config.adasyn.enabled = false;
    }
    Ok(config)
}

fn check_input(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InputNotFound(path.to_path_buf()))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { malware, benign, out, master } => {
            let master = master.map(|p| MasterOpcodeList::load(&p)).transpose()?;
            let ingested = experiment::ingest(&malware, &benign, master.as_ref())?;
            std::fs::create_dir_all(&out)?;
            ingested.dataset.save_csv(&out.join("features.csv"))?;
            ingested.master.save(&out.join("master.txt"))?;
            let unseen: u64 = ingested.unseen.iter().sum();
            eprintln!(
                "{} files, {} opcodes, {} occurrences outside the vocabulary",
                ingested.dataset.n_rows(),
                ingested.master.len(),
                unseen
            );
        }
        Command::Run(args) => {
            let format: TableFormat = args.format.parse()?;
            let config = build_config(&args)?;
            let out = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("opdetect-run"));
            let outcome = experiment::run_experiment(&config, &out)?;
            print!("{}", experiment::render_table(&outcome.table, format));
            eprint!("{}", experiment::render_gaps(&outcome.gaps));
            eprintln!("artifacts written to {}", out.display());
        }
        Command::Synth { n_malware, n_benign, dim, separation, seed, out } => {
            let data = synth::generate_synthetic_corpus(n_malware, n_benign, dim, separation, seed)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            data.save_csv(&out)?;
        }
        Command::Score { cell, features, format } => {
            let format: TableFormat = format.parse()?;
            check_input(&features)?;
            let data = LabeledDataset::load_csv(&features)?;
            let row = experiment::score(&cell, &data)?;
            print!("{}", experiment::render_table(&ResultTable { rows: vec![row] }, format));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
