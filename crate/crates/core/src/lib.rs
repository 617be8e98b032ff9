//! Static malware detection from opcode frequencies.
//!
//! The crate covers the whole pipeline: parsing `objdump -d` listings into
//! opcode sequences, building per-file frequency vectors over a corpus-wide
//! master opcode list, balancing with ADASYN, variance-threshold selection,
//! autoencoder feature extraction, and the two classifier families compared
//! on those features (a bagged Gini forest and ELU/sigmoid dense networks).
//! [`experiment`] wires the stages into the classifier × feature-regime grid.

pub mod autoencoder;
pub mod dataset;
pub mod disasm;
pub mod error;
pub mod experiment;
pub mod forest;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
