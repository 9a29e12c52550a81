//! Data ingestion, synthetic records, preprocessing, experiments, ablation
//! grids and artifact output.

pub mod ablation;
pub mod checkpoint;
pub mod experiment;
pub mod io;
pub mod preprocess;
pub mod report;
pub mod split;
pub mod synth;

pub use ablation::{grid_by_name, run_ablation, AblationResult, CellResult, GridSpec, GRID_NAMES};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint};
pub use experiment::{
    build_windows, evaluate_model, fit_model, run_experiment, EnvelopeSelection, ExperimentConfig,
    ExperimentOutcome, ModelKind, OutputMode, TrainedModel,
};
pub use io::{load_manifests, load_record, parse_manifests};
pub use preprocess::{preprocess_record, read_dataset, write_dataset, PreprocessedRecord};
pub use split::{split, SplitMode, TRAIN_RATIO};
pub use synth::{generate_synthetic, synthesize_record, Hump, SynthRecord, SyntheticSpec};

use serde::Serialize;
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::dsp::DspError;
use crate::envelope::EnvelopeError;
use crate::eval::EvalError;
use crate::nn::NnError;
use crate::separation::SeparationError;
use crate::signal::SignalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("file not found: {0}")]
    FileMissing(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("record {0} has fewer than two windows")]
    TooFewWindows(String),
    #[error("no windows left after filtering")]
    NoWindowsAfterFilter,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Separation(#[from] SeparationError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Json(e.to_string())
    }
}

/// Machine-readable form used by the command-line tool.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::FileMissing(_) => "FileMissing",
            HarnessError::SizeMismatch(_) => "SizeMismatch",
            HarnessError::Io(_) => "Io",
            HarnessError::Json(_) => "Json",
            HarnessError::InvalidConfig(_) => "InvalidConfig",
            HarnessError::TooFewWindows(_) => "TooFewWindows",
            HarnessError::NoWindowsAfterFilter => "NoWindowsAfterFilter",
            HarnessError::Checkpoint(_) => "Checkpoint",
            HarnessError::Envelope(EnvelopeError::BadMagic) => "BadMagic",
            HarnessError::Signal(_) => "Signal",
            HarnessError::Dsp(_) => "Dsp",
            HarnessError::Separation(_) => "Separation",
            HarnessError::Envelope(_) => "Envelope",
            HarnessError::Nn(_) => "Nn",
            HarnessError::Baseline(_) => "Baseline",
            HarnessError::Eval(_) => "Eval",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: self.kind(),
            message: self.to_string(),
        }
    }
}
