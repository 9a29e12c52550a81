//! PCA, FastICA and the PCA-ICA-PCA chain extracting a single fetal ECG
//! channel from three bipolar abdominal channels.

mod fecg;
mod ica;
mod pca;

pub use fecg::{
    beat_rate, detect_polarity, extract_fecg, extract_fecg_detailed, BeatRate, FecgExtraction,
    FETAL_BAND_HZ, MIN_PERIODICITY,
};
pub use ica::{fastica, ComponentFit, IcaModel, ICA_MAX_ITER, ICA_TOLERANCE};
pub use pca::{pca_fit, pca_remove_top, PcaModel};

use thiserror::Error;

use crate::dsp::DspError;
use crate::signal::SignalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeparationError {
    #[error("need more samples ({samples}) than channels ({channels})")]
    InsufficientSamples { samples: usize, channels: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("requested {requested} components from {available} channels")]
    InvalidComponentCount { requested: usize, available: usize },
    #[error("covariance has rank {rank}, cannot whiten {requested} components")]
    RankDeficient { rank: usize, requested: usize },
    #[error("component {component} did not converge in {iterations} iterations")]
    NonConvergence { component: usize, iterations: usize },
    #[error("expected {expected} channels, got {got}")]
    WrongChannelCount { expected: usize, got: usize },
    #[error("no independent component has a beat rate in the fetal band")]
    NoFetalComponent,
    #[error("no peaks detected")]
    NoPeaksDetected,
    #[error("signal of {0:.3} s is too short")]
    TooShort(f64),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}
