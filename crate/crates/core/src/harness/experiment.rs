//! One experiment cell: window building, model fitting and evaluation.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::preprocess::PreprocessedRecord;
use super::split::{split, SplitMode, TRAIN_RATIO};
use super::HarnessError;
use crate::baselines::{
    lasso_fit, linmap_predict, ols_fit, ridge_fit, LinearMap, DEFAULT_LASSO_LAMBDA, DEFAULT_RIDGE_LAMBDA,
    LASSO_MAX_ITER, LASSO_TOL,
};
use crate::dsp::{mean_center, segment, zscore, DspError};
use crate::envelope::pca_compress_envelopes;
use crate::eval::{window_metrics, MetricReport, Window};
use crate::nn::{predict, train, EpochLog, NetConfig, PwDRecNetParams, TrainConfig, DEFAULT_LR};
use crate::signal::{Polarity, SampleWindowPair, TimeSeries, WaveConfig, WINDOW_SECONDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum EnvelopeSelection {
    Upper,
    Lower,
    #[default]
    Both,
}

impl EnvelopeSelection {
    pub fn label(self) -> &'static str {
        match self {
            EnvelopeSelection::Upper => "Upper",
            EnvelopeSelection::Lower => "Lower",
            EnvelopeSelection::Both => "Both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OutputMode {
    #[default]
    Original,
    PcaSingle,
}

impl OutputMode {
    pub fn label(self) -> &'static str {
        match self {
            OutputMode::Original => "Original",
            OutputMode::PcaSingle => "w/ PCA",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ModelKind {
    #[default]
    PwDRecNet,
    Linear,
    Ridge,
    Lasso,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::PwDRecNet => "PwDRecNet",
            ModelKind::Linear => "Regression",
            ModelKind::Ridge => "Ridge Regression",
            ModelKind::Lasso => "Lasso Regression",
        }
    }
}

fn d_window() -> f64 {
    2.0
}
fn d_batch() -> usize {
    128
}
fn d_wave() -> WaveConfig {
    WaveConfig::EAPlus
}
fn d_polarity() -> Polarity {
    Polarity::Group
}
fn d_epochs() -> usize {
    50
}
fn d_lr() -> f64 {
    DEFAULT_LR
}
fn d_ridge() -> f64 {
    DEFAULT_RIDGE_LAMBDA
}
fn d_lasso() -> f64 {
    DEFAULT_LASSO_LAMBDA
}
fn d_val() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "d_window")]
    pub window_s: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_wave")]
    pub wave_config: WaveConfig,
    #[serde(default)]
    pub envelope_selection: EnvelopeSelection,
    #[serde(default = "d_polarity")]
    pub polarity_filter: Polarity,
    #[serde(default)]
    pub output_mode: OutputMode,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default)]
    pub split: SplitMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_ridge")]
    pub ridge_lambda: f64,
    #[serde(default = "d_lasso")]
    pub lasso_lambda: f64,
    #[serde(default = "d_val")]
    pub val_fraction: f64,
    #[serde(default)]
    pub net: NetConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if !WINDOW_SECONDS.contains(&self.window_s) {
            return bad(format!("window_s {} is not one of {WINDOW_SECONDS:?}", self.window_s));
        }
        if self.batch_size == 0 || self.epochs == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("batch_size, epochs and lr must be positive".into());
        }
        if !(self.ridge_lambda >= 0.0 && self.lasso_lambda >= 0.0) {
            return bad("regularization strengths must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction {}", self.val_fraction));
        }
        self.net.validate()?;
        Ok(())
    }

    /// Target channels implied by the envelope selection and output mode.
    pub fn out_channels(&self) -> usize {
        match (self.output_mode, self.envelope_selection) {
            (OutputMode::PcaSingle, _) => 1,
            (_, EnvelopeSelection::Both) => 2,
            _ => 1,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            val_fraction: self.val_fraction,
        }
    }
}

/// A fitted model of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Net(PwDRecNetParams),
    Linear(LinearMap),
}

impl TrainedModel {
    /// Prediction for one input window, one row per target channel.
    pub fn predict(&self, x: &[f64], out_channels: usize) -> Result<Window, HarnessError> {
        match self {
            TrainedModel::Net(p) => Ok(predict(p, x)?.rows()),
            TrainedModel::Linear(m) => {
                let flat = linmap_predict(m, x)?;
                if out_channels == 0 || flat.len() != x.len() * out_channels {
                    return Err(HarnessError::InvalidConfig("linear map does not fit the window".into()));
                }
                Ok(flat.chunks(x.len()).map(<[f64]>::to_vec).collect())
            }
        }
    }
}

fn normalize_target(ts: &TimeSeries) -> Result<TimeSeries, HarnessError> {
    match zscore(ts) {
        Ok(z) => Ok(z),
        Err(DspError::ZeroVariance) => Ok(mean_center(ts)),
        Err(e) => Err(e.into()),
    }
}

/// Records admitted by the wave-configuration and polarity filters, cut
/// into windows with per-record z-scored targets.
pub fn build_windows(
    config: &ExperimentConfig,
    data: &[PreprocessedRecord],
) -> Result<Vec<SampleWindowPair>, HarnessError> {
    let mut windows = Vec::new();
    for rec in data
        .iter()
        .filter(|r| config.wave_config.admits(r.wave_config) && config.polarity_filter.admits(r.polarity))
    {
        let raw: Vec<TimeSeries> = match (config.output_mode, config.envelope_selection) {
            (OutputMode::PcaSingle, _) => vec![pca_compress_envelopes(&rec.env)?],
            (_, EnvelopeSelection::Upper) => vec![rec.env.upper.clone()],
            (_, EnvelopeSelection::Lower) => vec![rec.env.lower.clone()],
            (_, EnvelopeSelection::Both) => vec![rec.env.upper.clone(), rec.env.lower.clone()],
        };
        let targets = raw.iter().map(normalize_target).collect::<Result<Vec<_>, _>>()?;
        match segment(&rec.fecg, &targets, config.window_s, &rec.record_id) {
            Ok(w) => windows.extend(w),
            Err(DspError::SignalShorterThanWindow { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    if windows.is_empty() {
        return Err(HarnessError::NoWindowsAfterFilter);
    }
    Ok(windows)
}

/// Fits the configured model on `train_set`.
pub fn fit_model(
    config: &ExperimentConfig,
    train_set: &[SampleWindowPair],
) -> Result<(TrainedModel, Vec<EpochLog>, Vec<String>), HarnessError> {
    if train_set.is_empty() {
        return Err(HarnessError::NoWindowsAfterFilter);
    }
    if config.model == ModelKind::PwDRecNet {
        let outcome = train(train_set, &config.net, &config.train_config())?;
        let note = format!("best epoch {}", outcome.best_epoch);
        return Ok((TrainedModel::Net(outcome.params), outcome.log, vec![note]));
    }
    let len = train_set[0].len();
    let c = train_set[0].out_channels();
    let x = DMatrix::from_fn(train_set.len(), len, |i, j| train_set[i].x[j]);
    let y = DMatrix::from_fn(train_set.len(), len * c, |i, j| train_set[i].y[j / len][j % len]);
    let mut notes = Vec::new();
    let map = match config.model {
        ModelKind::Linear => ols_fit(&x, &y)?,
        ModelKind::Ridge => ridge_fit(&x, &y, config.ridge_lambda)?,
        _ => {
            let (map, report) = lasso_fit(&x, &y, config.lasso_lambda, LASSO_MAX_ITER, LASSO_TOL)?;
            if !report.converged {
                notes.push(format!("lasso stopped after {} sweeps without converging", report.iterations));
            }
            map
        }
    };
    Ok((TrainedModel::Linear(map), Vec::new(), notes))
}

pub fn predict_windows(
    model: &TrainedModel,
    windows: &[SampleWindowPair],
) -> Result<Vec<Window>, HarnessError> {
    windows
        .par_iter()
        .map(|w| model.predict(&w.x, w.out_channels()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub report: MetricReport,
    pub log: Vec<EpochLog>,
    pub notes: Vec<String>,
    pub model: TrainedModel,
    pub test: Vec<SampleWindowPair>,
    pub predictions: Vec<Window>,
}

/// Filter, window, split, fit, and score on the held-out windows.
pub fn run_experiment(
    config: &ExperimentConfig,
    data: &[PreprocessedRecord],
) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let windows = build_windows(config, data)?;
    let (train_set, test) = split(windows, config.split, TRAIN_RATIO, config.seed)?;
    let (model, log, notes) = fit_model(config, &train_set)?;
    let predictions = predict_windows(&model, &test)?;
    let truth: Vec<Window> = test.iter().map(|w| w.y.clone()).collect();
    let report = window_metrics(&predictions, &truth)?;
    Ok(ExperimentOutcome {
        config: config.clone(),
        report,
        log,
        notes,
        model,
        test,
        predictions,
    })
}

/// Scores an already fitted model on the test split implied by `config`.
pub fn evaluate_model(
    config: &ExperimentConfig,
    model: &TrainedModel,
    data: &[PreprocessedRecord],
) -> Result<MetricReport, HarnessError> {
    let windows = build_windows(config, data)?;
    let (_, test) = split(windows, config.split, TRAIN_RATIO, config.seed)?;
    let predictions = predict_windows(model, &test)?;
    let truth: Vec<Window> = test.iter().map(|w| w.y.clone()).collect();
    Ok(window_metrics(&predictions, &truth)?)
}
