use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{rmsprop_step, RmspropState, DEFAULT_LR};
use super::{sample_loss, sample_loss_and_grad, NetConfig, NnError, PwDRecNetGrads, PwDRecNetParams, Tensor1};
use crate::signal::SampleWindowPair;

fn default_epochs() -> usize {
    50
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    DEFAULT_LR
}
fn default_val() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    /// Share of training windows held out to pick the best epoch.
    #[serde(default = "default_val")]
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr: DEFAULT_LR,
            seed: 0,
            val_fraction: default_val(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PwDRecNetParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn target_of(pair: &SampleWindowPair) -> Result<Tensor1, NnError> {
    Tensor1::from_rows(&pair.y)
}

/// Mean loss and gradient over `batch`, reduced in index order.
fn batch_gradient(
    params: &PwDRecNetParams,
    data: &[SampleWindowPair],
    batch: &[usize],
) -> Result<(f64, PwDRecNetGrads), NnError> {
    let chunk = rayon::current_num_threads().max(1) * 2;
    let mut total = PwDRecNetGrads::zeros_like(params);
    let mut loss = 0.0;
    for ids in batch.chunks(chunk) {
        let parts: Vec<(f64, PwDRecNetGrads)> = ids
            .par_iter()
            .map(|&i| sample_loss_and_grad(params, &data[i].x, &target_of(&data[i])?))
            .collect::<Result<_, _>>()?;
        for (l, g) in &parts {
            loss += l;
            total.add_assign(g);
        }
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Mean per-window loss, summed in index order.
pub fn mean_loss(params: &PwDRecNetParams, data: &[SampleWindowPair], ids: &[usize]) -> Result<f64, NnError> {
    let losses: Vec<f64> = ids
        .par_iter()
        .map(|&i| sample_loss(params, &data[i].x, &target_of(&data[i])?))
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Mini-batch RMSprop on mean-squared error. Returns the parameters of the
/// epoch with the lowest validation loss (training loss when no windows
/// are held out).
pub fn train(
    data: &[SampleWindowPair],
    net: &NetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    if data.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(0.0..1.0).contains(&cfg.val_fraction) || !(cfg.lr > 0.0) {
        return Err(NnError::InvalidConfig(format!("{cfg:?}")));
    }
    let out_channels = data[0].y.len();
    if data.iter().any(|s| s.y.len() != out_channels) {
        return Err(NnError::ShapeMismatch("mixed output channel counts".into()));
    }
    let net = net.clone().with_out_channels(out_channels);
    let mut params = PwDRecNetParams::init(net, cfg.seed)?;
    let mut state = RmspropState::for_params(&params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (data.len() as f64 * cfg.val_fraction).floor() as usize;
    let val: Vec<usize> = order[..n_val].to_vec();
    let mut train_ids: Vec<usize> = order[n_val..].to_vec();
    train_ids.sort_unstable();

    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train_ids.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_ids.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(&params, data, batch)?;
            loss_sum += loss * batch.len() as f64;
            rmsprop_step(&mut params, &grads, &mut state)?;
        }
        let train_loss = loss_sum / train_ids.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&params, data, &val)?)
        };
        let score = match val_loss {
            Some(v) => v,
            None => mean_loss(&params, data, &train_ids)?,
        };
        if score < best.0 {
            best = (score, params.clone(), epoch);
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(TrainOutcome {
        params: best.1,
        log,
        best_epoch: best.2,
    })
}
