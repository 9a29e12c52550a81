use nalgebra::DMatrix;

use super::{fastica, pca_fit, pca_remove_top, SeparationError};
use crate::dsp::zscore;
use crate::signal::{MultichannelRecording, Polarity, TimeSeries};

/// Beat-rate band (Hz) that marks an independent component as fetal.
pub const FETAL_BAND_HZ: (f64, f64) = (1.8, 3.0);

/// Minimum normalized autocorrelation at the beat lag for a component to
/// count as periodic at all.
pub const MIN_PERIODICITY: f64 = 0.25;

const RATE_SEARCH_HZ: (f64, f64) = (0.5, 4.0);
const AUTOCORR_FS: f64 = 256.0;
const POLARITY_THRESHOLD: f64 = 2.5;
const POLARITY_REFRACTORY_S: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatRate {
    pub hz: f64,
    /// Normalized autocorrelation at the chosen lag.
    pub periodicity: f64,
}

impl BeatRate {
    pub fn is_fetal(&self) -> bool {
        self.periodicity >= MIN_PERIODICITY
            && self.hz >= FETAL_BAND_HZ.0
            && self.hz <= FETAL_BAND_HZ.1
    }
}

/// Dominant beat rate from the autocorrelation of a block-averaged copy.
pub fn beat_rate(x: &[f64], fs: f64) -> BeatRate {
    let factor = ((fs / AUTOCORR_FS).floor() as usize).max(1);
    let fs_d = fs / factor as f64;
    let mut y: Vec<f64> = x
        .chunks_exact(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect();
    let mu = y.iter().sum::<f64>() / y.len().max(1) as f64;
    y.iter_mut().for_each(|v| *v -= mu);
    let energy: f64 = y.iter().map(|v| v * v).sum();
    let none = BeatRate {
        hz: 0.0,
        periodicity: 0.0,
    };
    if energy <= 0.0 {
        return none;
    }
    let min_lag = (fs_d / RATE_SEARCH_HZ.1).ceil() as usize;
    let max_lag = ((fs_d / RATE_SEARCH_HZ.0).floor() as usize).min(y.len().saturating_sub(1));
    if min_lag > max_lag {
        return none;
    }
    let ac: Vec<f64> = (min_lag..=max_lag)
        .map(|lag| y[..y.len() - lag].iter().zip(&y[lag..]).map(|(a, b)| a * b).sum::<f64>() / energy)
        .collect();
    let best = ac.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return none;
    }
    // the first local maximum close to the global one is the fundamental
    let pick = (0..ac.len())
        .find(|&i| {
            let left = i == 0 || ac[i] >= ac[i - 1];
            let right = i + 1 == ac.len() || ac[i] >= ac[i + 1];
            left && right && ac[i] >= 0.9 * best
        })
        .unwrap_or(0);
    BeatRate {
        hz: fs_d / (min_lag + pick) as f64,
        periodicity: ac[pick],
    }
}

/// Intermediate products of the extraction chain.
#[derive(Debug, Clone)]
pub struct FecgExtraction {
    pub fecg: TimeSeries,
    pub component_rates: Vec<BeatRate>,
    pub selected: Vec<usize>,
    pub ica_converged: bool,
}

pub fn extract_fecg(rec: &MultichannelRecording, seed: u64) -> Result<TimeSeries, SeparationError> {
    extract_fecg_detailed(rec, seed).map(|e| e.fecg)
}

/// Maternal removal (top principal component), ICA on the residual subspace,
/// fetal component selection by beat rate, then compression of the fetal
/// channel contributions to their first principal component.
pub fn extract_fecg_detailed(
    rec: &MultichannelRecording,
    seed: u64,
) -> Result<FecgExtraction, SeparationError> {
    if rec.n_channels() != 3 {
        return Err(SeparationError::WrongChannelCount {
            expected: 3,
            got: rec.n_channels(),
        });
    }
    let n = rec.n_samples();
    let fs = rec.source_fs();
    let data = DMatrix::from_fn(n, 3, |i, c| rec.channels()[c].samples()[i]);

    let residual = pca_remove_top(&data, 1)?;
    // removing one direction leaves a rank-2 residual
    let ica = fastica(&residual, 2, seed)?;
    let sources = ica.transform(&residual);

    let component_rates: Vec<BeatRate> = (0..sources.ncols())
        .map(|k| beat_rate(sources.column(k).as_slice(), fs))
        .collect();
    let selected: Vec<usize> = component_rates
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_fetal())
        .map(|(k, _)| k)
        .collect();
    if selected.is_empty() {
        return Err(SeparationError::NoFetalComponent);
    }

    // Each selected source is regressed onto the original channels, which
    // keeps the sign of its contribution to every electrode.
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mu = col.mean();
        col.add_scalar_mut(-mu);
    }
    let mut fetal = DMatrix::<f64>::zeros(n, 3);
    for &k in &selected {
        let s = sources.column(k);
        let energy = s.dot(&s);
        for c in 0..3 {
            let beta = centered.column(c).dot(&s) / energy;
            fetal.column_mut(c).axpy(beta, &s, 1.0);
        }
    }

    let compress = pca_fit(&fetal)?;
    let mut scores: Vec<f64> = compress.transform(&fetal, 1).column(0).iter().copied().collect();
    // orient so the output follows the summed electrode contributions
    let loading_sum: f64 = compress.components.column(0).sum();
    if loading_sum < 0.0 {
        scores.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(FecgExtraction {
        fecg: TimeSeries::new(scores, fs)?,
        component_rates,
        selected,
        ica_converged: ica.converged(),
    })
}

/// Sign of the dominant deflections of a fetal ECG.
pub fn detect_polarity(fecg: &TimeSeries) -> Result<Polarity, SeparationError> {
    if fecg.duration() < 1.0 {
        return Err(SeparationError::TooShort(fecg.duration()));
    }
    let z = match zscore(fecg) {
        Ok(z) => z,
        Err(crate::dsp::DspError::ZeroVariance) => return Err(SeparationError::NoPeaksDetected),
        Err(e) => return Err(e.into()),
    };
    let z = z.samples();
    let refractory = ((POLARITY_REFRACTORY_S * fecg.fs()).round() as usize).max(1);
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < z.len() {
        if z[i].abs() > POLARITY_THRESHOLD {
            let end = (i + refractory).min(z.len());
            let peak = (i..end)
                .max_by(|&a, &b| z[a].abs().total_cmp(&z[b].abs()))
                .unwrap_or(i);
            peaks.push(z[peak]);
            i = peak + refractory;
        } else {
            i += 1;
        }
    }
    if peaks.is_empty() {
        return Err(SeparationError::NoPeaksDetected);
    }
    peaks.sort_by(f64::total_cmp);
    let mid = peaks.len() / 2;
    let median = if peaks.len() % 2 == 0 {
        0.5 * (peaks[mid - 1] + peaks[mid])
    } else {
        peaks[mid]
    };
    Ok(if median > 0.0 {
        Polarity::Positive
    } else {
        Polarity::Negative
    })
}
