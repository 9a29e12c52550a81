//! Pearson correlation and MSE, aggregated over windows, with sign-only
//! rendering of near-zero correlations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Correlations with magnitude strictly below this are rendered as a sign.
pub const NEAR_ZERO_R: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples")]
    TooShort,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("prediction and target window counts or shapes differ")]
    ShapeMismatch,
    #[error("every window was excluded for zero variance")]
    AllWindowsExcluded,
}

pub fn pearson_r(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooShort);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::TooShort);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// Numeric with four decimals, or `+`/`-` when `|r|` is below `threshold`.
pub fn render_r(r: f64, threshold: f64) -> String {
    if r.abs() < threshold {
        if r >= 0.0 { "+" } else { "-" }.to_string()
    } else {
        format!("{r:.4}")
    }
}

/// Aggregate over one experiment's test windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mean_r: f64,
    pub mean_mse: f64,
    pub n_windows: usize,
    pub n_excluded: usize,
    pub rendered_r: String,
    /// r over all test windows concatenated per channel, channel-averaged.
    pub concat_r: Option<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "mean_r,rendered_r,mean_mse,n_windows,n_excluded,concat_r";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{},{:.6},{},{},{}",
            self.mean_r,
            self.rendered_r,
            self.mean_mse,
            self.n_windows,
            self.n_excluded,
            self.concat_r.map(|r| format!("{r:.6}")).unwrap_or_default()
        )
    }
}

/// One window: channels of equal length.
pub type Window = Vec<Vec<f64>>;

/// Per-window r (channel mean first, then window mean) and mean MSE.
/// A window counts as excluded when any of its channel pairs has zero variance.
pub fn window_metrics(pred: &[Window], truth: &[Window]) -> Result<MetricReport, EvalError> {
    window_metrics_with_threshold(pred, truth, NEAR_ZERO_R)
}

pub fn window_metrics_with_threshold(
    pred: &[Window],
    truth: &[Window],
    threshold: f64,
) -> Result<MetricReport, EvalError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(EvalError::ShapeMismatch);
    }
    let mut r_sum = 0.0;
    let mut r_count = 0usize;
    let mut mse_sum = 0.0;
    let mut n_excluded = 0;
    for (p, t) in pred.iter().zip(truth) {
        if p.len() != t.len() || p.is_empty() || p.iter().zip(t).any(|(a, b)| a.len() != b.len()) {
            return Err(EvalError::ShapeMismatch);
        }
        let flat_p: Vec<f64> = p.iter().flatten().copied().collect();
        let flat_t: Vec<f64> = t.iter().flatten().copied().collect();
        mse_sum += mse(&flat_p, &flat_t)?;
        let rs: Result<Vec<f64>, EvalError> = p.iter().zip(t).map(|(a, b)| pearson_r(a, b)).collect();
        match rs {
            Ok(rs) => {
                r_sum += rs.iter().sum::<f64>() / rs.len() as f64;
                r_count += 1;
            }
            Err(EvalError::ZeroVariance) => n_excluded += 1,
            Err(e) => return Err(e),
        }
    }
    if r_count == 0 {
        return Err(EvalError::AllWindowsExcluded);
    }
    let channels = pred[0].len();
    let concat_r = if pred.iter().all(|w| w.len() == channels) {
        let rs: Result<Vec<f64>, _> = (0..channels)
            .map(|c| {
                let a: Vec<f64> = pred.iter().flat_map(|w| w[c].iter().copied()).collect();
                let b: Vec<f64> = truth.iter().flat_map(|w| w[c].iter().copied()).collect();
                pearson_r(&a, &b)
            })
            .collect();
        rs.ok().map(|v| v.iter().sum::<f64>() / v.len() as f64)
    } else {
        None
    };
    let mean_r = r_sum / r_count as f64;
    Ok(MetricReport {
        mean_r,
        mean_mse: mse_sum / pred.len() as f64,
        n_windows: pred.len(),
        n_excluded,
        rendered_r: render_r(mean_r, threshold),
        concat_r,
    })
}
