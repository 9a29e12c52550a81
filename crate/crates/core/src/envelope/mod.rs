//! Doppler spectrogram image to envelope time series: intensity
//! normalization, Otsu binarization, max-min envelope tracing, and the
//! envelope filtering chain.

mod pgm;

pub use pgm::{decode_pgm, encode_pgm};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dsp::{
    design_bandpass, filtfilt, mean_center, resample_linear, DspError, FilterKind, BAND_HIGH_HZ,
    BAND_LOW_HZ, DEFAULT_FILTER_ORDER,
};
use crate::separation::{pca_fit, SeparationError};
use crate::signal::{EnvelopePair, SignalError, TimeSeries, TARGET_FS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("image must be at least 2x2 with width*height pixels")]
    BadDimensions,
    #[error("image is constant")]
    ConstantImage,
    #[error("baseline row {row} must lie strictly inside 0..{height}")]
    InvalidBaseline { row: usize, height: usize },
    #[error("not a binary PGM (P5) file")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported PGM maxval {0}, only 255 is accepted")]
    UnsupportedMaxval(usize),
    #[error("raster holds {got} bytes, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("both envelope channels are constant")]
    DegenerateInput,
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, EnvelopeError> {
        if width < 2 || height < 2 || width.checked_mul(height) != Some(pixels.len()) {
            return Err(EnvelopeError::BadDimensions);
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, EnvelopeError> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[p as usize] += 1;
        }
        h
    }

    fn range(&self) -> (u8, u8) {
        let min = self.pixels.iter().copied().min().unwrap_or(0);
        let max = self.pixels.iter().copied().max().unwrap_or(0);
        (min, max)
    }
}

/// Min-max rescale to the full 0..=255 range.
pub fn normalize_intensity(img: &GrayImage) -> Result<GrayImage, EnvelopeError> {
    let (min, max) = img.range();
    if min == max {
        return Err(EnvelopeError::ConstantImage);
    }
    let span = (max - min) as f64;
    let pixels = img
        .pixels
        .iter()
        .map(|&p| ((p - min) as f64 * 255.0 / span).round() as u8)
        .collect();
    GrayImage::new(img.width, img.height, pixels)
}

/// Between-class variance of splitting at `t` (pixels `>= t` are foreground),
/// as the exact rational `num / den` up to the constant factor `1 / N^2`.
fn split_score(n0: u64, s0: u64, n1: u64, s1: u64) -> Option<(u128, u128)> {
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let d = (n1 as i128) * (s0 as i128) - (n0 as i128) * (s1 as i128);
    let num = d.unsigned_abs().checked_mul(d.unsigned_abs())?;
    Some((num, (n0 as u128) * (n1 as u128)))
}

/// Otsu threshold over the 256-bin histogram. Ties go to the smallest
/// threshold. Foreground is `pixel >= threshold`.
pub fn otsu_threshold(img: &GrayImage) -> Result<u8, EnvelopeError> {
    let (min, max) = img.range();
    if min == max {
        return Err(EnvelopeError::ConstantImage);
    }
    let hist = img.histogram();
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(v, &c)| v as u64 * c).sum();

    let mut best_t = 0u8;
    let mut best_exact: Option<(u128, u128)> = None;
    let mut best_float = f64::NEG_INFINITY;
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 1..=255usize {
        n0 += hist[t - 1];
        s0 += (t as u64 - 1) * hist[t - 1];
        let (n1, s1) = (total_n - n0, total_s - s0);
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = n1 as f64 * s0 as f64 - n0 as f64 * s1 as f64;
        let float = d * d / (n0 as f64 * n1 as f64);
        let exact = split_score(n0, s0, n1, s1);
        let better = match (exact, best_exact) {
            (Some((na, da)), Some((nb, db))) => match (na.checked_mul(db), nb.checked_mul(da)) {
                (Some(l), Some(r)) => l > r,
                _ => float > best_float,
            },
            (_, None) if best_float == f64::NEG_INFINITY => true,
            _ => float > best_float,
        };
        if better {
            best_t = t as u8;
            best_exact = exact;
            best_float = float;
        }
    }
    Ok(best_t)
}

/// Max-min envelope tracing around the zero-velocity row. Values are pixel
/// distances from the baseline (upper >= 0, lower <= 0), one per column,
/// sampled at `columns_per_second`.
pub fn extract_envelopes(
    img: &GrayImage,
    threshold: u8,
    baseline_row: usize,
    columns_per_second: f64,
) -> Result<EnvelopePair, EnvelopeError> {
    if baseline_row == 0 || baseline_row + 1 >= img.height {
        return Err(EnvelopeError::InvalidBaseline {
            row: baseline_row,
            height: img.height,
        });
    }
    let mut upper = Vec::with_capacity(img.width);
    let mut lower = Vec::with_capacity(img.width);
    for c in 0..img.width {
        let top = (0..baseline_row).find(|&r| img.get(r, c) >= threshold);
        upper.push(top.map_or(0.0, |r| (baseline_row - r) as f64));
        let bottom = ((baseline_row + 1)..img.height)
            .rev()
            .find(|&r| img.get(r, c) >= threshold);
        lower.push(bottom.map_or(0.0, |r| -((r - baseline_row) as f64)));
    }
    Ok(EnvelopePair::new(
        TimeSeries::new(upper, columns_per_second)?,
        TimeSeries::new(lower, columns_per_second)?,
    )?)
}

/// Fallback baseline: the interior row with the most bright pixels.
pub fn detect_baseline(img: &GrayImage, threshold: u8) -> Result<usize, EnvelopeError> {
    if img.height < 3 {
        return Err(EnvelopeError::InvalidBaseline {
            row: 0,
            height: img.height,
        });
    }
    (1..img.height - 1)
        .max_by_key(|&r| {
            let count = (0..img.width).filter(|&c| img.get(r, c) >= threshold).count();
            // prefer the upper-most row on ties
            (count, std::cmp::Reverse(r))
        })
        .ok_or(EnvelopeError::BadDimensions)
}

/// Renders envelopes as bright columns filling baseline-to-curve.
pub fn rasterize_envelopes(
    upper_px: &[f64],
    lower_px: &[f64],
    height: usize,
    baseline_row: usize,
    bright: u8,
    dark: u8,
) -> Result<GrayImage, EnvelopeError> {
    if baseline_row == 0 || baseline_row + 1 >= height {
        return Err(EnvelopeError::InvalidBaseline {
            row: baseline_row,
            height,
        });
    }
    let width = upper_px.len().min(lower_px.len());
    let mut img = GrayImage::filled(width, height, dark)?;
    for c in 0..width {
        let up = (upper_px[c].max(0.0).round() as usize).min(baseline_row);
        for r in (baseline_row - up)..baseline_row {
            img.set(r, c, bright);
        }
        let down = ((-lower_px[c]).max(0.0).round() as usize).min(height - 1 - baseline_row);
        for r in (baseline_row + 1)..=(baseline_row + down) {
            img.set(r, c, bright);
        }
    }
    Ok(img)
}

/// Mean removal, linear resampling to 284 Hz, zero-phase Bessel bandpass.
pub fn preprocess_envelopes(raw: &EnvelopePair) -> Result<EnvelopePair, EnvelopeError> {
    let filter = design_bandpass(
        FilterKind::Bessel,
        BAND_LOW_HZ,
        BAND_HIGH_HZ,
        DEFAULT_FILTER_ORDER,
        TARGET_FS,
    )?;
    let chain = |x: &TimeSeries| -> Result<TimeSeries, EnvelopeError> {
        let centered = mean_center(x);
        let resampled = resample_linear(&centered, TARGET_FS)?;
        Ok(filtfilt(&filter, &resampled)?)
    };
    Ok(EnvelopePair::new(chain(&raw.upper)?, chain(&raw.lower)?)?)
}

/// Projects the (upper, lower) pairs onto their first principal component,
/// oriented to correlate non-negatively with `upper`.
pub fn pca_compress_envelopes(pair: &EnvelopePair) -> Result<TimeSeries, EnvelopeError> {
    let n = pair.len();
    if n < 3 {
        return Err(EnvelopeError::DegenerateInput);
    }
    let data = DMatrix::from_fn(n, 2, |i, c| {
        if c == 0 {
            pair.upper.samples()[i]
        } else {
            pair.lower.samples()[i]
        }
    });
    let model = pca_fit(&data).map_err(|e| match e {
        SeparationError::DegenerateInput(_) => EnvelopeError::DegenerateInput,
        _ => EnvelopeError::DegenerateInput,
    })?;
    let mut scores: Vec<f64> = model.transform(&data, 1).column(0).iter().copied().collect();
    let up = pair.upper.samples();
    let mu_u = up.iter().sum::<f64>() / n as f64;
    let cov: f64 = scores.iter().zip(up).map(|(s, u)| s * (u - mu_u)).sum();
    if cov < 0.0 {
        scores.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(TimeSeries::new(scores, pair.fs())?)
}
