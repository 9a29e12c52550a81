//! Filtering, resampling, normalization and windowing.

mod filter;

pub use filter::{
    bessel_poles, butterworth_poles, design_bandpass, filtfilt, reverse_bessel_coefficients,
    Biquad, FilterKind, IirFilter,
};

use thiserror::Error;

use crate::signal::{window_len, SampleWindowPair, SignalError, TimeSeries, TARGET_FS};

/// Prototype order used for both preprocessing filters.
pub const DEFAULT_FILTER_ORDER: usize = 4;
pub const BAND_LOW_HZ: f64 = 0.1;
pub const BAND_HIGH_HZ: f64 = 50.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid band [{low}, {high}] Hz at fs {fs} Hz")]
    InvalidBand { low: f64, high: f64, fs: f64 },
    #[error("filter order must be even and >= 2, got {0}")]
    InvalidOrder(usize),
    #[error("designed filter has a pole on or outside the unit circle")]
    NumericalInstability,
    #[error("signal of {len} samples is too short, need at least {required}")]
    SignalTooShort { len: usize, required: usize },
    #[error("sampling rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("signal of {len} samples is shorter than a {window} sample window")]
    SignalShorterThanWindow { len: usize, window: usize },
    #[error("streams differ in length or sampling rate")]
    StreamMismatch,
    #[error("unsupported window length {0} s")]
    UnsupportedWindow(f64),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Linear interpolation onto a uniform grid at `fs_out`.
pub fn resample_linear(x: &TimeSeries, fs_out: f64) -> Result<TimeSeries, DspError> {
    if !(fs_out.is_finite() && fs_out > 0.0) {
        return Err(DspError::InvalidRate(fs_out));
    }
    if fs_out == x.fs() {
        return Ok(x.clone());
    }
    let src = x.samples();
    let n_in = src.len();
    let n_out = ((n_in as f64) * fs_out / x.fs()).round().max(1.0) as usize;
    let step = x.fs() / fs_out;
    let out = (0..n_out)
        .map(|j| {
            if n_in == 1 {
                return src[0];
            }
            let pos = j as f64 * step;
            // the last segment extends past the end so affine signals stay exact
            let i = (pos.floor() as usize).min(n_in - 2);
            let frac = pos - i as f64;
            src[i] + frac * (src[i + 1] - src[i])
        })
        .collect();
    Ok(TimeSeries::new(out, fs_out)?)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
fn std_dev(x: &[f64], mu: f64) -> f64 {
    (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn zscore(x: &TimeSeries) -> Result<TimeSeries, DspError> {
    let s = x.samples();
    if s.len() < 2 {
        return Err(DspError::SignalTooShort {
            len: s.len(),
            required: 2,
        });
    }
    let mu = mean(s);
    let sd = std_dev(s, mu);
    let scale = s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(sd > 1e-12 * scale) {
        return Err(DspError::ZeroVariance);
    }
    Ok(x.with_samples(s.iter().map(|v| (v - mu) / sd).collect())?)
}

/// Removes the mean (DC component).
pub fn mean_center(x: &TimeSeries) -> TimeSeries {
    let s = x.samples();
    let mu = mean(s);
    x.with_samples(s.iter().map(|v| v - mu).collect())
        .expect("centering preserves length and finiteness")
}

/// Splits aligned 284 Hz streams into consecutive non-overlapping windows.
/// The trailing remainder shorter than one window is dropped.
pub fn segment(
    x: &TimeSeries,
    y_channels: &[TimeSeries],
    window_s: f64,
    record_id: &str,
) -> Result<Vec<SampleWindowPair>, DspError> {
    segment_with_overlap(x, y_channels, window_s, 0.0, record_id)
}

/// As [`segment`], with windows advancing by `window * (1 - overlap)`.
pub fn segment_with_overlap(
    x: &TimeSeries,
    y_channels: &[TimeSeries],
    window_s: f64,
    overlap: f64,
    record_id: &str,
) -> Result<Vec<SampleWindowPair>, DspError> {
    if !crate::signal::WINDOW_SECONDS.contains(&window_s) {
        return Err(DspError::UnsupportedWindow(window_s));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(DspError::UnsupportedWindow(window_s));
    }
    if x.fs() != TARGET_FS
        || y_channels.is_empty()
        || y_channels.iter().any(|y| y.fs() != TARGET_FS || y.len() != x.len())
    {
        return Err(DspError::StreamMismatch);
    }
    let len = window_len(window_s);
    let n = x.len();
    if n < len {
        return Err(DspError::SignalShorterThanWindow { len: n, window: len });
    }
    let hop = ((len as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= n {
        let xw = x.samples()[start..start + len].to_vec();
        let yw = y_channels
            .iter()
            .map(|y| y.samples()[start..start + len].to_vec())
            .collect();
        out.push(SampleWindowPair::new(xw, yw, start as f64 / TARGET_FS, record_id)?);
        start += hop;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: Vec<f64>, fs: f64) -> TimeSeries {
        TimeSeries::new(v, fs).unwrap()
    }

    #[test]
    fn resample_identity_and_ramp() {
        let x = ts(vec![3.0, 1.0, 4.0, 1.0, 5.0], 10.0);
        assert_eq!(resample_linear(&x, 10.0).unwrap(), x);

        let ramp = ts((0..2048).map(|i| i as f64).collect(), 2048.0);
        let out = resample_linear(&ramp, 284.0).unwrap();
        assert_eq!(out.len(), 284);
        assert_eq!(out.fs(), 284.0);
        for (j, v) in out.samples().iter().enumerate() {
            let t = j as f64 / 284.0;
            assert!((v - t * 2048.0).abs() < 1e-9);
        }
        // upsampling keeps affine signals exact, including past the last sample
        let up = resample_linear(&ts(vec![1.0, 3.0, 5.0], 1.0), 4.0).unwrap();
        assert_eq!(up.len(), 12);
        for (j, v) in up.samples().iter().enumerate() {
            assert!((v - (1.0 + 2.0 * j as f64 / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_examples() {
        let z = zscore(&ts(vec![1.0, 2.0, 3.0], 1.0)).unwrap();
        let s = z.samples();
        assert!(mean(s).abs() < 1e-12);
        assert!((std_dev(s, 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(zscore(&ts(vec![2.0; 5], 1.0)), Err(DspError::ZeroVariance));
    }

    #[test]
    fn mean_center_examples() {
        assert_eq!(mean_center(&ts(vec![5.0; 3], 1.0)).samples(), &[0.0, 0.0, 0.0]);
        assert_eq!(mean_center(&ts(vec![1.0, 2.0, 3.0], 1.0)).samples(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn segment_examples() {
        let mk = |n: usize| ts((0..n).map(|i| i as f64).collect(), TARGET_FS);
        let w = segment(&mk(568), &[mk(568)], 2.0, "r").unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].len(), 568);
        let w = segment(&mk(1420), &[mk(1420), mk(1420)], 2.0, "r").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].t_start, 2.0);
        assert_eq!(w[1].out_channels(), 2);
        assert!(matches!(
            segment(&mk(100), &[mk(100)], 2.0, "r"),
            Err(DspError::SignalShorterThanWindow { len: 100, window: 568 })
        ));
        assert!(matches!(
            segment(&mk(600), &[mk(600)], 0.3, "r"),
            Err(DspError::UnsupportedWindow(_))
        ));
    }

    #[test]
    fn overlapping_segments_advance_by_hop() {
        let x = ts((0..284).map(|i| i as f64).collect(), TARGET_FS);
        let w = segment_with_overlap(&x, &[x.clone()], 0.5, 0.5, "r").unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[1].x[0], 71.0);
    }

    proptest! {
        #[test]
        fn zscore_idempotent(v in proptest::collection::vec(-1e3f64..1e3, 3..200)) {
            let x = ts(v, 10.0);
            if let Ok(z1) = zscore(&x) {
                let z2 = zscore(&z1).unwrap();
                for (a, b) in z1.samples().iter().zip(z2.samples()) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn mean_center_idempotent_and_zero_mean(v in proptest::collection::vec(-1e6f64..1e6, 1..200)) {
            let x = ts(v, 10.0);
            let c = mean_center(&x);
            let max = x.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(mean(c.samples()).abs() <= 1e-12 * max.max(1.0));
            let cc = mean_center(&c);
            for (a, b) in c.samples().iter().zip(cc.samples()) {
                prop_assert!((a - b).abs() <= 1e-9 * max.max(1.0));
            }
        }

        #[test]
        fn segments_reproduce_prefix(n in 71usize..2000, wi in 0usize..5) {
            let window_s = crate::signal::WINDOW_SECONDS[wi];
            let x = ts((0..n).map(|i| (i as f64 * 0.37).sin()).collect(), TARGET_FS);
            match segment(&x, &[x.clone()], window_s, "r") {
                Ok(ws) => {
                    let cat: Vec<f64> = ws.iter().flat_map(|w| w.x.clone()).collect();
                    prop_assert_eq!(&cat[..], &x.samples()[..cat.len()]);
                    prop_assert_eq!(cat.len(), (n / window_len(window_s)) * window_len(window_s));
                }
                Err(e) => {
                    let short = matches!(e, DspError::SignalShorterThanWindow { .. });
                    prop_assert!(short);
                }
            }
        }

        #[test]
        fn filtfilt_is_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 400;
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = design_bandpass(FilterKind::Butterworth, 0.1, 50.0, 4, TARGET_FS).unwrap();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let lhs = filtfilt(&f, &ts(mix, TARGET_FS)).unwrap();
            let fx = filtfilt(&f, &ts(x, TARGET_FS)).unwrap();
            let fy = filtfilt(&f, &ts(y, TARGET_FS)).unwrap();
            let scale = lhs.samples().iter().fold(1e-12f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let rhs = a * fx.samples()[i] + b * fy.samples()[i];
                prop_assert!((lhs.samples()[i] - rhs).abs() <= 1e-6 * scale);
            }
        }
    }
}
