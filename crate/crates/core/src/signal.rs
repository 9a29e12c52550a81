//! Shared signal vocabulary: time series, recordings, envelope pairs,
//! windows, and the record manifest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Common time base of every stream fed to the models, in Hz.
pub const TARGET_FS: f64 = 284.0;

/// Window lengths (seconds) studied by the ablation grids.
pub const WINDOW_SECONDS: [f64; 5] = [0.25, 0.5, 0.75, 1.0, 2.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("time series must contain at least one sample")]
    Empty,
    #[error("sampling rate must be finite and positive, got {0}")]
    InvalidRate(f64),
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("recording has no channels")]
    NoChannels,
    #[error("channel {index} disagrees with channel 0 in length or sampling rate")]
    ChannelMismatch { index: usize },
    #[error("envelope channels differ in length or sampling rate")]
    EnvelopeMismatch,
    #[error("window fields are inconsistent: {0}")]
    BadWindow(String),
    #[error("invalid manifest: {0}")]
    BadManifest(String),
}

/// A uniformly sampled, finite, non-empty real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<f64>,
    fs: f64,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self, SignalError> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(SignalError::InvalidRate(fs));
        }
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFinite { index });
        }
        Ok(Self { samples, fs })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds, `len / fs`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same sampling rate, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self, SignalError> {
        Self::new(samples, self.fs)
    }

    /// First `n` samples (clamped to the available length).
    pub fn truncated(&self, n: usize) -> Result<Self, SignalError> {
        let n = n.min(self.samples.len());
        Self::new(self.samples[..n].to_vec(), self.fs)
    }

    pub fn negated(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|v| -v).collect(),
            fs: self.fs,
        }
    }
}

/// Free-function form of [`TimeSeries::duration`].
pub fn duration(ts: &TimeSeries) -> f64 {
    ts.duration()
}

/// Window length in samples at the common 284 Hz time base.
pub fn window_len(window_s: f64) -> usize {
    (window_s * TARGET_FS).round() as usize
}

/// Channels acquired together; all share length and sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecording {
    channels: Vec<TimeSeries>,
    source_fs: f64,
}

impl MultichannelRecording {
    pub fn new(channels: Vec<TimeSeries>) -> Result<Self, SignalError> {
        let first = channels.first().ok_or(SignalError::NoChannels)?;
        let (len, fs) = (first.len(), first.fs());
        for (index, ch) in channels.iter().enumerate().skip(1) {
            if ch.len() != len || ch.fs() != fs {
                return Err(SignalError::ChannelMismatch { index });
            }
        }
        Ok(Self {
            channels,
            source_fs: fs,
        })
    }

    pub fn channels(&self) -> &[TimeSeries] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn source_fs(&self) -> f64 {
        self.source_fs
    }

    /// Keeps the listed channels in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self, SignalError> {
        let mut out = Vec::with_capacity(indices.len());
        for &i in indices {
            let ch = self.channels.get(i).ok_or_else(|| {
                SignalError::BadManifest(format!(
                    "channel index {i} out of range for {} channels",
                    self.channels.len()
                ))
            })?;
            out.push(ch.clone());
        }
        Self::new(out)
    }
}

/// Upper and lower Doppler envelopes on one time base.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePair {
    pub upper: TimeSeries,
    pub lower: TimeSeries,
}

impl EnvelopePair {
    pub fn new(upper: TimeSeries, lower: TimeSeries) -> Result<Self, SignalError> {
        if upper.len() != lower.len() || upper.fs() != lower.fs() {
            return Err(SignalError::EnvelopeMismatch);
        }
        Ok(Self { upper, lower })
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn fs(&self) -> f64 {
        self.upper.fs()
    }

    pub fn truncated(&self, n: usize) -> Result<Self, SignalError> {
        Self::new(self.upper.truncated(n)?, self.lower.truncated(n)?)
    }

    pub fn swapped(&self) -> Self {
        Self {
            upper: self.lower.clone(),
            lower: self.upper.clone(),
        }
    }
}

/// Orientation of the Doppler cycle, taken from record metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveConfig {
    #[serde(rename = "EA+")]
    EAPlus,
    #[serde(rename = "EA-")]
    EAMinus,
    #[serde(rename = "Group")]
    Group,
}

impl WaveConfig {
    pub fn label(self) -> &'static str {
        match self {
            WaveConfig::EAPlus => "EA+",
            WaveConfig::EAMinus => "EA-",
            WaveConfig::Group => "Group",
        }
    }

    /// Whether a record labelled `record` passes this filter.
    pub fn admits(self, record: WaveConfig) -> bool {
        self == WaveConfig::Group || self == record
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Positive,
    Negative,
    Group,
}

impl Polarity {
    pub fn label(self) -> &'static str {
        match self {
            Polarity::Positive => "+ve",
            Polarity::Negative => "-ve",
            Polarity::Group => "Group",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
            Polarity::Group => Polarity::Group,
        }
    }

    pub fn admits(self, record: Polarity) -> bool {
        self == Polarity::Group || self == record
    }
}

/// One aligned (input, target) training window.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindowPair {
    /// fECG window, length L.
    pub x: Vec<f64>,
    /// Target channels, each of length L.
    pub y: Vec<Vec<f64>>,
    pub t_start: f64,
    pub record_id: String,
}

impl SampleWindowPair {
    pub fn new(
        x: Vec<f64>,
        y: Vec<Vec<f64>>,
        t_start: f64,
        record_id: impl Into<String>,
    ) -> Result<Self, SignalError> {
        if x.is_empty() {
            return Err(SignalError::BadWindow("empty input window".into()));
        }
        if y.is_empty() || y.len() > 2 {
            return Err(SignalError::BadWindow(format!(
                "target must have 1 or 2 channels, got {}",
                y.len()
            )));
        }
        if y.iter().any(|c| c.len() != x.len()) {
            return Err(SignalError::BadWindow(
                "target and input lengths differ".into(),
            ));
        }
        Ok(Self {
            x,
            y,
            t_start,
            record_id: record_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn out_channels(&self) -> usize {
        self.y.len()
    }
}

/// Per-record metadata. Paths are resolved relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordManifest {
    pub record_id: String,
    pub aecg_paths: Vec<String>,
    pub pwd_image_path: String,
    pub aecg_fs: f64,
    pub bipolar_channel_indices: [usize; 3],
    pub wave_config: WaveConfig,
    pub image_baseline_row: usize,
    pub image_columns_per_second: f64,
    #[serde(default)]
    pub sample_format: SampleFormat,
}

/// Encoding of raw sample files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    F32le,
    F64le,
}

impl SampleFormat {
    pub fn width(self) -> usize {
        match self {
            SampleFormat::F32le => 4,
            SampleFormat::F64le => 8,
        }
    }
}

impl RecordManifest {
    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: String| Err(SignalError::BadManifest(m));
        if self.record_id.is_empty() {
            return bad("empty record_id".into());
        }
        if !(self.aecg_fs.is_finite() && self.aecg_fs > 0.0) {
            return bad(format!("aecg_fs must be positive, got {}", self.aecg_fs));
        }
        if !(self.image_columns_per_second.is_finite() && self.image_columns_per_second > 0.0) {
            return bad(format!(
                "image_columns_per_second must be positive, got {}",
                self.image_columns_per_second
            ));
        }
        let [a, b, c] = self.bipolar_channel_indices;
        if a == b || a == c || b == c {
            return bad("bipolar channel indices must be distinct".into());
        }
        let n = self.aecg_paths.len();
        if let Some(&i) = self.bipolar_channel_indices.iter().find(|&&i| i >= n) {
            return bad(format!("bipolar channel index {i} out of range for {n} channels"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_examples() {
        for (n, secs) in [(568, 2.0), (284, 1.0), (213, 0.75)] {
            let ts = TimeSeries::new(vec![0.0; n], TARGET_FS).unwrap();
            assert_eq!(duration(&ts), secs);
        }
    }

    #[test]
    fn window_lengths_round_to_nearest() {
        let lens: Vec<usize> = WINDOW_SECONDS.iter().map(|&s| window_len(s)).collect();
        assert_eq!(lens, vec![71, 142, 213, 284, 568]);
    }

    #[test]
    fn construction_rejects_invalid() {
        assert_eq!(TimeSeries::new(vec![], 1.0), Err(SignalError::Empty));
        assert!(matches!(
            TimeSeries::new(vec![1.0], 0.0),
            Err(SignalError::InvalidRate(_))
        ));
        assert!(matches!(
            TimeSeries::new(vec![1.0, f64::NAN], 1.0),
            Err(SignalError::NonFinite { index: 1 })
        ));
        let a = TimeSeries::new(vec![0.0; 4], 10.0).unwrap();
        let b = TimeSeries::new(vec![0.0; 5], 10.0).unwrap();
        assert!(matches!(
            MultichannelRecording::new(vec![a.clone(), b.clone()]),
            Err(SignalError::ChannelMismatch { index: 1 })
        ));
        assert_eq!(
            EnvelopePair::new(a.clone(), b),
            Err(SignalError::EnvelopeMismatch)
        );
        assert!(SampleWindowPair::new(vec![1.0; 3], vec![vec![0.0; 2]], 0.0, "r").is_err());
    }

    #[test]
    fn manifest_validation() {
        let mut m = RecordManifest {
            record_id: "r01".into(),
            aecg_paths: vec!["a".into(), "b".into(), "c".into()],
            pwd_image_path: "img.pgm".into(),
            aecg_fs: 2048.0,
            bipolar_channel_indices: [0, 1, 2],
            wave_config: WaveConfig::EAPlus,
            image_baseline_row: 10,
            image_columns_per_second: 100.0,
            sample_format: SampleFormat::F32le,
        };
        assert!(m.validate().is_ok());
        m.bipolar_channel_indices = [0, 0, 2];
        assert!(m.validate().is_err());
        m.bipolar_channel_indices = [0, 1, 3];
        assert!(m.validate().is_err());
        m.bipolar_channel_indices = [0, 1, 2];
        m.image_columns_per_second = 0.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn wave_config_serde_labels() {
        let s = serde_json::to_string(&WaveConfig::EAMinus).unwrap();
        assert_eq!(s, "\"EA-\"");
        assert!(WaveConfig::Group.admits(WaveConfig::EAMinus));
        assert!(!WaveConfig::EAPlus.admits(WaveConfig::EAMinus));
    }
}
