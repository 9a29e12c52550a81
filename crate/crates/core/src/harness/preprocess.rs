//! Record-level preprocessing and the on-disk preprocessed dataset.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{read_file, read_samples, write_file, write_samples};
use super::HarnessError;
use crate::dsp::{
    design_bandpass, filtfilt, resample_linear, zscore, FilterKind, BAND_HIGH_HZ, BAND_LOW_HZ,
    DEFAULT_FILTER_ORDER,
};
use crate::envelope::{extract_envelopes, normalize_intensity, otsu_threshold, preprocess_envelopes, GrayImage};
use crate::separation::{detect_polarity, extract_fecg};
use crate::signal::{
    EnvelopePair, MultichannelRecording, Polarity, RecordManifest, SampleFormat, TimeSeries, WaveConfig,
    TARGET_FS,
};

/// Aligned model-ready streams of one record, both at 284 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedRecord {
    pub record_id: String,
    pub wave_config: WaveConfig,
    pub polarity: Polarity,
    pub fecg: TimeSeries,
    pub env: EnvelopePair,
}

/// fECG: channel selection, separation, z-score, resampling, Butterworth
/// bandpass. Doppler: intensity normalization, Otsu, envelope tracing,
/// envelope filtering. Both streams are cut to the shorter one.
pub fn preprocess_record(
    rec: &MultichannelRecording,
    img: &GrayImage,
    manifest: &RecordManifest,
    seed: u64,
) -> Result<PreprocessedRecord, HarnessError> {
    let selected = rec.select(&manifest.bipolar_channel_indices)?;
    let fecg_raw = extract_fecg(&selected, seed)?;
    let polarity = detect_polarity(&fecg_raw)?;
    let butter = design_bandpass(
        FilterKind::Butterworth,
        BAND_LOW_HZ,
        BAND_HIGH_HZ,
        DEFAULT_FILTER_ORDER,
        TARGET_FS,
    )?;
    let fecg = filtfilt(&butter, &resample_linear(&zscore(&fecg_raw)?, TARGET_FS)?)?;

    let norm = normalize_intensity(img)?;
    let threshold = otsu_threshold(&norm)?;
    let raw_env = extract_envelopes(
        &norm,
        threshold,
        manifest.image_baseline_row,
        manifest.image_columns_per_second,
    )?;
    let env = preprocess_envelopes(&raw_env)?;

    let n = fecg.len().min(env.len());
    Ok(PreprocessedRecord {
        record_id: manifest.record_id.clone(),
        wave_config: manifest.wave_config,
        polarity,
        fecg: fecg.truncated(n)?,
        env: env.truncated(n)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordMeta {
    record_id: String,
    wave_config: WaveConfig,
    polarity: Polarity,
    fs: f64,
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetIndex {
    records: Vec<String>,
}

fn check_id(id: &str) -> Result<(), HarnessError> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(HarnessError::InvalidConfig(format!("record id {id:?} is not a plain name")));
    }
    Ok(())
}

pub fn write_dataset(dir: &Path, records: &[PreprocessedRecord]) -> Result<(), HarnessError> {
    for r in records {
        check_id(&r.record_id)?;
        let rd = dir.join(&r.record_id);
        let meta = RecordMeta {
            record_id: r.record_id.clone(),
            wave_config: r.wave_config,
            polarity: r.polarity,
            fs: r.fecg.fs(),
            n: r.fecg.len(),
        };
        write_file(&rd.join("record.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        write_samples(&rd.join("fecg.f64"), r.fecg.samples(), SampleFormat::F64le)?;
        write_samples(&rd.join("upper.f64"), r.env.upper.samples(), SampleFormat::F64le)?;
        write_samples(&rd.join("lower.f64"), r.env.lower.samples(), SampleFormat::F64le)?;
    }
    let index = DatasetIndex {
        records: records.iter().map(|r| r.record_id.clone()).collect(),
    };
    write_file(&dir.join("dataset.json"), serde_json::to_string_pretty(&index)?.as_bytes())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<PreprocessedRecord>, HarnessError> {
    let index: DatasetIndex = serde_json::from_slice(&read_file(&dir.join("dataset.json"))?)?;
    index
        .records
        .iter()
        .map(|id| {
            check_id(id)?;
            let rd = dir.join(id);
            let meta: RecordMeta = serde_json::from_slice(&read_file(&rd.join("record.json"))?)?;
            let load = |name: &str| -> Result<TimeSeries, HarnessError> {
                let s = read_samples(&rd.join(name), SampleFormat::F64le)?;
                if s.len() != meta.n {
                    return Err(HarnessError::SizeMismatch(format!(
                        "{id}/{name}: {} samples, record.json says {}",
                        s.len(),
                        meta.n
                    )));
                }
                Ok(TimeSeries::new(s, meta.fs)?)
            };
            Ok(PreprocessedRecord {
                record_id: meta.record_id,
                wave_config: meta.wave_config,
                polarity: meta.polarity,
                fecg: load("fecg.f64")?,
                env: EnvelopePair::new(load("upper.f64")?, load("lower.f64")?)?,
            })
        })
        .collect()
}
