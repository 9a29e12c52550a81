//! Raw sample files, PGM images and manifest JSON.

use std::fs;
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::envelope::{decode_pgm, encode_pgm, GrayImage};
use crate::signal::{MultichannelRecording, RecordManifest, SampleFormat, TimeSeries};

pub fn read_file(path: &Path) -> Result<Vec<u8>, HarnessError> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HarnessError::FileMissing(path.display().to_string()),
        _ => HarnessError::Io(format!("{}: {e}", path.display())),
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Little-endian samples. Fails if the byte count is not a whole number of samples.
pub fn decode_samples(bytes: &[u8], format: SampleFormat) -> Result<Vec<f64>, HarnessError> {
    let w = format.width();
    if bytes.len() % w != 0 {
        return Err(HarnessError::SizeMismatch(format!(
            "{} bytes is not a multiple of the {w}-byte sample width",
            bytes.len()
        )));
    }
    Ok(match format {
        SampleFormat::F32le => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        SampleFormat::F64le => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    })
}

pub fn encode_samples(samples: &[f64], format: SampleFormat) -> Vec<u8> {
    match format {
        SampleFormat::F32le => samples.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
        SampleFormat::F64le => samples.iter().flat_map(|v| v.to_le_bytes()).collect(),
    }
}

pub fn read_samples(path: &Path, format: SampleFormat) -> Result<Vec<f64>, HarnessError> {
    decode_samples(&read_file(path)?, format).map_err(|e| match e {
        HarnessError::SizeMismatch(m) => HarnessError::SizeMismatch(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_samples(path: &Path, samples: &[f64], format: SampleFormat) -> Result<(), HarnessError> {
    write_file(path, &encode_samples(samples, format))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, HarnessError> {
    Ok(decode_pgm(&read_file(path)?)?)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), HarnessError> {
    write_file(path, &encode_pgm(img))
}

/// A manifest file holds either one record object or an array of them.
pub fn parse_manifests(text: &str) -> Result<Vec<RecordManifest>, HarnessError> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let list: Vec<RecordManifest> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value)?,
        _ => vec![serde_json::from_value(value)?],
    };
    if list.is_empty() {
        return Err(HarnessError::InvalidConfig("manifest lists no records".into()));
    }
    for m in &list {
        m.validate()?;
    }
    Ok(list)
}

pub fn load_manifests(path: &Path) -> Result<Vec<RecordManifest>, HarnessError> {
    let bytes = read_file(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| HarnessError::Json(format!("{}: not UTF-8", path.display())))?;
    parse_manifests(text)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads every AECG channel and the Doppler image of one record. Relative
/// paths resolve against `base_dir`.
pub fn load_record(
    manifest: &RecordManifest,
    base_dir: &Path,
) -> Result<(MultichannelRecording, GrayImage), HarnessError> {
    manifest.validate()?;
    let mut channels = Vec::with_capacity(manifest.aecg_paths.len());
    for rel in &manifest.aecg_paths {
        let samples = read_samples(&resolve(base_dir, rel), manifest.sample_format)?;
        if let Some(first) = channels.first().map(TimeSeries::len) {
            if samples.len() != first {
                return Err(HarnessError::SizeMismatch(format!(
                    "{rel}: {} samples, first channel has {first}",
                    samples.len()
                )));
            }
        }
        channels.push(TimeSeries::new(samples, manifest.aecg_fs)?);
    }
    let rec = MultichannelRecording::new(channels)?;
    let img = read_pgm(&resolve(base_dir, &manifest.pwd_image_path))?;
    if manifest.image_baseline_row == 0 || manifest.image_baseline_row + 1 >= img.height() {
        return Err(HarnessError::InvalidConfig(format!(
            "baseline row {} outside image of height {}",
            manifest.image_baseline_row,
            img.height()
        )));
    }
    Ok((rec, img))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::WaveConfig;

    #[test]
    fn sample_codecs() {
        let v = vec![1.5, -2.25, 1e-3];
        assert_eq!(decode_samples(&encode_samples(&v, SampleFormat::F64le), SampleFormat::F64le).unwrap(), v);
        let f = decode_samples(&encode_samples(&v, SampleFormat::F32le), SampleFormat::F32le).unwrap();
        assert_eq!(f[0], 1.5);
        assert_eq!(f[2], 1e-3f32 as f64);
        assert!(matches!(
            decode_samples(&[0, 0, 0, 0, 1], SampleFormat::F32le),
            Err(HarnessError::SizeMismatch(_))
        ));
    }

    #[test]
    fn manifest_object_or_array() {
        let m = RecordManifest {
            record_id: "r1".into(),
            aecg_paths: vec!["a".into(), "b".into(), "c".into()],
            pwd_image_path: "p.pgm".into(),
            aecg_fs: 2048.0,
            bipolar_channel_indices: [0, 1, 2],
            wave_config: WaveConfig::EAPlus,
            image_baseline_row: 64,
            image_columns_per_second: 200.0,
            sample_format: SampleFormat::F32le,
        };
        let one = serde_json::to_string(&m).unwrap();
        assert_eq!(parse_manifests(&one).unwrap(), vec![m.clone()]);
        let many = serde_json::to_string(&vec![m.clone(), m.clone()]).unwrap();
        assert_eq!(parse_manifests(&many).unwrap().len(), 2);
        assert!(parse_manifests("[]").is_err());
        assert!(parse_manifests("{").is_err());
        let no_format = one.replace(",\"sample_format\":\"f32le\"", "");
        assert_eq!(parse_manifests(&no_format).unwrap()[0].sample_format, SampleFormat::F32le);
    }
}
