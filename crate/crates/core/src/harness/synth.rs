//! Synthetic aligned AECG + Doppler records with known ground truth.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::io::{write_file, write_pgm, write_samples};
use super::HarnessError;
use crate::envelope::{rasterize_envelopes, GrayImage};
use crate::signal::{Polarity, RecordManifest, SampleFormat, WaveConfig};

/// Timing of one Doppler hump after the fetal R peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hump {
    pub latency_ms: f64,
    pub width_ms: f64,
    /// Peak height in image pixels.
    pub height_px: f64,
}

fn d_records() -> usize {
    20
}
fn d_duration() -> f64 {
    20.0
}
fn d_fs() -> f64 {
    2048.0
}
fn d_fetal() -> [f64; 2] {
    [120.0, 160.0]
}
fn d_maternal() -> [f64; 2] {
    [70.0, 90.0]
}
fn d_ratio() -> f64 {
    10.0
}
fn d_noise() -> f64 {
    0.01
}
fn d_hrv() -> f64 {
    0.02
}
fn d_v() -> Hump {
    Hump {
        latency_ms: 100.0,
        width_ms: 35.0,
        height_px: 35.0,
    }
}
fn d_e() -> Hump {
    Hump {
        latency_ms: 210.0,
        width_ms: 30.0,
        height_px: 40.0,
    }
}
fn d_a() -> Hump {
    Hump {
        latency_ms: 310.0,
        width_ms: 25.0,
        height_px: 50.0,
    }
}
fn d_height() -> usize {
    128
}
fn d_baseline() -> usize {
    64
}
fn d_cps() -> f64 {
    200.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "d_records")]
    pub n_records: usize,
    #[serde(default = "d_duration")]
    pub duration_s: f64,
    #[serde(default = "d_fs")]
    pub aecg_fs: f64,
    #[serde(default = "d_fetal")]
    pub fetal_bpm: [f64; 2],
    #[serde(default = "d_maternal")]
    pub maternal_bpm: [f64; 2],
    /// Maternal to fetal peak amplitude.
    #[serde(default = "d_ratio")]
    pub amplitude_ratio: f64,
    #[serde(default = "d_noise")]
    pub noise_sigma: f64,
    /// Relative beat-to-beat interval spread.
    #[serde(default = "d_hrv")]
    pub hrv: f64,
    #[serde(default = "d_v")]
    pub v_wave: Hump,
    #[serde(default = "d_e")]
    pub e_wave: Hump,
    #[serde(default = "d_a")]
    pub a_wave: Hump,
    /// Standard deviation of the Doppler beat timing relative to the ECG.
    #[serde(default)]
    pub jitter_ms: f64,
    /// Extra timing spread for records whose wave configuration does not
    /// match their fECG polarity (EA+ with negative, EA- with positive).
    #[serde(default)]
    pub mismatch_jitter_ms: f64,
    #[serde(default)]
    pub ea_minus_fraction: f64,
    #[serde(default)]
    pub negative_polarity_fraction: f64,
    #[serde(default = "d_height")]
    pub image_height: usize,
    #[serde(default = "d_baseline")]
    pub image_baseline_row: usize,
    #[serde(default = "d_cps")]
    pub image_columns_per_second: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(format!("synthetic spec: {m}")));
        let positive = [
            self.duration_s,
            self.aecg_fs,
            self.fetal_bpm[0],
            self.maternal_bpm[0],
            self.amplitude_ratio,
            self.image_columns_per_second,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("rates, duration and amplitude ratio must be positive");
        }
        if self.fetal_bpm[1] < self.fetal_bpm[0] || self.maternal_bpm[1] < self.maternal_bpm[0] {
            return bad("bpm ranges must be ordered");
        }
        if self.n_records == 0 || self.n_records > 100_000 {
            return bad("n_records out of range");
        }
        if self.duration_s * self.aecg_fs > 5e7 || self.duration_s * self.image_columns_per_second > 1e7 {
            return bad("record too long");
        }
        let others = [self.noise_sigma, self.hrv, self.jitter_ms, self.mismatch_jitter_ms];
        if others.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.hrv >= 0.5 {
            return bad("noise, hrv and jitter must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.ea_minus_fraction) || !(0.0..=1.0).contains(&self.negative_polarity_fraction) {
            return bad("fractions must lie in [0, 1]");
        }
        let (v, e, a) = (self.v_wave, self.e_wave, self.a_wave);
        for h in [v, e, a] {
            if !(h.latency_ms >= 0.0 && h.width_ms > 0.0 && h.height_px >= 0.0 && h.height_px.is_finite()) {
                return bad("hump latencies, widths and heights must be valid");
            }
        }
        if !(v.latency_ms < e.latency_ms && e.latency_ms < a.latency_ms) {
            return bad("latencies must satisfy V < E < A");
        }
        if (a.latency_ms + 2.0 * a.width_ms) / 1000.0 >= 60.0 / self.fetal_bpm[1] {
            return bad("A wave must end before the next fetal beat");
        }
        if self.image_baseline_row == 0 || self.image_baseline_row + 1 >= self.image_height || self.image_height > 4096 {
            return bad("baseline row must be inside the image");
        }
        Ok(())
    }
}

/// One record held in memory, with the clean sources used to build it.
#[derive(Debug, Clone)]
pub struct SynthRecord {
    pub record_id: String,
    pub wave_config: WaveConfig,
    pub polarity: Polarity,
    pub fetal_bpm: f64,
    pub maternal_bpm: f64,
    /// Three mixed abdominal channels at `aecg_fs`.
    pub channels: Vec<Vec<f64>>,
    pub fetal_source: Vec<f64>,
    pub maternal_source: Vec<f64>,
    pub fetal_beats: Vec<f64>,
    /// Envelopes in pixels from the baseline, one value per image column.
    pub upper_px: Vec<f64>,
    pub lower_px: Vec<f64>,
    pub image: GrayImage,
}

/// (offset s, amplitude, width s) of P, Q, R, S, T.
const FETAL_WAVES: [(f64, f64, f64); 5] = [
    (-0.06, 0.12, 0.012),
    (-0.012, -0.15, 0.004),
    (0.0, 1.0, 0.005),
    (0.012, -0.3, 0.005),
    (0.10, 0.3, 0.02),
];
const MATERNAL_WAVES: [(f64, f64, f64); 5] = [
    (-0.2, 0.15, 0.025),
    (-0.03, -0.1, 0.008),
    (0.0, 1.0, 0.012),
    (0.03, -0.25, 0.01),
    (0.3, 0.35, 0.05),
];

fn gauss(t: f64, w: f64) -> f64 {
    (-0.5 * (t / w).powi(2)).exp()
}

fn beat_times(rng: &mut ChaCha8Rng, bpm: f64, hrv: f64, duration: f64) -> Vec<f64> {
    let rr = 60.0 / bpm;
    let mut t = rng.random_range(0.0..rr);
    let mut beats = Vec::new();
    // one beat before the start so its tail is present at t = 0
    beats.push(t - rr);
    while t < duration + rr {
        beats.push(t);
        let z: f64 = rng.sample(StandardNormal);
        t += rr * (1.0 + hrv * z.clamp(-3.0, 3.0));
    }
    beats
}

/// Adds `amp * template(t - beat)` for every beat into `out`.
fn render_waves(out: &mut [f64], fs: f64, beats: &[f64], amps: &[f64], waves: &[(f64, f64, f64)]) {
    let reach = waves.iter().map(|w| w.0.abs() + 5.0 * w.2).fold(0.0, f64::max);
    for (&b, &amp) in beats.iter().zip(amps) {
        let i0 = (((b - reach) * fs).floor().max(0.0)) as usize;
        let i1 = (((b + reach) * fs).ceil().max(0.0) as usize).min(out.len());
        for (i, v) in out.iter_mut().enumerate().take(i1).skip(i0) {
            let t = i as f64 / fs - b;
            *v += amp * waves.iter().map(|&(o, a, w)| a * gauss(t - o, w)).sum::<f64>();
        }
    }
}

fn render_hump(out: &mut [f64], fs: f64, beats: &[f64], scale: &[f64], hump: Hump, sign: f64) {
    let waves = [(hump.latency_ms / 1000.0, hump.height_px * sign, hump.width_ms / 1000.0)];
    render_waves(out, fs, beats, scale, &waves);
}

pub fn synthesize_record(spec: &SyntheticSpec, index: usize) -> Result<SynthRecord, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);

    // every draw below happens unconditionally so that changing a fraction
    // or a jitter setting leaves the remaining stream intact
    let wave_u: f64 = rng.random();
    let pol_u: f64 = rng.random();
    let wave_config = if wave_u < spec.ea_minus_fraction {
        WaveConfig::EAMinus
    } else {
        WaveConfig::EAPlus
    };
    let polarity = if pol_u < spec.negative_polarity_fraction {
        Polarity::Negative
    } else {
        Polarity::Positive
    };
    let fetal_bpm = rng.random_range(spec.fetal_bpm[0]..=spec.fetal_bpm[1]);
    let maternal_bpm = rng.random_range(spec.maternal_bpm[0]..=spec.maternal_bpm[1]);
    // the middle lead sees the maternal heart reversed, which keeps the
    // fetal lead field away from the maternal one
    let mut mixing = [[0.0f64; 2]; 3];
    for (c, row) in mixing.iter_mut().enumerate() {
        let sign = if c == 1 { -1.0 } else { 1.0 };
        row[0] = sign * rng.random_range(0.5..1.5);
        row[1] = rng.random_range(0.5..1.5);
    }

    let n = (spec.duration_s * spec.aecg_fs).round() as usize;
    let fs = spec.aecg_fs;
    let fetal_beats = beat_times(&mut rng, fetal_bpm, spec.hrv, spec.duration_s);
    let maternal_beats = beat_times(&mut rng, maternal_bpm, spec.hrv, spec.duration_s);
    let fetal_amp: Vec<f64> = fetal_beats.iter().map(|_| rng.random_range(0.9..1.1)).collect();
    let maternal_amp: Vec<f64> = maternal_beats.iter().map(|_| rng.random_range(0.9..1.1)).collect();

    let sign = if polarity == Polarity::Negative { -1.0 } else { 1.0 };
    let mut fetal_source = vec![0.0; n];
    render_waves(&mut fetal_source, fs, &fetal_beats, &fetal_amp, &FETAL_WAVES);
    fetal_source.iter_mut().for_each(|v| *v *= sign / spec.amplitude_ratio);
    let mut maternal_source = vec![0.0; n];
    render_waves(&mut maternal_source, fs, &maternal_beats, &maternal_amp, &MATERNAL_WAVES);

    let channels: Vec<Vec<f64>> = mixing
        .iter()
        .map(|[m, f]| {
            (0..n)
                .map(|i| {
                    let z: f64 = rng.sample(StandardNormal);
                    m * maternal_source[i] + f * fetal_source[i] + spec.noise_sigma * z
                })
                .collect()
        })
        .collect();

    let mismatched = matches!(
        (wave_config, polarity),
        (WaveConfig::EAPlus, Polarity::Negative) | (WaveConfig::EAMinus, Polarity::Positive)
    );
    let spread_s = (spec.jitter_ms + if mismatched { spec.mismatch_jitter_ms } else { 0.0 }) / 1000.0;
    let doppler_beats: Vec<f64> = fetal_beats
        .iter()
        .map(|b| {
            let z: f64 = rng.sample(StandardNormal);
            b + spread_s * z.clamp(-3.0, 3.0)
        })
        .collect();
    let hump_scale: Vec<f64> = fetal_beats.iter().map(|_| rng.random_range(0.9..1.1)).collect();

    let cps = spec.image_columns_per_second;
    let width = (spec.duration_s * cps).round() as usize;
    let mut inflow = vec![0.0; width];
    render_hump(&mut inflow, cps, &doppler_beats, &hump_scale, spec.e_wave, 1.0);
    render_hump(&mut inflow, cps, &doppler_beats, &hump_scale, spec.a_wave, 1.0);
    let mut outflow = vec![0.0; width];
    render_hump(&mut outflow, cps, &doppler_beats, &hump_scale, spec.v_wave, -1.0);
    let (upper_px, lower_px) = match wave_config {
        WaveConfig::EAMinus => (
            outflow.iter().map(|v| -v).collect::<Vec<_>>(),
            inflow.iter().map(|v| -v).collect(),
        ),
        _ => (inflow, outflow),
    };

    let mut image = rasterize_envelopes(
        &upper_px,
        &lower_px,
        spec.image_height,
        spec.image_baseline_row,
        200,
        30,
    )?;
    for r in 0..image.height() {
        for c in 0..image.width() {
            let jitter: i16 = rng.random_range(-15..=15);
            let v = (image.get(r, c) as i16 + jitter).clamp(0, 255) as u8;
            image.set(r, c, v);
        }
    }

    Ok(SynthRecord {
        record_id: format!("syn{index:03}"),
        wave_config,
        polarity,
        fetal_bpm,
        maternal_bpm,
        channels,
        fetal_source,
        maternal_source,
        fetal_beats,
        upper_px,
        lower_px,
        image,
    })
}

#[derive(Serialize)]
struct TruthMeta<'a> {
    record_id: &'a str,
    wave_config: WaveConfig,
    polarity: Polarity,
    fetal_bpm: f64,
    maternal_bpm: f64,
    fetal_beats: &'a [f64],
}

/// Writes every record under `out_dir/<id>/` plus `out_dir/manifest.json`,
/// and returns the manifests.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<Vec<RecordManifest>, HarnessError> {
    spec.validate()?;
    let mut manifests = Vec::with_capacity(spec.n_records);
    for index in 0..spec.n_records {
        let rec = synthesize_record(spec, index)?;
        let dir = out_dir.join(&rec.record_id);
        let mut paths = Vec::new();
        for (c, samples) in rec.channels.iter().enumerate() {
            let rel = format!("{}/ch{c}.f32", rec.record_id);
            write_samples(&dir.join(format!("ch{c}.f32")), samples, SampleFormat::F32le)?;
            paths.push(rel);
        }
        write_pgm(&dir.join("pwd.pgm"), &rec.image)?;
        let truth = dir.join("truth");
        write_samples(&truth.join("fetal.f64"), &rec.fetal_source, SampleFormat::F64le)?;
        write_samples(&truth.join("maternal.f64"), &rec.maternal_source, SampleFormat::F64le)?;
        write_samples(&truth.join("upper_px.f64"), &rec.upper_px, SampleFormat::F64le)?;
        write_samples(&truth.join("lower_px.f64"), &rec.lower_px, SampleFormat::F64le)?;
        let meta = TruthMeta {
            record_id: &rec.record_id,
            wave_config: rec.wave_config,
            polarity: rec.polarity,
            fetal_bpm: rec.fetal_bpm,
            maternal_bpm: rec.maternal_bpm,
            fetal_beats: &rec.fetal_beats,
        };
        write_file(&truth.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        manifests.push(RecordManifest {
            record_id: rec.record_id.clone(),
            aecg_paths: paths,
            pwd_image_path: format!("{}/pwd.pgm", rec.record_id),
            aecg_fs: spec.aecg_fs,
            bipolar_channel_indices: [0, 1, 2],
            wave_config: rec.wave_config,
            image_baseline_row: spec.image_baseline_row,
            image_columns_per_second: spec.image_columns_per_second,
            sample_format: SampleFormat::F32le,
        });
    }
    write_file(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifests)?.as_bytes(),
    )?;
    Ok(manifests)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{extract_envelopes, normalize_intensity, otsu_threshold};

    fn small(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_records: 2,
            duration_s: 4.0,
            aecg_fs: 512.0,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn image_round_trips_within_one_pixel() {
        let spec = SyntheticSpec {
            noise_sigma: 0.0,
            ..small(3)
        };
        let rec = synthesize_record(&spec, 0).unwrap();
        let img = normalize_intensity(&rec.image).unwrap();
        let t = otsu_threshold(&img).unwrap();
        let env = extract_envelopes(&img, t, spec.image_baseline_row, spec.image_columns_per_second).unwrap();
        for (got, want) in env.upper.samples().iter().zip(&rec.upper_px) {
            assert!((got - want).abs() <= 1.0);
        }
        for (got, want) in env.lower.samples().iter().zip(&rec.lower_px) {
            assert!((got - want).abs() <= 1.0);
        }
    }

    #[test]
    fn ea_minus_negates_and_swaps() {
        let plus = synthesize_record(&small(5), 1).unwrap();
        let minus = synthesize_record(
            &SyntheticSpec {
                ea_minus_fraction: 1.0,
                ..small(5)
            },
            1,
        )
        .unwrap();
        assert_eq!(plus.wave_config, WaveConfig::EAPlus);
        assert_eq!(minus.wave_config, WaveConfig::EAMinus);
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        assert_eq!(minus.upper_px, neg(&plus.lower_px));
        assert_eq!(minus.lower_px, neg(&plus.upper_px));
        assert_eq!(minus.channels, plus.channels);
    }

    #[test]
    fn seeds_change_beats() {
        let a = synthesize_record(&small(1), 0).unwrap();
        let b = synthesize_record(&small(2), 0).unwrap();
        assert_ne!(a.fetal_beats, b.fetal_beats);
        let again = synthesize_record(&small(1), 0).unwrap();
        assert_eq!(a.fetal_beats, again.fetal_beats);
        assert_eq!(a.channels, again.channels);
    }

    #[test]
    fn spec_validation() {
        assert!(SyntheticSpec::default().validate().is_ok());
        let bad = SyntheticSpec {
            e_wave: Hump {
                latency_ms: 50.0,
                ..d_e()
            },
            ..SyntheticSpec::default()
        };
        assert!(bad.validate().is_err());
        assert!(SyntheticSpec {
            n_records: 0,
            ..SyntheticSpec::default()
        }
        .validate()
        .is_err());
    }
}
