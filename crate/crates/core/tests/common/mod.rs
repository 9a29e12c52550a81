#![allow(dead_code)]

use pwdrec::harness::{generate_synthetic, load_record, preprocess_record, PreprocessedRecord, SyntheticSpec};

/// Renders `spec` to a scratch directory and runs the full preprocessing
/// on every record, reading back from the files.
pub fn synthetic_dataset(spec: &SyntheticSpec) -> Vec<PreprocessedRecord> {
    let dir = tempfile::tempdir().unwrap();
    let manifests = generate_synthetic(spec, dir.path()).unwrap();
    manifests
        .iter()
        .map(|m| {
            let (rec, img) = load_record(m, dir.path()).unwrap();
            preprocess_record(&rec, &img, m, 0).unwrap()
        })
        .collect()
}

/// Small but complete data set: both wave configurations and polarities.
pub fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_records: 6,
        duration_s: 10.0,
        ea_minus_fraction: 0.5,
        negative_polarity_fraction: 0.5,
        seed: 5,
        ..SyntheticSpec::default()
    }
}
