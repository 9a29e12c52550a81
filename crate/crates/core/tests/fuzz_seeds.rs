//! Replays the checked-in fuzz corpus through the decoders on stable.

use std::path::PathBuf;

use pwdrec::envelope::decode_pgm;
use pwdrec::harness::io::decode_samples;
use pwdrec::harness::{decode_checkpoint, encode_checkpoint, parse_manifests, ExperimentConfig, GridSpec, SyntheticSpec};
use pwdrec::signal::SampleFormat;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn pgm_seeds() {
    for (name, data) in seeds("pgm_decode") {
        assert_eq!(decode_pgm(&data).is_ok(), name != "truncated", "{name}");
    }
}

#[test]
fn sample_seeds() {
    for (name, data) in seeds("samples_decode") {
        let format = if data[0] & 1 == 0 { SampleFormat::F32le } else { SampleFormat::F64le };
        assert_eq!(decode_samples(&data[1..], format).is_ok(), name != "ragged", "{name}");
    }
}

#[test]
fn manifest_seeds() {
    for (name, data) in seeds("manifest_parse") {
        let parsed = parse_manifests(std::str::from_utf8(&data).unwrap());
        assert_eq!(parsed.is_ok(), name != "empty", "{name}: {parsed:?}");
    }
}

#[test]
fn json_config_seeds() {
    for (name, data) in seeds("synth_spec") {
        serde_json::from_slice::<SyntheticSpec>(&data).unwrap().validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("experiment_config") {
        serde_json::from_slice::<ExperimentConfig>(&data).unwrap().validate().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("grid_spec") {
        let grid: GridSpec = serde_json::from_slice(&data).unwrap();
        grid.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(grid.cells().len(), grid.n_cells());
    }
}

#[test]
fn checkpoint_seeds() {
    for (name, data) in seeds("checkpoint_decode") {
        match decode_checkpoint(&data) {
            Ok(c) => {
                let bytes = encode_checkpoint(&c).unwrap();
                assert_eq!(decode_checkpoint(&bytes).unwrap(), c, "{name}");
            }
            Err(e) => assert_eq!(name, "bad_magic", "{e}"),
        }
    }
}
