#![no_main]

use libfuzzer_sys::fuzz_target;
use pwdrec::harness::io::decode_samples;
use pwdrec::signal::SampleFormat;

// First byte picks the encoding.
fuzz_target!(|data: &[u8]| {
    let Some((&tag, body)) = data.split_first() else { return };
    let (format, width) = if tag & 1 == 0 { (SampleFormat::F32le, 4) } else { (SampleFormat::F64le, 8) };
    match decode_samples(body, format) {
        Ok(s) => assert_eq!(s.len() * width, body.len()),
        Err(_) => assert_ne!(body.len() % width, 0),
    }
});
