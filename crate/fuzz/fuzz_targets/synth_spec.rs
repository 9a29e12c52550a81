#![no_main]

use libfuzzer_sys::fuzz_target;
use pwdrec::harness::SyntheticSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<SyntheticSpec>(data) {
        let _ = spec.validate();
    }
});
