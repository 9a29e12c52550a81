#![no_main]

use libfuzzer_sys::fuzz_target;
use pwdrec::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<ExperimentConfig>(data) {
        if cfg.validate().is_ok() {
            let _ = cfg.train_config();
        }
    }
});
