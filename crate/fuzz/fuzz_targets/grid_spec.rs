#![no_main]

use libfuzzer_sys::fuzz_target;
use pwdrec::harness::GridSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = serde_json::from_slice::<GridSpec>(data) {
        if grid.validate().is_ok() {
            assert_eq!(grid.cells().len(), grid.n_cells());
        }
    }
});
