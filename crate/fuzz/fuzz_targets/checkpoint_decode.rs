#![no_main]

use libfuzzer_sys::fuzz_target;
use pwdrec::harness::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&ckpt).expect("decoded checkpoint re-encodes");
        let again = decode_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(encode_checkpoint(&again).unwrap(), bytes);
    }
});
