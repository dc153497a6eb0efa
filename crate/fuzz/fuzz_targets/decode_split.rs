#![no_main]

use libfuzzer_sys::fuzz_target;
use robustatr::scene::{decode_split, encode_split};

fuzz_target!(|data: &[u8]| {
    if let Ok(split) = decode_split(data) {
        // anything accepted must re-encode to a stable byte form
        let bytes = encode_split(&split).unwrap();
        let again = decode_split(&bytes).unwrap();
        assert_eq!(encode_split(&again).unwrap(), bytes);
    }
});
