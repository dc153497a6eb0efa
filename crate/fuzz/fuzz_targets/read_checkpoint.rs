#![no_main]

use libfuzzer_sys::fuzz_target;
use robustatr::nn::read_checkpoint;

fuzz_target!(|data: &[u8]| {
    let _ = read_checkpoint(data);
});
