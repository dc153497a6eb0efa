#![no_main]

use libfuzzer_sys::fuzz_target;
use robustatr::scene::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<DatasetManifest>(data) {
        let _ = m.validate();
    }
});
