#![no_main]

use gdsr_core::model::ModelManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<ModelManifest>(data) {
        let _ = m.check();
    }
});
