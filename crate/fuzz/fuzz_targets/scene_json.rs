#![no_main]

use gdsr_core::datagen::SceneConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = serde_json::from_slice::<SceneConfig>(data) {
        let _ = cfg.validate();
    }
});
