#![no_main]

use gdsr_core::featgraph::BodyProxy;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(body) = BodyProxy::from_obj_text(&String::from_utf8_lossy(data)) {
        let index = body.index();
        let _ = index.interaction([0.0, 0.0, 0.0], 0.01);
    }
});
