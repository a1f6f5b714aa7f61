#![no_main]

use gdsr_core::mesh::{parse_obj, GarmentMesh};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    if let Ok(obj) = parse_obj(&text) {
        let _ = GarmentMesh::from_obj(&obj, None);
    }
});
