#![no_main]

use gdsr_core::mesh::parse_layers;
use libfuzzer_sys::fuzz_target;

// first byte is the expected vertex count
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let _ = parse_layers(&String::from_utf8_lossy(rest), n as usize);
});
