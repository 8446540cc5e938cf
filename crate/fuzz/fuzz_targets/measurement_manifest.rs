#![no_main]

use esmax_core::forward::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_manifest(text) {
        for e in &m.measurements {
            assert!(!e.data.contains('/') && !e.traces.contains('/'));
        }
    }
});
