#![no_main]

use esmax_core::io::{decode_field, parse_header};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(h) = parse_header(text) {
        assert!(h.payload_len().is_some());
        // a wrong-sized payload must be rejected without allocating the grid
        assert!(decode_field(&[0u8; 16], &h).is_err() || h.payload_len() == Some(16));
    }
});
