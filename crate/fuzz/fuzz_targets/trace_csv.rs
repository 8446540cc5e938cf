#![no_main]

use esmax_core::io::{decode_traces, encode_traces};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = decode_traces(data) {
        let bytes = encode_traces(&rows).expect("decoded rows re-encode");
        assert_eq!(decode_traces(&bytes).expect("round trip"), rows);
    }
});
