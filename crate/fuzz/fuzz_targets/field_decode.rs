#![no_main]
//! First byte picks scalar or vector; the rest is the payload of a 16³ field.

use esmax_core::io::{decode_field, encode_field, FieldHeader};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&sel, payload)) = data.split_first() else {
        return;
    };
    let header = FieldHeader {
        n: 16,
        box_side: 2.0 * std::f64::consts::PI,
        components: if sel & 1 == 0 { 1 } else { 3 },
        name: "fuzz".into(),
    };
    if let Ok(f) = decode_field(payload, &header) {
        assert_eq!(encode_field(&f), payload);
    }
});
