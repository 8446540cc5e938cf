#![no_main]

use esmax::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = RunConfig::from_toml(text) else {
        return;
    };
    if cfg.validate().is_ok() {
        let again = RunConfig::from_toml(&cfg.to_toml().expect("valid config serializes")).expect("round trip");
        assert_eq!(again.to_toml().ok(), cfg.to_toml().ok());
    }
});
