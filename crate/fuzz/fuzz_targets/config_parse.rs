#![no_main]
use ipm_core::config::SimConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = SimConfig::from_json_str(text) {
        // Anything accepted must survive a round trip unchanged.
        let again = SimConfig::from_json_str(&cfg.to_json_pretty()).expect("round trip");
        assert_eq!(cfg.to_value(), again.to_value());
    }
});
