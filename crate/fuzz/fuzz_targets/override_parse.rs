#![no_main]
use ipm_core::config::{apply_override, parse_override, SimConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut root = SimConfig::default().to_value();
    for line in text.lines() {
        if let Ok((path, value)) = parse_override(line) {
            assert!(!path.is_empty());
            let _ = apply_override(&mut root, &path, value);
        }
    }
    let _ = SimConfig::from_value(root);
});
