//! Replays the fuzz seed corpus through the same invariants the fuzz
//! targets assert, so the seeds stay meaningful on stable toolchains.

use std::fs;
use std::path::PathBuf;

use ipm_core::checkpoint::Checkpoint;
use ipm_core::config::{apply_override, parse_override, SimConfig};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (name, data) in seeds("config_parse") {
        let text = std::str::from_utf8(&data).unwrap();
        if let Ok(cfg) = SimConfig::from_json_str(text) {
            let again = SimConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
            assert_eq!(cfg.to_value(), again.to_value(), "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn override_seeds() {
    for (_, data) in seeds("override_parse") {
        let mut root = SimConfig::default().to_value();
        for line in std::str::from_utf8(&data).unwrap().lines() {
            if let Ok((path, value)) = parse_override(line) {
                assert!(!path.is_empty());
                let _ = apply_override(&mut root, &path, value);
            }
        }
        let _ = SimConfig::from_value(root);
    }
}

#[test]
fn checkpoint_seeds() {
    let mut decoded = 0;
    for (name, data) in seeds("checkpoint_decode") {
        if let Ok(ckpt) = Checkpoint::decode(&data) {
            assert_eq!(ckpt.g.len(), ckpt.meta.n_x * ckpt.meta.n_z, "{name}");
            let bytes = ckpt.encode().unwrap();
            assert_eq!(bytes, data, "{name}");
            decoded += 1;
        }
    }
    assert_eq!(decoded, 1);
}
