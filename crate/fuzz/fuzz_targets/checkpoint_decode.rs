#![no_main]
use ipm_core::checkpoint::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        assert_eq!(ckpt.f.len(), ckpt.meta.n_x);
        assert_eq!(ckpt.g.len(), ckpt.meta.n_x * ckpt.meta.n_z);
        let bytes = ckpt.encode().expect("decoded checkpoint re-encodes");
        Checkpoint::decode(&bytes).expect("re-encoded checkpoint decodes");
    }
});
