use ipm_core::harness::{picard, picard_config, picard_degenerate_config, setup, worst_ratio};
use ipm_core::picard::{picard_iterate, PicardRun, PicardSettings};

fn quick(mut cfg: ipm_core::config::SimConfig) -> ipm_core::config::SimConfig {
    cfg.picard.n_max = 4;
    cfg.picard.substeps = 10;
    cfg
}

#[test]
fn ratios_skip_entries_at_the_floor() {
    let r = PicardRun::ratios(&[1.0, 0.5, 1e-12, 1e-13], 1e-9);
    assert_eq!(r, vec![Some(0.5), Some(2e-12), None]);
    assert_eq!(worst_ratio(&[1e-12, 1e-11], 1e-9), 0.0);
    assert_eq!(worst_ratio(&[1.0, 0.25, 0.2], 1e-9), 0.8);
}

#[test]
fn degenerate_data_is_a_fixed_point_after_one_sweep() {
    let (run, floor) = picard(&quick(picard_degenerate_config())).unwrap();
    assert_eq!(run.halvings, 0);
    assert_eq!(run.iterates.len(), 4);
    for d in run.deltas_f.iter().skip(1).chain(run.deltas_g.iter()) {
        assert!(*d <= floor, "{d} > {floor}");
    }
    assert!(run.iterates.iter().all(|(_, g)| g.max_abs() < 1e-12));
}

#[test]
fn stratified_data_contracts() {
    let (run, floor) = picard(&quick(picard_config(1e-3))).unwrap();
    assert!(worst_ratio(&run.deltas_f, floor) <= 0.5);
    assert!(worst_ratio(&run.deltas_g, floor) <= 0.5);
    assert!(run.deltas_f[0] > floor);
    assert_eq!(run.attempts.last().unwrap().outcome, "contracted");
}

#[test]
fn invalid_settings_are_rejected() {
    let s = setup(&picard_config(1e-3)).unwrap();
    let bad = [
        PicardSettings { n_max: 1, ..Default::default() },
        PicardSettings { mu: 0.5, ..Default::default() },
        PicardSettings { mu: 0.0, ..Default::default() },
        PicardSettings { nu: -1.0, ..Default::default() },
        PicardSettings { horizon: 0.0, ..Default::default() },
        PicardSettings { substeps: 0, ..Default::default() },
    ];
    for settings in &bad {
        assert!(picard_iterate(&s.problem, settings, &s.f0, &s.g0).is_err(), "{settings:?}");
    }
}

#[test]
fn settings_reject_unknown_keys() {
    assert!(serde_json::from_str::<PicardSettings>(r#"{"n_max": 3}"#).is_ok());
    assert!(serde_json::from_str::<PicardSettings>(r#"{"nmax": 3}"#).is_err());
}
