use ipm_core::checkpoint::Checkpoint;
use ipm_core::config::SimConfig;
use ipm_core::harness::{
    checkpoint_of, describe_state, diagnostics_csv, evolve, fan_out, preset_base, restore, run_config, run_preset,
    RunStatus, PRESETS,
};
use ipm_core::stepper::DiagnosticsRow;

fn short() -> SimConfig {
    let mut c = SimConfig::default();
    c.grid.n_x = 16;
    c.grid.n_z = 17;
    c.stepper.t_end = 0.1;
    c.stepper.dt = Some(0.02);
    c.output.interval = 0.05;
    c
}

#[test]
fn fan_out_keeps_order() {
    let out = fan_out((0..37).collect(), |i: usize| i * i);
    assert_eq!(out, (0..37).map(|i| i * i).collect::<Vec<_>>());
    let empty: Vec<u8> = fan_out(Vec::<u8>::new(), |v| v);
    assert!(empty.is_empty());
}

#[test]
fn repeated_runs_are_bit_identical() {
    let a = evolve(&short()).unwrap().1;
    let b = evolve(&short()).unwrap().1;
    assert_eq!(diagnostics_csv(&a.rows), diagnostics_csv(&b.rows));
    assert_eq!(a.rows.len(), 3);
}

#[test]
fn run_directory_contents() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run_config(&short()).unwrap();
    assert_eq!(outcome.summary.status, RunStatus::Passed);
    ipm_core::harness::write_outputs(dir.path(), &outcome).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["config.json", "diagnostics.csv", "state.ckpt", "summary.json"]);
    let csv = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), DiagnosticsRow::HEADER);
    assert_eq!(csv.lines().count(), 4);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"], "passed");
    let cfg = SimConfig::from_json_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg.grid.n_x, 16);
}

#[test]
fn checkpoint_restores_final_state() {
    let cfg = short();
    let (stepper, traj) = evolve(&cfg).unwrap();
    let ckpt = checkpoint_of(&cfg, &stepper.problem, &traj.final_state);
    let back = Checkpoint::decode(&ckpt.encode().unwrap()).unwrap();
    let (_, problem, state) = restore(&back).unwrap();
    let row = DiagnosticsRow::from_state(&problem, &state, traj.rows.last().unwrap().dt, "ok");
    assert_eq!(row.to_csv(), traj.rows.last().unwrap().to_csv());
    let text = describe_state(&back).unwrap();
    assert!(text.contains("thresholds satisfied"));
    assert!(text.contains(&back.meta.config_hash));
}

#[test]
fn tampered_checkpoint_config_is_rejected() {
    let cfg = short();
    let (stepper, traj) = evolve(&cfg).unwrap();
    let mut ckpt = checkpoint_of(&cfg, &stepper.problem, &traj.final_state);
    ckpt.meta.config["grid"]["jacobian_safety"] = serde_json::json!(0.8);
    assert!(restore(&ckpt).is_err());
}

#[test]
fn numerical_failure_is_reported_not_returned() {
    let mut cfg = short();
    cfg.profile = ipm_core::config::ProfileConfig::Constant { c: 0.01 };
    let outcome = run_config(&cfg).unwrap();
    assert_eq!(outcome.summary.status, RunStatus::NumericalFailure);
    assert!(outcome.summary.failure.unwrap().contains("stability"));
}

#[test]
fn presets_have_valid_bases() {
    for name in PRESETS {
        preset_base(name).unwrap().validate().unwrap();
    }
    assert!(preset_base("nope").unwrap_err().is_config());
    assert!(run_preset("steady-state", &["stepper.sheme=1".into()]).unwrap_err().is_config());
}

#[test]
fn steady_state_preset_passes() {
    let outcome = run_preset("steady-state", &["stepper.t_end=0.05".into()]).unwrap();
    assert_eq!(outcome.summary.status, RunStatus::Passed, "{:?}", outcome.summary.checks);
    assert_eq!(outcome.summary.preset.as_deref(), Some("steady-state"));
}
