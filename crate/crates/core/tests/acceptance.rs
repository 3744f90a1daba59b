//! Acceptance checks for the simulator core. Runs as a plain binary so that
//! every criterion prints one PASS/FAIL line; exits non-zero on any failure.

use std::process::ExitCode;
use std::time::Instant;

use ipm_core::config::{DepthConfig, ProfileConfig};
use ipm_core::harness::{
    conservation_config, conservation_run, decay_rate, diagnostic_drift, evolve, final_iterate_norm, flat_dn_error,
    flat_dn_self_order, muskat_config, picard, picard_at_horizon, picard_config, picard_degenerate_config,
    stability_scan, steady_config, variational_samples, worst_ratio, ConservationOutcome,
};
use ipm_core::profiles::StratificationProfile;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn criterion_1() -> Verdict {
    let mut worst_err: f64 = 0.0;
    let mut worst_order = f64::INFINITY;
    for &h in &[0.5, 1.0, 2.0] {
        for &k in &[1u32, 2, 4, 8] {
            match (flat_dn_error(32, h, 128, k), flat_dn_self_order(32, h, 16, k)) {
                (Ok(e), Ok(o)) => {
                    worst_err = worst_err.max(e);
                    worst_order = worst_order.min(o);
                }
                (Err(e), _) | (_, Err(e)) => return verdict(false, format!("solver error: {e}")),
            }
        }
    }
    verdict(
        worst_err <= 1e-4 && worst_order >= 2.0,
        format!("max rel err {worst_err:.3e} (<= 1e-4), min order {worst_order:.3} (>= 2)"),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let samples = match variational_samples(50, 2024, 32, 33) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("solver error: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let energy = samples.iter().map(|s| s.energy_ratio).fold(0.0, f64::max);
    let nodal = samples.iter().map(|s| s.nodal_ratio).fold(0.0, f64::max);
    verdict(
        energy <= 1.01 && nodal <= 1.01 && secs < 60.0,
        format!("max ratio {energy:.6} (energy), {nodal:.6} (nodal), <= 1.01, {secs:.1}s (< 60s)"),
    )
}

fn rates(z_max: f64) -> Result<Vec<f64>, String> {
    [1u32, 2, 3]
        .iter()
        .map(|&k| decay_rate(&muskat_config(k, z_max), k).map(|r| r.0).map_err(|e| e.to_string()))
        .collect()
}

fn criterion_3(base: &Result<Vec<f64>, String>) -> Verdict {
    match base {
        Ok(r) => {
            let errs: Vec<f64> = r.iter().zip([1.0, 2.0, 3.0]).map(|(r, k)| ((r - k) / k).abs()).collect();
            let worst = errs.iter().copied().fold(0.0, f64::max);
            verdict(
                worst <= 0.02,
                format!("rates {:.5} {:.5} {:.5}, worst rel err {worst:.3e} (<= 2e-2)", r[0], r[1], r[2]),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn criterion_4() -> Verdict {
    let profiles = [
        ProfileConfig::Constant { c: 1.0 },
        ProfileConfig::Affine { c0: 1.0, c1: 0.1 },
        ProfileConfig::Tanh { a: 1.0, b: 0.1, ell: 1.0 },
    ];
    let mut worst: f64 = 0.0;
    for p in profiles {
        let c = steady_config(p, 0.2, 1000);
        match evolve(&c) {
            Ok((_, traj)) if traj.failure.is_none() && traj.steps_accepted >= 1000 => {
                worst = worst.max(diagnostic_drift(&traj.rows));
            }
            Ok((_, traj)) => {
                return verdict(false, format!("run stopped after {} steps: {:?}", traj.steps_accepted, traj.failure))
            }
            Err(e) => return verdict(false, format!("setup failed: {e}")),
        }
    }
    verdict(worst < 1e-10, format!("max norm drift {worst:.3e} over 1000 steps (< 1e-10)"))
}

fn criterion_5(runs: &Result<[ConservationOutcome; 2], String>) -> Verdict {
    match runs {
        Ok([a, b]) => {
            let mean = a.mean_drift.max(b.mean_drift);
            let ratio = (b.density_drift / a.density_drift).abs();
            verdict(
                mean <= 1e-8 && ratio <= 0.5,
                format!(
                    "mean drift {mean:.3e} (<= 1e-8), density drift {:.3e} at dt {} vs {:.3e} at dt {}, ratio {ratio:.3} (<= 0.5)",
                    a.density_drift, a.dt, b.density_drift, b.dt
                ),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn criterion_6() -> Verdict {
    let profiles = [
        ("constant", StratificationProfile::Constant { c: 1.0 }),
        ("tanh", StratificationProfile::Tanh { a: 1.0, b: 0.1, ell: 1.0 }),
    ];
    let depths = [
        DepthConfig::Finite {
            depth: 2.0,
            bottom: Vec::new(),
        },
        DepthConfig::Infinite { z_max: 8.0 },
    ];
    let mut violations = 0;
    let mut lowest = f64::INFINITY;
    for (_, p) in &profiles {
        for d in &depths {
            let n_z = if d == &depths[0] { 65 } else { 129 };
            match stability_scan(p, d, 20, 7, 1.0, 32, n_z) {
                Ok(mins) => {
                    violations += mins.iter().filter(|&&m| !(m > 0.0)).count();
                    lowest = mins.iter().copied().fold(lowest, f64::min);
                }
                Err(e) => return verdict(false, format!("scan failed: {e}")),
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} violations in 80 samples (constant and tanh, finite and infinite depth), lowest minimum {lowest:.4}"),
    )
}

fn criterion_7(runs: &Result<[ConservationOutcome; 2], String>) -> Verdict {
    match runs {
        Ok([a, b]) => {
            let worst = a.max_tangency_ratio.max(b.max_tangency_ratio);
            verdict(
                worst <= 1e-8,
                format!(
                    "max |u_z| / (1 + |u|) {worst:.3e} over {} accepted steps (<= 1e-8)",
                    a.steps + b.steps
                ),
            )
        }
        Err(e) => verdict(false, format!("run failed: {e}")),
    }
}

fn criterion_8_9() -> (Verdict, Verdict) {
    let main = picard(&picard_config(1e-3));
    let (main, floor) = match main {
        Ok(r) => r,
        Err(e) => {
            let v = verdict(false, format!("iteration failed: {e}"));
            let w = verdict(false, "depends on the failed iteration".into());
            return (v, w);
        }
    };
    let rf = worst_ratio(&main.deltas_f, floor);
    let rg = worst_ratio(&main.deltas_g, floor);
    let degenerate = picard_at_horizon(&picard_degenerate_config(), main.horizon);
    let eight = match &degenerate {
        Ok((d, dfloor)) => {
            let fixed = d.deltas_f[1] <= *dfloor && d.deltas_g[1] <= *dfloor;
            verdict(
                rf <= 0.75 && rg <= 0.75 && fixed,
                format!(
                    "ratios {rf:.3} (surface), {rg:.3} (density) (<= 0.75) at horizon {} after {} halvings; degenerate third difference {:.2e} (<= floor {:.2e})",
                    main.horizon, main.halvings, d.deltas_f[1], dfloor
                ),
            )
        }
        Err(e) => verdict(false, format!("degenerate iteration failed: {e}")),
    };
    let nine = match picard_at_horizon(&picard_config(1e-4), main.horizon) {
        Ok((small, _)) => {
            let s = picard_config(1e-3).sobolev_index;
            let gap = (final_iterate_norm(&main, s) - final_iterate_norm(&small, s)).abs();
            verdict(gap <= 1e-2, format!("final H^(s-1) norm gap {gap:.3e} (<= 1e-2)"))
        }
        Err(e) => verdict(false, format!("iteration failed: {e}")),
    };
    (eight, nine)
}

fn criterion_10(base: &Result<Vec<f64>, String>, doubled: &Result<Vec<f64>, String>) -> Verdict {
    match (base, doubled) {
        (Ok(a), Ok(b)) => {
            let worst = a.iter().zip(b).map(|(x, y)| ((y - x) / x).abs()).fold(0.0, f64::max);
            verdict(worst <= 2e-3, format!("max rate change {worst:.3e} from depth 8 to 16 (<= 2e-3)"))
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("run failed: {e}")),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let base = rates(8.0);
    let doubled = rates(16.0);
    let runs: Result<[ConservationOutcome; 2], String> = (|| {
        let a = conservation_run(&conservation_config(0.1)).map_err(|e| e.to_string())?.0;
        let b = conservation_run(&conservation_config(0.05)).map_err(|e| e.to_string())?.0;
        Ok([a, b])
    })();
    let (eight, nine) = criterion_8_9();
    let verdicts = [
        ("flat-interface DN operator", criterion_1()),
        ("variational inequality", criterion_2()),
        ("linear decay rates", criterion_3(&base)),
        ("steady states", criterion_4()),
        ("conservation", criterion_5(&runs)),
        ("stability functional", criterion_6()),
        ("tangency", criterion_7(&runs)),
        ("picard contraction", eight),
        ("regularization robustness", nine),
        ("truncation depth", criterion_10(&base, &doubled)),
    ];
    let mut failed = 0;
    for (i, (name, v)) in verdicts.iter().enumerate() {
        let mark = if v.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {mark} {name}: {}", i + 1, v.detail);
        failed += usize::from(!v.passed);
    }
    println!(
        "acceptance: {} of {} passed in {:.1}s",
        verdicts.len() - failed,
        verdicts.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
