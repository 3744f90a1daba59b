//! Experiments, presets and run-directory output.
//!
//! The experiment functions return raw measurements; presets wrap them with
//! pass/fail checks and write `config.json`, `diagnostics.csv` and
//! `summary.json` (plus an optional checkpoint) into a run directory.

use std::env;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checkpoint::{config_hash, write_atomic, Checkpoint, CheckpointMeta, FORMAT_VERSION};
use crate::config::{DepthConfig, FourierMode, Gaussian, ProfileConfig, RunMode, SimConfig};
use crate::dynamics::stability_report;
use crate::elliptic::{dirichlet_neumann, EllipticOperator};
use crate::error::{Error, Result};
use crate::flatten::{select_delta, Clustering, DepthMode, StripField, StripGrid};
use crate::picard::{delta_floor, picard_iterate, PicardRun};
use crate::profiles::StratificationProfile;
use crate::spectral::{make_grid, FourierGrid, SurfaceField};
use crate::stepper::{evaluate_state, fit_decay_rate, run, DiagnosticsRow, Problem, Scheme, SimState, Stepper, Trajectory};

pub const PRESETS: [&str; 6] = [
    "dn-flat",
    "steady-state",
    "muskat-decay",
    "stability-scan",
    "picard-contract",
    "conservation",
];

/// Worker count: `IPM_SIM_THREADS` if set and positive, else the number of
/// available cores.
pub fn thread_count() -> usize {
    env::var("IPM_SIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Applies `job` to every item on up to [`thread_count`] threads. Results
/// keep the input order.
pub fn fan_out<T, R, F>(items: Vec<T>, job: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let n = items.len();
    let workers = thread_count().min(n.max(1));
    if workers <= 1 {
        return items.into_iter().map(job).collect();
    }
    let queue: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<R>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = queue[i].lock().expect("queue lock").take().expect("item taken once");
                let r = job(item);
                *results[i].lock().expect("result lock") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("result lock").expect("every job ran"))
        .collect()
}

/// Solver objects built from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub f0: SurfaceField,
    pub g0: StripField,
}

pub fn setup(config: &SimConfig) -> Result<Setup> {
    let x = config.x_grid()?;
    let depth = config.depth_mode(&x)?;
    let grid = config.strip_grid(&x, &depth)?;
    let f0 = config.initial_surface(&x)?;
    let g0 = config.initial_density(&grid)?;
    let problem = config.problem(grid, depth, &f0)?;
    Ok(Setup { problem, f0, g0 })
}

/// Time evolution; setup and initial-state errors are returned, failures
/// during stepping end up in [`Trajectory::failure`].
pub fn evolve(config: &SimConfig) -> Result<(Stepper, Trajectory)> {
    let s = setup(config)?;
    let mut stepper = Stepper::new(s.problem, config.step_control());
    let state = stepper.initial_state(s.f0, s.g0)?;
    let traj = run(&stepper, state, config.stepper.t_end, config.output.interval);
    Ok((stepper, traj))
}

pub fn checkpoint_of(config: &SimConfig, problem: &Problem, state: &SimState) -> Checkpoint {
    let value = config.to_value();
    Checkpoint {
        meta: CheckpointMeta {
            version: FORMAT_VERSION,
            n_x: problem.grid.nx(),
            n_z: problem.grid.nz(),
            length: problem.grid.x_grid().length(),
            z_bottom: problem.grid.z_bot(),
            t: state.t,
            delta: problem.delta,
            config_hash: config_hash(&value),
            config: value,
        },
        f: state.f.values().to_vec(),
        g: state.g_strip.data().to_vec(),
    }
}

/// Rebuilds the configuration, problem and full state stored in a checkpoint.
pub fn restore(ckpt: &Checkpoint) -> Result<(SimConfig, Problem, SimState)> {
    let config = SimConfig::from_value(ckpt.meta.config.clone())?;
    if config_hash(&config.to_value()) != ckpt.meta.config_hash {
        return Err(Error::Checkpoint {
            offset: 16,
            message: "stored configuration does not match its hash".into(),
        });
    }
    let x = config.x_grid()?;
    let depth = config.depth_mode(&x)?;
    let grid = config.strip_grid(&x, &depth)?;
    ckpt.check_grid(&grid)?;
    let problem = config.problem_with_delta(grid.clone(), depth, ckpt.meta.delta);
    let f = SurfaceField::new(x, ckpt.f.clone())?;
    let g = StripField::from_data(grid.nx(), grid.nz(), ckpt.g.clone())?;
    let state = evaluate_state(&problem, ckpt.meta.t, f, g)?;
    Ok((config, problem, state))
}

/// Human-readable description of a stored state.
pub fn describe_state(ckpt: &Checkpoint) -> Result<String> {
    let (config, problem, state) = restore(ckpt)?;
    let row = DiagnosticsRow::from_state(&problem, &state, f64::NAN, "restored");
    let depth = match &config.depth {
        DepthConfig::Finite { depth, .. } => format!("finite, depth {depth}"),
        DepthConfig::Infinite { z_max } => format!("infinite, truncated at {z_max}"),
    };
    let mut out = String::new();
    out.push_str(&format!("t                  {}\n", row.t));
    out.push_str(&format!("grid               {} x {} ({depth})\n", problem.grid.nx(), problem.grid.nz()));
    out.push_str(&format!("smoothing delta    {}\n", problem.delta));
    out.push_str(&format!("H^s norm of f      {} (s = {})\n", row.hs_f, problem.s_index));
    out.push_str(&format!("strip norm of g    {}\n", row.hs_g));
    out.push_str(&format!("mean of f          {}\n", row.mean_f));
    out.push_str(&format!("total density      {}\n", row.total_density));
    out.push_str(&format!("stability minimum  {}\n", row.taylor_min));
    out.push_str(&format!("separation minimum {}\n", row.separation_min));
    let verdict = state
        .stability
        .violation(problem.a_threshold, problem.d_threshold)
        .unwrap_or_else(|| "thresholds satisfied".into());
    out.push_str(&format!("stability          {verdict}\n"));
    out.push_str(&format!("config hash        {}\n", ckpt.meta.config_hash));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Experiments

/// `G[0] cos(kx)` on a flat surface over a flat bottom at depth `depth`.
pub fn flat_dn(n_x: usize, depth: f64, n_z: usize, k: u32) -> Result<(SurfaceField, SurfaceField)> {
    let x = make_grid(n_x, 2.0 * PI)?;
    let f = SurfaceField::zeros(x.clone());
    let mode = DepthMode::Finite {
        depth,
        bottom: SurfaceField::zeros(x.clone()),
    };
    let grid = std::sync::Arc::new(StripGrid::new(x.clone(), n_z, mode.z_bot(), Clustering::Uniform)?);
    let delta = select_delta(&f, &mode, &grid, 0.9)?;
    let map = crate::flatten::build_map(&f, &mode, delta, &grid, 0.9)?;
    let h = SurfaceField::from_fn(x, |s| (k as f64 * s).cos());
    let g = dirichlet_neumann(&map, &h, Default::default())?;
    Ok((h, g))
}

/// Maximum relative error of the flat DN operator against `|k| tanh(|k| H)`.
pub fn flat_dn_error(n_x: usize, depth: f64, n_z: usize, k: u32) -> Result<f64> {
    let (h, g) = flat_dn(n_x, depth, n_z, k)?;
    let kk = k as f64;
    let sym = kk * (kk * depth).tanh();
    let err = g
        .values()
        .iter()
        .zip(h.values())
        .map(|(a, b)| (a - sym * b).abs())
        .fold(0.0, f64::max);
    Ok(err / sym)
}

/// Observed order `log2(|G_h - G_{h/2}| / |G_{h/2} - G_{h/4}|)` from three
/// grids whose cell counts double.
pub fn flat_dn_self_order(n_x: usize, depth: f64, cells: usize, k: u32) -> Result<f64> {
    let levels: Vec<SurfaceField> = [cells, 2 * cells, 4 * cells]
        .iter()
        .map(|&c| flat_dn(n_x, depth, c + 1, k).map(|r| r.1))
        .collect::<Result<_>>()?;
    let d1 = levels[0].max_abs_diff(&levels[1]);
    let d2 = levels[1].max_abs_diff(&levels[2]);
    Ok((d1 / d2).log2())
}

/// Random smooth surface with `‖f‖_∞ + ‖f_x‖_∞ = c1`, built from modes 1 to 4.
pub fn random_surface(x: &std::sync::Arc<FourierGrid>, rng: &mut ChaCha8Rng, c1: f64) -> SurfaceField {
    let coeffs: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let raw = SurfaceField::from_fn(x.clone(), |s| {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, (a, b))| {
                let k = (j + 1) as f64;
                (a * (k * s).cos() + b * (k * s).sin()) / k
            })
            .sum()
    });
    let norm = raw.max_abs() + raw.derivative().max_abs();
    raw.map(|v| v * c1 / norm)
}

/// Random smooth strip field: a few separable modes with random amplitudes.
pub fn random_strip(grid: &StripGrid, rng: &mut ChaCha8Rng) -> StripField {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(1.0..4.0f64).floor(),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(0.5..3.0),
            )
        })
        .collect();
    StripField::from_fn(grid, |x, z| {
        terms
            .iter()
            .map(|&(a, k, phase, kz)| a * (k * x + phase).cos() * (kz * z).cos())
            .sum()
    })
}

/// Ratio of the weighted gradient norm of the source potential to the
/// weighted norm of its source, in two discretizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalSample {
    /// Norms of the solver's own energy and load quadrature.
    pub energy_ratio: f64,
    /// Nodal physical gradient against the nodal source with the
    /// piecewise-cubic z quadrature.
    pub nodal_ratio: f64,
}

pub fn variational_samples(count: usize, seed: u64, n_x: usize, n_z: usize) -> Result<Vec<VariationalSample>> {
    let x = make_grid(n_x, 2.0 * PI)?;
    let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
    fan_out(seeds, |s| -> Result<VariationalSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let f = random_surface(&x, &mut rng, 0.5);
        let depth = DepthMode::Finite {
            depth: 1.0,
            bottom: random_surface(&x, &mut rng, 0.2),
        };
        let grid = std::sync::Arc::new(StripGrid::new(x.clone(), n_z, depth.z_bot(), Clustering::Uniform)?);
        let delta = select_delta(&f, &depth, &grid, 0.9)?;
        let map = crate::flatten::build_map(&f, &depth, delta, &grid, 0.9)?;
        let k = random_strip(&grid, &mut rng);
        let op = EllipticOperator::new(&map, Default::default());
        let sol = op.solve_source(&k)?;
        let (gradient, bound) = op.variational_norms(&sol.v, &k);
        let (gx, gy) = sol.physical_gradient(&map);
        let w = grid.z_quadrature_weights();
        let (mut num, mut den) = (0.0, 0.0);
        for (r, wr) in w.iter().enumerate() {
            for i in 0..grid.nx() {
                let jac = map.jacobian.get(i, r);
                num += wr * jac * (gx.get(i, r).powi(2) + gy.get(i, r).powi(2));
                den += wr * jac * k.get(i, r).powi(2);
            }
        }
        Ok(VariationalSample {
            energy_ratio: gradient / bound,
            nodal_ratio: (num / den).sqrt(),
        })
    })
    .into_iter()
    .collect()
}

/// Linearized decay configuration: homogeneous fluid, infinite depth
/// truncated at `z_max` with spacing 1/16, surface `1e-3 cos(kx)`.
pub fn muskat_config(k: u32, z_max: f64) -> SimConfig {
    let mut c = SimConfig::default();
    c.depth = DepthConfig::Infinite { z_max };
    c.grid.n_x = 32;
    c.grid.n_z = (16.0 * z_max).round() as usize + 1;
    c.profile = ProfileConfig::Constant { c: 1.0 };
    c.initial.f0.modes = vec![FourierMode { k, cos: 1e-3, sin: 0.0 }];
    c.stepper.scheme = Scheme::ImexMidpoint;
    c.stepper.dt = Some(0.01);
    c.stepper.t_end = 1.0;
    c.output.interval = 0.05;
    c
}

/// Fitted decay rate (positive for decay) of Fourier mode `k` and the trajectory.
pub fn decay_rate(config: &SimConfig, k: u32) -> Result<(f64, Trajectory)> {
    let (stepper, traj) = evolve(config)?;
    if let Some(f) = &traj.failure {
        return Err(Error::StepFailed {
            t: traj.final_state.t,
            retries: traj.steps_retried,
            reason: f.clone(),
        });
    }
    let x = stepper.problem.grid.x_grid();
    let rate = -fit_decay_rate(x, &traj.snapshots, k as usize);
    Ok((rate, traj))
}

/// Flat surface at height `level`, no perturbation, fixed small steps.
pub fn steady_config(profile: ProfileConfig, level: f64, steps: usize) -> SimConfig {
    let mut c = SimConfig::default();
    c.profile = profile;
    c.initial.f0.modes.clear();
    c.initial.f0.mean = level;
    c.stepper.dt = Some(1e-3);
    c.stepper.t_end = 1e-3 * steps as f64;
    c.output.interval = c.stepper.t_end / 10.0;
    c
}

/// Largest change of any diagnostic norm relative to the initial row.
pub fn diagnostic_drift(rows: &[DiagnosticsRow]) -> f64 {
    let first = &rows[0];
    let vals = |r: &DiagnosticsRow| {
        let sep = if r.separation_min.is_finite() { r.separation_min } else { 0.0 };
        [r.hs_f, r.hs_g, r.taylor_min, sep, r.mean_f, r.total_density]
    };
    let a = vals(first);
    rows.iter()
        .flat_map(|r| vals(r).into_iter().zip(a).map(|(v, w)| (v - w).abs()))
        .fold(0.0, f64::max)
}

/// Nonlinear run for the conservation checks: stratified finite-depth
/// fluid, surface `0.1 cos x`, gaussian density bump of amplitude 0.01.
pub fn conservation_config(dt: f64) -> SimConfig {
    let mut c = SimConfig::default();
    c.grid.n_x = 32;
    c.grid.n_z = 65;
    c.profile = ProfileConfig::Tanh { a: 1.0, b: 0.1, ell: 1.0 };
    c.initial.f0.modes = vec![FourierMode { k: 1, cos: 0.1, sin: 0.0 }];
    c.initial.g0.gaussians = vec![Gaussian {
        amplitude: 0.01,
        x0: PI,
        z0: -0.5,
        width_x: 0.5,
        width_z: 0.15,
    }];
    c.stepper.scheme = Scheme::ImexMidpoint;
    c.stepper.dt = Some(dt);
    c.stepper.t_end = 1.0;
    c.output.interval = 0.1;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationOutcome {
    pub dt: f64,
    pub mean_drift: f64,
    /// Signed relative change of the total density.
    pub density_drift: f64,
    pub max_tangency_ratio: f64,
    pub steps: usize,
}

pub fn conservation_run(config: &SimConfig) -> Result<(ConservationOutcome, Trajectory)> {
    let (_, traj) = evolve(config)?;
    if let Some(f) = &traj.failure {
        return Err(Error::StepFailed {
            t: traj.final_state.t,
            retries: traj.steps_retried,
            reason: f.clone(),
        });
    }
    let first = &traj.rows[0];
    let last = traj.rows.last().expect("rows");
    let outcome = ConservationOutcome {
        dt: config.stepper.dt.unwrap_or(f64::NAN),
        mean_drift: traj.rows.iter().map(|r| (r.mean_f - first.mean_f).abs()).fold(0.0, f64::max),
        density_drift: (last.total_density - first.total_density) / first.total_density,
        max_tangency_ratio: traj.max_tangency_ratio,
        steps: traj.steps_accepted,
    };
    Ok((outcome, traj))
}

/// Minimum of the stability functional for random surfaces with
/// `‖f‖_{C¹} ≤ c1_max`.
pub fn stability_scan(
    profile: &StratificationProfile,
    depth: &DepthConfig,
    count: usize,
    seed: u64,
    c1_max: f64,
    n_x: usize,
    n_z: usize,
) -> Result<Vec<f64>> {
    let mut base = SimConfig::default();
    base.depth = depth.clone();
    base.grid.n_x = n_x;
    base.grid.n_z = n_z;
    let x = base.x_grid()?;
    let mode = base.depth_mode(&x)?;
    let grid = base.strip_grid(&x, &mode)?;
    let seeds: Vec<u64> = (0..count as u64).map(|i| seed.wrapping_add(i)).collect();
    fan_out(seeds, |s| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let c1 = rng.gen_range(0.1..=c1_max);
        let f = random_surface(&x, &mut rng, c1);
        let delta = select_delta(&f, &mode, &grid, 0.9)?;
        let map = crate::flatten::build_map(&f, &mode, delta, &grid, 0.9)?;
        let report = stability_report(&map, profile, 0.0, 0.0, Default::default())?;
        Ok(report.taylor_min)
    })
    .into_iter()
    .collect()
}

/// Small-data iteration: surface amplitude 0.05, density amplitude 1e-3,
/// weakly stratified profile.
pub fn picard_config(nu: f64) -> SimConfig {
    let mut c = SimConfig::default();
    c.mode = RunMode::Picard;
    c.profile = ProfileConfig::Tanh { a: 1.0, b: 0.1, ell: 1.0 };
    c.initial.f0.modes = vec![
        FourierMode { k: 1, cos: 0.05, sin: 0.0 },
        FourierMode { k: 2, cos: 0.0, sin: 0.02 },
    ];
    c.initial.g0.modes = vec![crate::config::StripMode {
        mode: FourierMode { k: 1, cos: 0.0, sin: 1e-3 },
        decay: 0.0,
        kz: 3.0,
    }];
    c.picard.nu = nu;
    c
}

/// The homogeneous, unperturbed special case of [`picard_config`].
pub fn picard_degenerate_config() -> SimConfig {
    let mut c = picard_config(1e-3);
    c.profile = ProfileConfig::Constant { c: 1.0 };
    c.initial.g0 = Default::default();
    c
}

pub fn picard(config: &SimConfig) -> Result<(PicardRun, f64)> {
    let s = setup(config)?;
    let run = picard_iterate(&s.problem, &config.picard, &s.f0, &s.g0)?;
    Ok((run, delta_floor(&s.problem, &s.f0)))
}

/// Picard run with the horizon pinned (no halving).
pub fn picard_at_horizon(config: &SimConfig, horizon: f64) -> Result<(PicardRun, f64)> {
    let mut c = config.clone();
    c.picard.horizon = horizon;
    c.picard.max_halvings = 0;
    picard(&c)
}

/// `H^{s-1}` norm of the last surface iterate.
pub fn final_iterate_norm(run: &PicardRun, s_index: f64) -> f64 {
    run.iterates.last().expect("iterates").0.sobolev_norm(s_index - 1.0)
}

// ---------------------------------------------------------------------------
// Presets and outputs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Passed,
    AcceptanceFailure,
    NumericalFailure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub preset: Option<String>,
    pub status: RunStatus,
    pub config_hash: String,
    pub checks: Vec<Check>,
    pub failure: Option<String>,
    /// Preset-specific measurements.
    pub results: Value,
}

/// Everything a run directory receives.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: SimConfig,
    pub diagnostics: Vec<DiagnosticsRow>,
    pub summary: Summary,
    pub checkpoint: Option<Checkpoint>,
}

impl RunOutcome {
    fn new(
        preset: Option<&str>,
        config: SimConfig,
        diagnostics: Vec<DiagnosticsRow>,
        checks: Vec<Check>,
        failure: Option<String>,
        results: Value,
        checkpoint: Option<Checkpoint>,
    ) -> Self {
        let status = if failure.is_some() {
            RunStatus::NumericalFailure
        } else if checks.iter().all(|c| c.passed) {
            RunStatus::Passed
        } else {
            RunStatus::AcceptanceFailure
        };
        let summary = Summary {
            preset: preset.map(str::to_string),
            status,
            config_hash: config_hash(&config.to_value()),
            checks,
            failure,
            results,
        };
        let checkpoint = if config.output.checkpoint { checkpoint } else { None };
        Self {
            config,
            diagnostics,
            summary,
            checkpoint,
        }
    }
}

pub fn diagnostics_csv(rows: &[DiagnosticsRow]) -> String {
    let mut s = String::from(DiagnosticsRow::HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// Writes the run directory; each file appears atomically.
pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let config = outcome.config.to_json_pretty();
    write_atomic(&dir.join("config.json"), config.as_bytes())?;
    write_atomic(&dir.join("diagnostics.csv"), diagnostics_csv(&outcome.diagnostics).as_bytes())?;
    if let Some(c) = &outcome.checkpoint {
        c.write(&dir.join("state.ckpt"))?;
    }
    let summary = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    write_atomic(&dir.join("summary.json"), summary.as_bytes())?;
    Ok(())
}

fn failure_outcome(preset: Option<&str>, config: SimConfig, err: &Error) -> RunOutcome {
    RunOutcome::new(preset, config, Vec::new(), Vec::new(), Some(err.to_string()), Value::Null, None)
}

fn initial_rows(config: &SimConfig) -> Result<Vec<DiagnosticsRow>> {
    let s = setup(config)?;
    let state = evaluate_state(&s.problem, 0.0, s.f0, s.g0)?;
    Ok(vec![DiagnosticsRow::from_state(&s.problem, &state, 0.0, "init")])
}

/// Runs a configuration: time evolution or Picard iteration per its mode.
/// Configuration errors are returned; numerical failures are reported in
/// the outcome.
pub fn run_config(config: &SimConfig) -> Result<RunOutcome> {
    config.validate()?;
    let result = match config.mode {
        RunMode::Evolve => run_evolution(config),
        RunMode::Picard => run_picard(config),
    };
    match result {
        Ok(o) => Ok(o),
        Err(e) if e.is_config() => Err(e),
        Err(e) => Ok(failure_outcome(None, config.clone(), &e)),
    }
}

fn run_evolution(config: &SimConfig) -> Result<RunOutcome> {
    let (stepper, traj) = evolve(config)?;
    let checks = vec![Check::at_most(
        "tangency_ratio",
        traj.max_tangency_ratio,
        config.tolerances.tangency,
    )];
    let first = &traj.rows[0];
    let last = traj.rows.last().expect("rows");
    let results = json!({
        "t_final": last.t,
        "steps_accepted": traj.steps_accepted,
        "steps_retried": traj.steps_retried,
        "max_tangency_ratio": traj.max_tangency_ratio,
        "delta": stepper.problem.delta,
        "mean_drift": last.mean_f - first.mean_f,
        "density_relative_drift": (last.total_density - first.total_density) / first.total_density,
    });
    let ckpt = checkpoint_of(config, &stepper.problem, &traj.final_state);
    Ok(RunOutcome::new(
        None,
        config.clone(),
        traj.rows,
        checks,
        traj.failure,
        results,
        Some(ckpt),
    ))
}

fn picard_json(run: &PicardRun, floor: f64, s_index: f64) -> Value {
    json!({
        "nu": run.nu,
        "mu": run.mu,
        "horizon": run.horizon,
        "halvings": run.halvings,
        "deltas_f": run.deltas_f,
        "deltas_g": run.deltas_g,
        "ratios_f": PicardRun::ratios(&run.deltas_f, floor),
        "ratios_g": PicardRun::ratios(&run.deltas_g, floor),
        "delta_floor": floor,
        "final_norm": final_iterate_norm(run, s_index),
        "attempts": run.attempts,
    })
}

/// Largest ratio over measured entries; zero when all are at the floor.
pub fn worst_ratio(deltas: &[f64], floor: f64) -> f64 {
    PicardRun::ratios(deltas, floor).into_iter().flatten().fold(0.0, f64::max)
}

fn run_picard(config: &SimConfig) -> Result<RunOutcome> {
    let (run, floor) = picard(config)?;
    let target = config.picard.contraction_target;
    let checks = vec![
        Check::at_most("ratio_f", worst_ratio(&run.deltas_f, floor), target),
        Check::at_most("ratio_g", worst_ratio(&run.deltas_g, floor), target),
    ];
    let rows = initial_rows(config)?;
    let results = picard_json(&run, floor, config.sobolev_index);
    Ok(RunOutcome::new(None, config.clone(), rows, checks, None, results, None))
}

/// Applies user overrides on top of a preset's base configuration.
fn with_overrides(base: SimConfig, overrides: &[String]) -> Result<SimConfig> {
    let mut value = base.to_value();
    for o in overrides {
        let (path, v) = crate::config::parse_override(o)?;
        crate::config::apply_override(&mut value, &path, v)?;
    }
    SimConfig::from_value(value)
}

pub fn preset_base(name: &str) -> Result<SimConfig> {
    Ok(match name {
        "dn-flat" => {
            let mut c = SimConfig::default();
            c.grid.n_z = 128;
            c.initial.f0.modes.clear();
            c
        }
        "steady-state" => steady_config(ProfileConfig::Tanh { a: 1.0, b: 0.1, ell: 1.0 }, 0.2, 1000),
        "muskat-decay" => muskat_config(1, 8.0),
        "stability-scan" => {
            let mut c = SimConfig::default();
            c.depth = DepthConfig::Finite {
                depth: 2.0,
                bottom: Vec::new(),
            };
            c.grid.n_z = 65;
            c.profile = ProfileConfig::Tanh { a: 1.0, b: 0.1, ell: 1.0 };
            c
        }
        "picard-contract" => picard_config(1e-3),
        "conservation" => conservation_config(0.1),
        other => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", ")),
            ))
        }
    })
}

/// Runs a named preset. Configuration errors are returned; numerical
/// failures and failed checks are reported in the outcome.
pub fn run_preset(name: &str, overrides: &[String]) -> Result<RunOutcome> {
    let config = with_overrides(preset_base(name)?, overrides)?;
    let result = match name {
        "dn-flat" => preset_dn_flat(&config),
        "steady-state" => preset_steady(&config),
        "muskat-decay" => preset_muskat(&config),
        "stability-scan" => preset_stability(&config),
        "picard-contract" => preset_picard(&config),
        "conservation" => preset_conservation(&config),
        _ => unreachable!("preset_base rejects unknown names"),
    };
    match result {
        Ok(mut o) => {
            o.summary.preset = Some(name.to_string());
            Ok(o)
        }
        Err(e) if e.is_config() => Err(e),
        Err(e) => Ok(failure_outcome(Some(name), config, &e)),
    }
}

fn preset_dn_flat(config: &SimConfig) -> Result<RunOutcome> {
    let n_x = config.grid.n_x;
    let n_z = config.grid.n_z;
    let depths = [0.5, 1.0, 2.0];
    let ks = [1u32, 2, 4, 8];
    let jobs: Vec<(f64, u32)> = depths.iter().flat_map(|&h| ks.iter().map(move |&k| (h, k))).collect();
    let errors = fan_out(jobs.clone(), |(h, k)| flat_dn_error(n_x, h, n_z, k)).into_iter().collect::<Result<Vec<_>>>()?;
    let orders = fan_out(jobs.clone(), |(h, k)| flat_dn_self_order(n_x, h, 16, k))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let table: Vec<Value> = jobs
        .iter()
        .zip(&errors)
        .zip(&orders)
        .map(|((&(h, k), e), o)| json!({"depth": h, "k": k, "relative_error": e, "self_order": o}))
        .collect();
    let max_err = errors.iter().copied().fold(0.0, f64::max);
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let checks = vec![
        Check::at_most("max_relative_error", max_err, 1e-4),
        Check::at_least("min_self_convergence_order", min_order, 2.0),
    ];
    let rows = initial_rows(config)?;
    Ok(RunOutcome::new(None, config.clone(), rows, checks, None, json!({ "table": table }), None))
}

fn preset_steady(config: &SimConfig) -> Result<RunOutcome> {
    let profiles = vec![
        ProfileConfig::Constant { c: 1.0 },
        ProfileConfig::Affine { c0: 1.0, c1: 0.1 },
        config.profile.clone(),
    ];
    let configs: Vec<SimConfig> = profiles
        .into_iter()
        .map(|p| {
            let mut c = config.clone();
            c.profile = p;
            c
        })
        .collect();
    let runs = fan_out(configs.clone(), |c| evolve(&c)).into_iter().collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    let mut table = Vec::new();
    let mut failure = None;
    for (c, (_, traj)) in configs.iter().zip(&runs) {
        let d = diagnostic_drift(&traj.rows);
        let name = match c.profile {
            ProfileConfig::Constant { .. } => "constant",
            ProfileConfig::Affine { .. } => "affine",
            ProfileConfig::Tanh { .. } => "tanh",
        };
        checks.push(Check::at_most(format!("drift_{name}"), d, 1e-10));
        table.push(json!({"profile": name, "drift": d, "steps": traj.steps_accepted}));
        failure = failure.or(traj.failure.clone());
    }
    let (stepper, last) = runs.into_iter().last().expect("three runs");
    let ckpt = checkpoint_of(config, &stepper.problem, &last.final_state);
    Ok(RunOutcome::new(None, config.clone(), last.rows, checks, failure, json!({ "table": table }), Some(ckpt)))
}

fn preset_muskat(config: &SimConfig) -> Result<RunOutcome> {
    let z_max = match config.depth {
        DepthConfig::Infinite { z_max } => z_max,
        DepthConfig::Finite { .. } => {
            return Err(Error::config("depth.mode", "muskat-decay needs infinite depth"));
        }
    };
    let spacing = z_max / (config.grid.n_z - 1) as f64;
    let jobs: Vec<(u32, f64)> = [1u32, 2, 3].iter().flat_map(|&k| [(k, z_max), (k, 2.0 * z_max)]).collect();
    let runs = fan_out(jobs.clone(), |(k, z)| {
        let mut c = config.clone();
        c.depth = DepthConfig::Infinite { z_max: z };
        c.grid.n_z = (z / spacing).round() as usize + 1;
        c.initial.f0.modes = vec![FourierMode { k, cos: 1e-3, sin: 0.0 }];
        decay_rate(&c, k)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut checks = Vec::new();
    let mut table = Vec::new();
    for (pair, job) in runs.chunks(2).zip(jobs.chunks(2)) {
        let k = job[0].0;
        let (r1, r2) = (pair[0].0, pair[1].0);
        let expect = k as f64;
        checks.push(Check::at_most(format!("rate_error_k{k}"), ((r1 - expect) / expect).abs(), 0.02));
        checks.push(Check::at_most(format!("depth_doubling_change_k{k}"), ((r2 - r1) / r1).abs(), 0.002));
        table.push(json!({"k": k, "rate": r1, "rate_doubled_depth": r2, "expected": expect}));
    }
    let rows = runs.into_iter().next().expect("runs").1.rows;
    Ok(RunOutcome::new(None, config.clone(), rows, checks, None, json!({ "fits": table }), None))
}

fn preset_stability(config: &SimConfig) -> Result<RunOutcome> {
    let profiles = [
        ("constant", StratificationProfile::Constant { c: 1.0 }),
        ("configured", config.profile.to_profile()),
    ];
    let mut checks = Vec::new();
    let mut table = serde_json::Map::new();
    for (name, p) in &profiles {
        let mins = stability_scan(p, &config.depth, 20, 11, 1.0, config.grid.n_x, config.grid.n_z)?;
        let violations = mins.iter().filter(|&&m| !(m > 0.0)).count();
        checks.push(Check::at_most(format!("violations_{name}"), violations as f64, 0.0));
        table.insert(name.to_string(), json!(mins));
    }
    let rows = initial_rows(config)?;
    Ok(RunOutcome::new(None, config.clone(), rows, checks, None, Value::Object(table), None))
}

fn preset_picard(config: &SimConfig) -> Result<RunOutcome> {
    let (main, floor) = picard(config)?;
    let mut small = config.clone();
    small.picard.nu = config.picard.nu / 10.0;
    let mut degenerate = config.clone();
    degenerate.profile = ProfileConfig::Constant { c: 1.0 };
    degenerate.initial.g0 = Default::default();
    let horizon = main.horizon;
    let others = fan_out(vec![small, degenerate], |c| picard_at_horizon(&c, horizon))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (small_run, _) = &others[0];
    let (degen, degen_floor) = &others[1];
    let target = config.picard.contraction_target;
    let s = config.sobolev_index;
    let nu_gap = (final_iterate_norm(&main, s) - final_iterate_norm(small_run, s)).abs();
    let checks = vec![
        Check::at_most("ratio_f", worst_ratio(&main.deltas_f, floor), target),
        Check::at_most("ratio_g", worst_ratio(&main.deltas_g, floor), target),
        Check::at_most("nu_robustness", nu_gap, 10.0 * config.picard.nu),
        Check::at_most("degenerate_delta_f3", degen.deltas_f[1], *degen_floor),
    ];
    let results = json!({
        "main": picard_json(&main, floor, s),
        "small_nu": picard_json(small_run, floor, s),
        "degenerate": picard_json(degen, *degen_floor, s),
        "deltas_f": main.deltas_f,
        "deltas_g": main.deltas_g,
        "measured_ratio": worst_ratio(&main.deltas_f, floor).max(worst_ratio(&main.deltas_g, floor)),
    });
    let rows = initial_rows(config)?;
    Ok(RunOutcome::new(None, config.clone(), rows, checks, None, results, None))
}

fn preset_conservation(config: &SimConfig) -> Result<RunOutcome> {
    let dt = config.stepper.dt.unwrap_or(0.1);
    let configs: Vec<SimConfig> = [dt, dt / 2.0]
        .iter()
        .map(|&d| {
            let mut c = config.clone();
            c.stepper.dt = Some(d);
            c
        })
        .collect();
    let runs = fan_out(configs.clone(), |c| conservation_run(&c)).into_iter().collect::<Result<Vec<_>>>()?;
    let (a, b) = (runs[0].0, runs[1].0);
    let ratio = (b.density_drift / a.density_drift).abs();
    let checks = vec![
        Check::at_most("mean_drift", a.mean_drift.max(b.mean_drift), 1e-8),
        Check::at_most("density_drift_ratio", ratio, 0.5),
        Check::at_most("tangency_ratio", a.max_tangency_ratio.max(b.max_tangency_ratio), 1e-8),
    ];
    let results = json!({ "runs": [a, b], "density_drift_ratio": ratio });
    let (_, traj) = runs.into_iter().nth(1).expect("two runs");
    let s = setup(&configs[1])?;
    let ckpt = checkpoint_of(&configs[1], &s.problem, &traj.final_state);
    Ok(RunOutcome::new(None, configs[1].clone(), traj.rows, checks, None, results, Some(ckpt)))
}
