//! Time integration of the coupled surface/density system.
//!
//! The surface equation is split as `∂_t f = -c|D| f + (rhs + c|D| f)` with
//! a scalar `c` taken from the stability functional, the first part
//! implicit (diagonal in Fourier space) and the rest explicit. The density
//! is advanced explicitly with the same stages. Steps are transactional: a
//! rejected attempt leaves the accepted state untouched and is retried
//! with half the step.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    assemble_velocity, conserved_quantities, rhs_density, ConservedQuantities, StabilityReport, VelocityBundle,
};
use crate::elliptic::SolverOptions;
use crate::error::{Error, Result};
use crate::flatten::{build_map, DepthMode, FlatteningMap, StripField, StripGrid};
use crate::profiles::StratificationProfile;
use crate::spectral::SurfaceField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Implicit-explicit Euler.
    ImexEuler,
    /// Two-stage second-order implicit-explicit midpoint.
    ImexMidpoint,
    ExplicitRk4,
}

impl Scheme {
    pub fn order(self) -> usize {
        match self {
            Scheme::ImexEuler => 1,
            Scheme::ImexMidpoint => 2,
            Scheme::ExplicitRk4 => 4,
        }
    }

    pub fn is_implicit(self) -> bool {
        !matches!(self, Scheme::ExplicitRk4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitRule {
    /// Recompute `c = min 𝒯 / (1 + f_x²)` at every step.
    MinTaylor,
    /// Keep the value computed from the initial state.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    /// Fixed step; when `None` the step follows [`cfl_dt`].
    pub dt: Option<f64>,
    pub cfl_target: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    pub implicit_rule: ImplicitRule,
    pub max_retries: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt: None,
            cfl_target: 0.5,
            dt_max: 1e-2,
            scheme: Scheme::ImexEuler,
            implicit_rule: ImplicitRule::MinTaylor,
            max_retries: 6,
        }
    }
}

/// Everything that stays fixed during a run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Arc<StripGrid>,
    pub depth: DepthMode,
    pub profile: StratificationProfile,
    /// Smoothing parameter, chosen once from the initial surface.
    pub delta: f64,
    /// Fraction of the guaranteed jacobian floor that every map must keep.
    pub jacobian_safety: f64,
    pub a_threshold: f64,
    pub d_threshold: f64,
    pub solver: SolverOptions,
    pub tangency_tol: f64,
    pub s_index: f64,
    /// Apply the 2/3 rule to all tendencies.
    pub dealias: bool,
}

impl Problem {
    pub fn build_map(&self, f: &SurfaceField) -> Result<FlatteningMap> {
        build_map(f, &self.depth, self.delta, &self.grid, self.jacobian_safety)
    }

    /// Largest wavenumber carried by the tendencies.
    pub fn k_max(&self) -> f64 {
        let x = self.grid.x_grid();
        if self.dealias {
            x.max_resolved_wavenumber()
        } else {
            x.wavenumbers().iter().fold(0.0, |m, k| m.max(k.abs()))
        }
    }

    fn dealias_surface(&self, v: &[f64]) -> Vec<f64> {
        if self.dealias {
            self.grid.x_grid().dealias(v)
        } else {
            v.to_vec()
        }
    }

    fn dealias_strip(&self, g: &StripField) -> StripField {
        if !self.dealias {
            return g.clone();
        }
        let x = self.grid.x_grid();
        let mut out = g.clone();
        let mut scratch = vec![Complex64::default(); x.len()];
        for j in 0..g.nz() {
            x.dealias_into(g.row(j), out.row_mut(j), &mut scratch);
        }
        out
    }
}

/// Surface, density, map and tendencies of one time level.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub f: SurfaceField,
    pub g_strip: StripField,
    pub map: FlatteningMap,
    pub stability: StabilityReport,
    pub velocity: VelocityBundle,
    /// Tendencies after optional dealiasing.
    pub rhs_f: Vec<f64>,
    pub rhs_g: StripField,
}

impl SimState {
    pub fn conserved(&self, problem: &Problem) -> ConservedQuantities {
        conserved_quantities(&self.map, &self.g_strip, &problem.profile, problem.s_index)
    }

    /// `min 𝒯 / (1 + f_x²)`, floored at zero.
    pub fn implicit_coefficient(&self) -> f64 {
        let fx = self.f.derivative();
        self.stability
            .taylor
            .values()
            .iter()
            .zip(fx.values())
            .map(|(t, s)| t / (1.0 + s * s))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

/// Failure of a single attempt; retryable unless `fatal`.
#[derive(Debug)]
struct Attempt {
    fatal: bool,
    error: Error,
}

impl From<Error> for Attempt {
    fn from(error: Error) -> Self {
        let fatal = matches!(
            error,
            Error::SolverDiverged { .. } | Error::VariationalBound { .. } | Error::Tangency { .. } | Error::NonFinite(_)
        );
        Attempt { fatal, error }
    }
}

/// Builds a complete state (map, velocity, tendencies, stability) for `f` and `g`.
pub fn evaluate_state(problem: &Problem, t: f64, f: SurfaceField, g_strip: StripField) -> Result<SimState> {
    let map = problem.build_map(&f)?;
    let velocity = assemble_velocity(&map, &g_strip, &problem.profile, problem.solver)?;
    let rhs_g = rhs_density(&map, &velocity, &g_strip, &problem.profile, problem.tangency_tol)?;
    let rhs_g = problem.dealias_strip(&rhs_g);
    let rhs_f = problem.dealias_surface(velocity.surface_normal_speed.values());
    let stability = StabilityReport::from_dn(
        &map,
        &problem.profile,
        &velocity.dn_antiderivative,
        problem.a_threshold,
        problem.d_threshold,
    );
    Ok(SimState {
        t,
        f,
        g_strip,
        map,
        stability,
        velocity,
        rhs_f,
        rhs_g,
    })
}

/// Initial state; fails if the stability thresholds are not met.
pub fn initial_state(problem: &Problem, f: SurfaceField, g_strip: StripField) -> Result<SimState> {
    let state = evaluate_state(problem, 0.0, f, g_strip)?;
    if let Some(v) = state.stability.violation(problem.a_threshold, problem.d_threshold) {
        return Err(Error::Stability(v));
    }
    Ok(state)
}

/// Step-size bound: advective limits in x and z and the stiffness limit of
/// the explicitly treated part of the surface operator.
pub fn cfl_dt(problem: &Problem, state: &SimState, control: &StepControl) -> f64 {
    let grid = &problem.grid;
    let dx = grid.x_grid().dx();
    let ux = state.velocity.ubar_x.max_abs();
    let mut bound = f64::INFINITY;
    if ux > 0.0 {
        bound = bound.min(dx / ux);
    }
    let z = grid.z_nodes();
    let m = grid.nz();
    for j in 0..m {
        let h = if j == 0 {
            z[1] - z[0]
        } else if j == m - 1 {
            z[m - 1] - z[m - 2]
        } else {
            (z[j] - z[j - 1]).min(z[j + 1] - z[j])
        };
        let w = state.velocity.ubar_z.row(j).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if w > 0.0 {
            bound = bound.min(h / w);
        }
    }
    let c_max = state.stability.taylor.max().max(0.0);
    let c_imp = if control.scheme.is_implicit() {
        state.implicit_coefficient()
    } else {
        0.0
    };
    let stiff = (c_max - c_imp) * problem.k_max();
    if stiff > 0.0 {
        bound = bound.min(1.0 / stiff);
    }
    if bound.is_finite() {
        (control.cfl_target * bound).min(control.dt_max)
    } else {
        control.dt_max
    }
}

/// `(I + dt·c|D|)⁻¹ (f + dt (rhs + c|D| f))`.
pub(crate) fn imex_update(
    grid: &crate::spectral::FourierGrid,
    f: &[f64],
    rhs: &[f64],
    dt: f64,
    symbol: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let fc = grid.forward(f);
    let rc = grid.forward(rhs);
    let ks = grid.wavenumbers();
    let out: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let l = symbol(ks[i]);
            (fc[i] + (rc[i] + fc[i] * l) * dt) / (1.0 + dt * l)
        })
        .collect();
    grid.inverse(&out)
}

fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

/// Outcome of one accepted step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub dt: f64,
    pub retries: usize,
    /// `max boundary |ū_z| / (1 + ‖ū‖_∞)` of the accepted state.
    pub tangency_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Stepper {
    pub problem: Problem,
    pub control: StepControl,
    frozen_coefficient: Option<f64>,
}

impl Stepper {
    pub fn new(problem: Problem, control: StepControl) -> Self {
        Self {
            problem,
            control,
            frozen_coefficient: None,
        }
    }

    pub fn initial_state(&mut self, f: SurfaceField, g_strip: StripField) -> Result<SimState> {
        let state = initial_state(&self.problem, f, g_strip)?;
        self.frozen_coefficient = Some(state.implicit_coefficient());
        Ok(state)
    }

    fn coefficient(&self, state: &SimState) -> f64 {
        match (self.control.implicit_rule, self.frozen_coefficient) {
            (ImplicitRule::Frozen, Some(c)) => c,
            _ => state.implicit_coefficient(),
        }
    }

    /// Proposed step for `state` (before any retry halving).
    pub fn proposed_dt(&self, state: &SimState) -> f64 {
        self.control
            .dt
            .unwrap_or_else(|| cfl_dt(&self.problem, state, &self.control))
    }

    fn attempt(&self, state: &SimState, dt: f64) -> std::result::Result<SimState, Attempt> {
        let p = &self.problem;
        let x = p.grid.x_grid();
        let t_new = state.t + dt;
        let new = match self.control.scheme {
            Scheme::ImexEuler => {
                let c = self.coefficient(state);
                let f = imex_update(x, state.f.values(), &state.rhs_f, dt, |k| c * k.abs());
                let g = state.g_strip.axpy(dt, &state.rhs_g);
                evaluate_state(p, t_new, SurfaceField::new(x.clone(), f)?, g)?
            }
            Scheme::ImexMidpoint => {
                let c = self.coefficient(state);
                let f_half = imex_update(x, state.f.values(), &state.rhs_f, 0.5 * dt, |k| c * k.abs());
                let g_half = state.g_strip.axpy(0.5 * dt, &state.rhs_g);
                let mid = evaluate_state(p, state.t + 0.5 * dt, SurfaceField::new(x.clone(), f_half)?, g_half)?;
                let f = axpy(state.f.values(), dt, &mid.rhs_f);
                let g = state.g_strip.axpy(dt, &mid.rhs_g);
                evaluate_state(p, t_new, SurfaceField::new(x.clone(), f)?, g)?
            }
            Scheme::ExplicitRk4 => {
                let stage = |base: &SimState, h: f64, t: f64| -> Result<SimState> {
                    let f = axpy(state.f.values(), h, &base.rhs_f);
                    let g = state.g_strip.axpy(h, &base.rhs_g);
                    evaluate_state(p, t, SurfaceField::new(x.clone(), f)?, g)
                };
                let k2 = stage(state, 0.5 * dt, state.t + 0.5 * dt)?;
                let k3 = stage(&k2, 0.5 * dt, state.t + 0.5 * dt)?;
                let k4 = stage(&k3, dt, t_new)?;
                let n = x.len();
                let f: Vec<f64> = (0..n)
                    .map(|i| {
                        state.f.values()[i]
                            + dt / 6.0 * (state.rhs_f[i] + 2.0 * k2.rhs_f[i] + 2.0 * k3.rhs_f[i] + k4.rhs_f[i])
                    })
                    .collect();
                let mut g = state.g_strip.clone();
                for i in 0..g.data().len() {
                    g.data_mut()[i] += dt / 6.0
                        * (state.rhs_g.data()[i]
                            + 2.0 * k2.rhs_g.data()[i]
                            + 2.0 * k3.rhs_g.data()[i]
                            + k4.rhs_g.data()[i]);
                }
                evaluate_state(p, t_new, SurfaceField::new(x.clone(), f)?, g)?
            }
        };
        if let Some(v) = new.stability.violation(p.a_threshold, p.d_threshold) {
            return Err(Attempt {
                fatal: false,
                error: Error::Stability(v),
            });
        }
        Ok(new)
    }

    /// Advances by at most `dt`, halving on rejection. The input state is
    /// never modified.
    pub fn step(&self, state: &SimState, dt: f64) -> Result<(SimState, StepInfo)> {
        let mut h = dt;
        let mut last = None;
        for retries in 0..=self.control.max_retries {
            match self.attempt(state, h) {
                Ok(new) => {
                    let v = &new.velocity;
                    let info = StepInfo {
                        dt: h,
                        retries,
                        tangency_ratio: v.tangency_residual / (1.0 + v.ubar_max),
                    };
                    return Ok((new, info));
                }
                Err(a) if a.fatal => return Err(a.error),
                Err(a) => {
                    last = Some(a.error);
                    h *= 0.5;
                }
            }
        }
        Err(Error::StepFailed {
            t: state.t,
            retries: self.control.max_retries,
            reason: last.map(|e| e.to_string()).unwrap_or_default(),
        })
    }
}

/// One line of the diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub hs_f: f64,
    pub hs_g: f64,
    pub taylor_min: f64,
    pub separation_min: f64,
    pub mean_f: f64,
    pub total_density: f64,
    pub dt: f64,
    pub step_status: String,
}

impl DiagnosticsRow {
    pub const HEADER: &'static str = "t,Hs_f,Hs_g,taylor_min,separation_min,mean_f,total_density,dt,step_status";

    pub fn from_state(problem: &Problem, state: &SimState, dt: f64, status: impl Into<String>) -> Self {
        let q = state.conserved(problem);
        Self {
            t: state.t,
            hs_f: q.sobolev_f,
            hs_g: q.sobolev_g,
            taylor_min: state.stability.taylor_min,
            separation_min: state.stability.separation_min,
            mean_f: q.mean_f,
            total_density: q.total_density,
            dt,
            step_status: status.into(),
        }
    }

    /// CSV line using shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.t,
            self.hs_f,
            self.hs_g,
            self.taylor_min,
            self.separation_min,
            self.mean_f,
            self.total_density,
            self.dt,
            self.step_status
        )
    }
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticsRow>,
    /// Surface values at every output time.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub steps_accepted: usize,
    pub steps_retried: usize,
    /// Largest tangency ratio over all accepted states.
    pub max_tangency_ratio: f64,
    pub final_state: SimState,
    /// Set when the run stopped early.
    pub failure: Option<String>,
}

/// Steps from `state` to `t_end`, emitting diagnostics every `interval`
/// (steps are shortened to land on output times).
pub fn run(stepper: &Stepper, state: SimState, t_end: f64, interval: f64) -> Trajectory {
    let problem = &stepper.problem;
    let mut rows = vec![DiagnosticsRow::from_state(problem, &state, 0.0, "init")];
    let mut snapshots = vec![(state.t, state.f.values().to_vec())];
    let mut max_tangency_ratio = state.velocity.tangency_residual / (1.0 + state.velocity.ubar_max);
    let mut state = state;
    let mut accepted = 0;
    let mut retried = 0;
    let interval = if interval > 0.0 { interval } else { t_end.max(f64::MIN_POSITIVE) };
    let eps = 1e-12 * t_end.abs().max(1.0);
    let mut outputs = 1usize;
    let mut failure = None;
    while state.t < t_end - eps {
        let mut target = (outputs as f64 * interval).min(t_end);
        if t_end - target <= eps {
            target = t_end;
        }
        let dt = stepper.proposed_dt(&state).min(target - state.t);
        match stepper.step(&state, dt) {
            Ok((new, info)) => {
                accepted += 1;
                retried += info.retries;
                max_tangency_ratio = max_tangency_ratio.max(info.tangency_ratio);
                state = new;
                if (target - state.t).abs() <= eps {
                    state.t = target;
                    let status = if info.retries == 0 {
                        "ok".to_string()
                    } else {
                        format!("retried:{}", info.retries)
                    };
                    rows.push(DiagnosticsRow::from_state(problem, &state, info.dt, status));
                    snapshots.push((state.t, state.f.values().to_vec()));
                    outputs += 1;
                }
            }
            Err(e) => {
                rows.push(DiagnosticsRow::from_state(problem, &state, dt, "failed"));
                failure = Some(e.to_string());
                break;
            }
        }
    }
    Trajectory {
        rows,
        snapshots,
        steps_accepted: accepted,
        steps_retried: retried,
        max_tangency_ratio,
        final_state: state,
        failure,
    }
}

/// Ordinary least-squares slope of `ln |c_k(t)|` against `t`, where `c_k`
/// is the Fourier coefficient of storage index `mode` in each snapshot.
pub fn fit_decay_rate(grid: &crate::spectral::FourierGrid, snapshots: &[(f64, Vec<f64>)], mode: usize) -> f64 {
    let pts: Vec<(f64, f64)> = snapshots
        .iter()
        .map(|(t, f)| (*t, grid.forward(f)[mode].norm().ln()))
        .collect();
    least_squares_slope(&pts)
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
