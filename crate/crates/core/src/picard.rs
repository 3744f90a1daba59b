//! Iterative construction of solutions: alternately solve a regularized
//! nonlinear surface equation with a lagged source and a linear transport
//! equation with a lagged velocity, and measure successive differences.
//!
//! Level `n ≥ 2`:
//!
//! ```text
//! ∂_t f_n + G[f_n]Γ(f_n) + ν|D|^{1+μ} f_n = R_{n-1},   R_m = -(N·∇φ₂[f_m, g_m] + g_m)|_top
//! ∂_t g_n + ū_{n-1} · ∇g_n + γ′(y_{n-1}) u_{n-1,y} = 0
//! ```
//!
//! where `ū_m` combines the lift flux of level `m` with the source flux and
//! density of level `m - 1`. Level 0 is the initial data and level 1 its
//! spectral truncation to the lower half of the modes, both stationary.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    solve_potentials, strip_sobolev_norm, transport_tendency, vertical_strip_velocity, Potentials,
};
use crate::elliptic::EllipticOperator;
use crate::error::{Error, Result};
use crate::flatten::{FlatteningMap, StripField};
use crate::spectral::{FourierGrid, SurfaceField};
use crate::stepper::{imex_update, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardSettings {
    pub n_max: usize,
    /// Regularization strength `ν ≥ 0`.
    pub nu: f64,
    /// Regularization order `μ ∈ (0, 1/2)`.
    pub mu: f64,
    /// Initial time horizon.
    pub horizon: f64,
    /// Sub-steps per horizon (fixed under halving).
    pub substeps: usize,
    pub max_halvings: usize,
    /// Largest accepted ratio of successive differences.
    pub contraction_target: f64,
    /// Allowed growth of `‖f_n‖_{H^s}` relative to the data.
    pub norm_growth: f64,
}

impl Default for PicardSettings {
    fn default() -> Self {
        Self {
            n_max: 6,
            nu: 1e-3,
            mu: 0.25,
            horizon: 0.25,
            substeps: 20,
            max_halvings: 6,
            contraction_target: 0.75,
            norm_growth: 2.0,
        }
    }
}

/// One time level of one iterate.
#[derive(Debug, Clone)]
struct Frame {
    f: SurfaceField,
    g: StripField,
    map: FlatteningMap,
    /// `G[f]Γ(f)`.
    dn: Vec<f64>,
    lift_flux: StripField,
    source_flux: StripField,
    u_x: StripField,
    u_y: StripField,
    /// `R = -(source flux + g)` at the surface.
    remainder: Vec<f64>,
}

impl Frame {
    fn new(problem: &Problem, f: SurfaceField, g: StripField) -> Result<Self> {
        let map = problem.build_map(&f)?;
        let pot = solve_potentials(&map, &g, &problem.profile, problem.solver)?;
        Ok(Self::from_potentials(f, g, map, pot))
    }

    fn from_potentials(f: SurfaceField, g: StripField, map: FlatteningMap, pot: Potentials) -> Self {
        let (u_x, u_y) = crate::dynamics::physical_velocity(&map, &pot, &g);
        let top = g.nz() - 1;
        let remainder = pot
            .source
            .top_flux
            .iter()
            .zip(g.row(top))
            .map(|(s, gt)| -s - gt)
            .collect();
        Self {
            dn: pot.lift.top_flux.clone(),
            lift_flux: pot.lift.conormal,
            source_flux: pot.source.conormal,
            u_x,
            u_y,
            remainder,
            f,
            g,
            map,
        }
    }
}

/// All time levels of one iterate.
#[derive(Debug, Clone)]
struct Level {
    frames: Vec<Frame>,
}

impl Level {
    fn stationary(frame: Frame, count: usize) -> Self {
        Self {
            frames: vec![frame; count],
        }
    }
}

/// Lower-half spectral truncation.
fn truncate_surface(grid: &FourierGrid, v: &[f64]) -> Vec<f64> {
    let cut = (grid.len() / 4) as i64;
    let mut c = grid.forward(v);
    for (i, ci) in c.iter_mut().enumerate() {
        if grid.mode_number(i).abs() > cut {
            *ci = Complex64::default();
        }
    }
    grid.inverse(&c)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PicardAttempt {
    pub horizon: f64,
    pub deltas_f: Vec<f64>,
    pub deltas_g: Vec<f64>,
    pub outcome: String,
}

#[derive(Debug, Clone)]
pub struct PicardRun {
    pub nu: f64,
    pub mu: f64,
    /// Horizon of the accepted attempt.
    pub horizon: f64,
    pub halvings: usize,
    /// `(f_n, g̃_n)` at the final time, for `n = 1..=n_max`.
    pub iterates: Vec<(SurfaceField, StripField)>,
    /// `max_t ‖f_n − f_{n−1}‖_{H^{s−1}}`; entry `i` belongs to `n = i + 2`.
    pub deltas_f: Vec<f64>,
    /// Same for the strip density in the strip norm of order `s − 1`.
    pub deltas_g: Vec<f64>,
    /// Every attempt, the accepted one last.
    pub attempts: Vec<PicardAttempt>,
}

impl PicardRun {
    /// Ratios `deltas[n] / deltas[n−1]` for `n = 3..=n_max`; `None` where the
    /// previous difference is already at the solver floor.
    pub fn ratios(deltas: &[f64], floor: f64) -> Vec<Option<f64>> {
        deltas
            .windows(2)
            .map(|w| if w[0] <= floor { None } else { Some(w[1] / w[0]) })
            .collect()
    }
}

struct Attempt {
    levels_final: Vec<(SurfaceField, StripField)>,
    deltas_f: Vec<f64>,
    deltas_g: Vec<f64>,
}

enum AttemptError {
    /// Stability loss; retry with a shorter horizon.
    Unstable(String),
    Fatal(Error),
}

impl From<Error> for AttemptError {
    fn from(e: Error) -> Self {
        match e {
            Error::Jacobian { .. } | Error::Stability(_) => AttemptError::Unstable(e.to_string()),
            other => AttemptError::Fatal(other),
        }
    }
}

struct Context<'a> {
    problem: &'a Problem,
    settings: &'a PicardSettings,
    horizon: f64,
    norm_limit: f64,
}

impl<'a> Context<'a> {
    fn dt(&self) -> f64 {
        self.horizon / self.settings.substeps as f64
    }

    fn check(&self, frame_f: &SurfaceField, dn: &[f64], map: &FlatteningMap, level: usize, t: f64) -> std::result::Result<(), AttemptError> {
        let p = self.problem;
        let taylor_min = frame_f
            .values()
            .iter()
            .zip(dn)
            .map(|(&y, &g)| p.profile.gamma(y) - g)
            .fold(f64::INFINITY, f64::min);
        if !(taylor_min >= p.a_threshold) {
            return Err(AttemptError::Unstable(format!(
                "iterate {level} at t = {t:.4}: stability functional minimum {taylor_min:.4e} below {:.4e}",
                p.a_threshold
            )));
        }
        let sep = map.separation();
        if sep.is_finite() && !(sep >= p.d_threshold) {
            return Err(AttemptError::Unstable(format!(
                "iterate {level} at t = {t:.4}: surface-bottom separation {sep:.4e} below {:.4e}",
                p.d_threshold
            )));
        }
        let norm = frame_f.sobolev_norm(p.s_index);
        if !(norm <= self.norm_limit) {
            return Err(AttemptError::Unstable(format!(
                "iterate {level} at t = {t:.4}: surface H^s norm {norm:.4e} above {:.4e}",
                self.norm_limit
            )));
        }
        Ok(())
    }

    /// Strip velocity of level `m` at frame `k`, built from levels `m` and `m − 1`.
    fn strip_velocity(&self, cur: &Frame, prev: &Frame) -> StripField {
        let tendency: Vec<f64> = cur.dn.iter().zip(&prev.remainder).map(|(d, r)| -d + r).collect();
        let flux = cur.lift_flux.axpy(1.0, &prev.source_flux);
        vertical_strip_velocity(&cur.map, &flux, &prev.g, &tendency)
    }

    /// Computes level `n` from levels `n − 1` and `n − 2`.
    fn next_level(&self, n: usize, prev: &Level, prev2: &Level, f0: &SurfaceField, g0: &StripField) -> std::result::Result<Level, AttemptError> {
        let p = self.problem;
        let x = p.grid.x_grid();
        let dt = self.dt();
        let ks = self.settings;
        let reg = |k: f64| ks.nu * k.abs().powf(1.0 + ks.mu);
        let steps = self.settings.substeps;

        // Surface: regularized equation with lagged source, IMEX Euler.
        let mut surfaces = Vec::with_capacity(steps + 1);
        let mut f = f0.clone();
        for k in 0..=steps {
            let map = p.build_map(&f)?;
            let big: Vec<f64> = f.values().iter().map(|&y| p.profile.antiderivative(y)).collect();
            let lift = EllipticOperator::new(&map, p.solver).solve_dirichlet(&big)?;
            self.check(&f, &lift.top_flux, &map, n, k as f64 * dt)?;
            if k < steps {
                let fx = f.derivative();
                let c = f
                    .values()
                    .iter()
                    .zip(&lift.top_flux)
                    .zip(fx.values())
                    .map(|((&y, &g), s)| (p.profile.gamma(y) - g) / (1.0 + s * s))
                    .fold(f64::INFINITY, f64::min)
                    .max(0.0);
                let rhs: Vec<f64> = lift
                    .top_flux
                    .iter()
                    .zip(&prev.frames[k].remainder)
                    .map(|(d, r)| -d + r)
                    .collect();
                let mut rhs = if p.dealias { x.dealias(&rhs) } else { rhs };
                // Cancel the explicit copy of the regularization that the
                // update adds back, leaving it fully implicit.
                let damped = x.apply_multiplier(f.values(), |q| Complex64::new(reg(q), 0.0));
                for (r, d) in rhs.iter_mut().zip(&damped) {
                    *r -= d;
                }
                let next = imex_update(x, f.values(), &rhs, dt, |q| c * q.abs() + reg(q));
                let fnew = SurfaceField::new(x.clone(), next)?;
                surfaces.push((f, map, lift));
                f = fnew;
            } else {
                surfaces.push((f.clone(), map, lift));
            }
        }

        // Density: linear transport with the lagged velocity, Heun.
        let tendency = |k: usize, g: &StripField| -> StripField {
            let cur = &prev.frames[k];
            let ubar_z = self.strip_velocity(cur, &prev2.frames[k]);
            let t = transport_tendency(&cur.map, &cur.u_x, &ubar_z, &cur.u_y, g, &p.profile);
            if p.dealias {
                dealias_strip(x, &t)
            } else {
                t
            }
        };
        let mut densities = Vec::with_capacity(steps + 1);
        let mut g = g0.clone();
        densities.push(g.clone());
        for k in 0..steps {
            let a = tendency(k, &g);
            let pred = g.axpy(dt, &a);
            let b = tendency(k + 1, &pred);
            g = g.axpy(0.5 * dt, &a.axpy(1.0, &b));
            crate::error::ensure_finite(g.data(), "transported density")?;
            densities.push(g.clone());
        }

        // Frames of the new level.
        let mut frames = Vec::with_capacity(steps + 1);
        for ((f, map, lift), g) in surfaces.into_iter().zip(densities) {
            let source = EllipticOperator::new(&map, p.solver).solve_source(&g)?;
            frames.push(Frame::from_potentials(f, g, map, Potentials { lift, source }));
        }
        Ok(Level { frames })
    }

    fn attempt(&self, f0: &SurfaceField, g0: &StripField) -> std::result::Result<Attempt, AttemptError> {
        let p = self.problem;
        let x = p.grid.x_grid();
        let count = self.settings.substeps + 1;
        let level0 = Level::stationary(Frame::new(p, f0.clone(), g0.clone())?, count);
        let f1 = SurfaceField::new(x.clone(), truncate_surface(x, f0.values()))?;
        let mut g1 = g0.clone();
        for j in 0..g1.nz() {
            let row = truncate_surface(x, g0.row(j));
            g1.row_mut(j).copy_from_slice(&row);
        }
        let frame1 = Frame::new(p, f1, g1)?;
        self.check(&frame1.f, &frame1.dn, &frame1.map, 1, 0.0)?;
        let level1 = Level::stationary(frame1, count);

        let s_low = p.s_index - 1.0;
        let mut levels_final = vec![(level1.frames[0].f.clone(), level1.frames[0].g.clone())];
        let mut deltas_f = Vec::new();
        let mut deltas_g = Vec::new();
        let (mut prev2, mut prev) = (level0, level1);
        for n in 2..=self.settings.n_max {
            let next = self.next_level(n, &prev, &prev2, f0, g0)?;
            let mut df: f64 = 0.0;
            let mut dg: f64 = 0.0;
            for (a, b) in next.frames.iter().zip(&prev.frames) {
                let diff: Vec<f64> = a.f.values().iter().zip(b.f.values()).map(|(x, y)| x - y).collect();
                df = df.max(x.sobolev_norm(&diff, s_low));
                dg = dg.max(strip_sobolev_norm(&p.grid, &a.g.axpy(-1.0, &b.g), s_low));
            }
            deltas_f.push(df);
            deltas_g.push(dg);
            let last = next.frames.last().expect("frames");
            levels_final.push((last.f.clone(), last.g.clone()));
            prev2 = prev;
            prev = next;
        }
        Ok(Attempt {
            levels_final,
            deltas_f,
            deltas_g,
        })
    }
}

fn dealias_strip(x: &FourierGrid, g: &StripField) -> StripField {
    let mut out = g.clone();
    let mut scratch = vec![Complex64::default(); x.len()];
    for j in 0..g.nz() {
        x.dealias_into(g.row(j), out.row_mut(j), &mut scratch);
    }
    out
}

/// Floor below which a successive difference counts as converged.
pub fn delta_floor(problem: &Problem, f0: &SurfaceField) -> f64 {
    1e3 * problem.solver.rel_tol * (1.0 + f0.sobolev_norm(problem.s_index - 1.0))
}

fn contracts(deltas: &[f64], floor: f64, target: f64) -> bool {
    PicardRun::ratios(deltas, floor)
        .iter()
        .all(|r| r.map_or(true, |r| r <= target))
}

/// Runs the iteration, halving the horizon until every ratio of successive
/// differences from the third iterate on is at most the contraction target.
pub fn picard_iterate(problem: &Problem, settings: &PicardSettings, f0: &SurfaceField, g0: &StripField) -> Result<PicardRun> {
    if settings.n_max < 2 {
        return Err(Error::InvalidInput("picard iteration needs n_max >= 2".into()));
    }
    if !(settings.mu > 0.0 && settings.mu < 0.5) {
        return Err(Error::InvalidInput(format!("regularization order must lie in (0, 1/2), got {}", settings.mu)));
    }
    if !(settings.nu >= 0.0) || !(settings.horizon > 0.0) || settings.substeps == 0 {
        return Err(Error::InvalidInput("invalid picard settings".into()));
    }
    let norm_limit = settings.norm_growth * f0.sobolev_norm(problem.s_index).max(1e-3);
    let floor = delta_floor(problem, f0);
    let mut attempts = Vec::new();
    let mut horizon = settings.horizon;
    for halvings in 0..=settings.max_halvings {
        let ctx = Context {
            problem,
            settings,
            horizon,
            norm_limit,
        };
        match ctx.attempt(f0, g0) {
            Ok(a) => {
                let ok = contracts(&a.deltas_f, floor, settings.contraction_target)
                    && contracts(&a.deltas_g, floor, settings.contraction_target);
                attempts.push(PicardAttempt {
                    horizon,
                    deltas_f: a.deltas_f.clone(),
                    deltas_g: a.deltas_g.clone(),
                    outcome: if ok { "contracted".into() } else { "not contracting".into() },
                });
                if ok {
                    return Ok(PicardRun {
                        nu: settings.nu,
                        mu: settings.mu,
                        horizon,
                        halvings,
                        iterates: a.levels_final,
                        deltas_f: a.deltas_f,
                        deltas_g: a.deltas_g,
                        attempts,
                    });
                }
            }
            Err(AttemptError::Unstable(msg)) => attempts.push(PicardAttempt {
                horizon,
                deltas_f: Vec::new(),
                deltas_g: Vec::new(),
                outcome: msg,
            }),
            Err(AttemptError::Fatal(e)) => return Err(e),
        }
        horizon *= 0.5;
    }
    let last = attempts.last().map(|a| a.outcome.clone()).unwrap_or_default();
    Err(Error::Stability(format!(
        "picard iteration failed after {} horizon halvings: {last}",
        settings.max_halvings
    )))
}
