//! Run configuration: JSON schema with defaults, validation with field
//! paths, dotted-path overrides, and conversion into solver objects.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::elliptic::SolverOptions;
use crate::error::{Error, Result};
use crate::flatten::{select_delta, Clustering, DepthMode, StripField, StripGrid};
use crate::picard::PicardSettings;
use crate::profiles::StratificationProfile;
use crate::spectral::{make_grid, FourierGrid, SurfaceField};
use crate::stepper::{ImplicitRule, Problem, Scheme, StepControl};

/// Surface dimension; the flattened strip is two dimensional.
pub const SURFACE_DIM: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: RunMode,
    pub depth: DepthConfig,
    pub grid: GridConfig,
    pub profile: ProfileConfig,
    pub initial: InitialConfig,
    /// Order of the Sobolev norms reported and monitored.
    pub sobolev_index: f64,
    pub thresholds: ThresholdConfig,
    pub stepper: StepperConfig,
    pub picard: PicardSettings,
    pub tolerances: ToleranceConfig,
    pub output: OutputConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Evolve,
            depth: DepthConfig::default(),
            grid: GridConfig::default(),
            profile: ProfileConfig::default(),
            initial: InitialConfig::default(),
            sobolev_index: 2.6,
            thresholds: ThresholdConfig::default(),
            stepper: StepperConfig::default(),
            picard: PicardSettings::default(),
            tolerances: ToleranceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Evolve,
    Picard,
}

fn unit() -> f64 {
    1.0
}

fn default_z_max() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DepthConfig {
    /// Bottom at `-depth + Σ modes`; the modes form the perturbation.
    Finite {
        #[serde(default = "unit")]
        depth: f64,
        #[serde(default)]
        bottom: Vec<FourierMode>,
    },
    /// Strip truncated at `z = -z_max`.
    Infinite {
        #[serde(default = "default_z_max")]
        z_max: f64,
    },
}

impl Default for DepthConfig {
    fn default() -> Self {
        DepthConfig::Finite {
            depth: 1.0,
            bottom: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_x: usize,
    /// Period; defaults to `2π`.
    pub length: f64,
    pub n_z: usize,
    pub clustering: Clustering,
    /// Fraction of the guaranteed jacobian floor each map must retain.
    pub jacobian_safety: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_x: 32,
            length: 2.0 * PI,
            n_z: 33,
            clustering: Clustering::Uniform,
            jacobian_safety: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Constant { c: f64 },
    Affine { c0: f64, c1: f64 },
    Tanh { a: f64, b: f64, ell: f64 },
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig::Constant { c: 1.0 }
    }
}

impl ProfileConfig {
    pub fn to_profile(&self) -> StratificationProfile {
        match *self {
            ProfileConfig::Constant { c } => StratificationProfile::Constant { c },
            ProfileConfig::Affine { c0, c1 } => StratificationProfile::Affine { c0, c1 },
            ProfileConfig::Tanh { a, b, ell } => StratificationProfile::Tanh { a, b, ell },
        }
    }
}

/// `cos · cos(k x') + sin · sin(k x')` with `x' = 2π x / L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode {
    pub k: u32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

impl FourierMode {
    fn eval(&self, phase: f64) -> f64 {
        let a = self.k as f64 * phase;
        self.cos * a.cos() + self.sin * a.sin()
    }
}

/// Modes `1..=count` with amplitude `amplitude / k^decay` and uniform phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomModes {
    pub count: u32,
    pub amplitude: f64,
    #[serde(default = "default_decay")]
    pub decay: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_decay() -> f64 {
    2.0
}

impl RandomModes {
    fn draw(&self) -> Vec<FourierMode> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (1..=self.count)
            .map(|k| {
                let amp = self.amplitude * rng.gen_range(0.0..1.0) / (k as f64).powf(self.decay);
                let phase = rng.gen_range(0.0..2.0 * PI);
                FourierMode {
                    k,
                    cos: amp * phase.cos(),
                    sin: amp * phase.sin(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceInit {
    pub mean: f64,
    pub modes: Vec<FourierMode>,
    pub random: Option<RandomModes>,
}

/// Separable strip mode: `mode(x) · exp(decay · z) · cos(kz · z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripMode {
    #[serde(flatten)]
    pub mode: FourierMode,
    #[serde(default)]
    pub decay: f64,
    #[serde(default)]
    pub kz: f64,
}

/// Gaussian bump, periodized in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gaussian {
    pub amplitude: f64,
    pub x0: f64,
    pub z0: f64,
    pub width_x: f64,
    pub width_z: f64,
}

/// Initial strip density, given in strip coordinates `(x, z)`. Random modes
/// carry the vertical factor `exp(k z)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripInit {
    pub modes: Vec<StripMode>,
    pub gaussians: Vec<Gaussian>,
    pub random: Option<RandomModes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub f0: SurfaceInit,
    pub g0: StripInit,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            f0: SurfaceInit {
                modes: vec![FourierMode {
                    k: 1,
                    cos: 0.05,
                    sin: 0.0,
                }],
                ..Default::default()
            },
            g0: StripInit::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    /// Lower bound on the stability functional.
    pub stability_floor: f64,
    /// Lower bound on the surface-bottom separation.
    pub separation_floor: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            stability_floor: 0.05,
            separation_floor: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: Option<f64>,
    pub cfl: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub implicit_rule: ImplicitRule,
    pub max_retries: usize,
    pub dealias: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        let c = StepControl::default();
        Self {
            scheme: c.scheme,
            dt: c.dt,
            cfl: c.cfl_target,
            dt_max: c.dt_max,
            t_end: 1.0,
            implicit_rule: c.implicit_rule,
            max_retries: c.max_retries,
            dealias: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub elliptic: f64,
    pub max_iterations: Option<usize>,
    pub bound_slack: f64,
    pub tangency: f64,
    /// Allowed change of the surface flux when the truncation depth doubles.
    pub tail: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            elliptic: s.rel_tol,
            max_iterations: s.max_iter,
            bound_slack: s.bound_slack,
            tangency: 1e-8,
            tail: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Time between diagnostics rows.
    pub interval: f64,
    /// Write a checkpoint of the final state.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            interval: 0.1,
            checkpoint: true,
        }
    }
}

fn check(ok: bool, path: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message()))
    }
}

fn positive(v: f64, path: &str) -> Result<()> {
    check(v.is_finite() && v > 0.0, path, || format!("must be a positive number, got {v}"))
}

fn finite(v: f64, path: &str) -> Result<()> {
    check(v.is_finite(), path, || format!("must be finite, got {v}"))
}

fn finite_modes(modes: &[FourierMode], path: &str) -> Result<()> {
    for (i, m) in modes.iter().enumerate() {
        finite(m.cos, &format!("{path}.{i}.cos"))?;
        finite(m.sin, &format!("{path}.{i}.sin"))?;
    }
    Ok(())
}

fn check_random(r: &Option<RandomModes>, path: &str) -> Result<()> {
    if let Some(r) = r {
        finite(r.amplitude, &format!("{path}.amplitude"))?;
        finite(r.decay, &format!("{path}.decay"))?;
    }
    Ok(())
}

impl SimConfig {
    /// Parses JSON text and validates it. Field errors carry their path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: SimConfig = serde_path_to_error::deserialize(&mut de).map_err(path_error)?;
        de.end().map_err(|e| Error::config("", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let config: SimConfig = serde_path_to_error::deserialize(value).map_err(path_error)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses `text` (or the defaults when `None`), applies `key=value`
    /// overrides in order, then validates.
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut value = match text {
            Some(t) => serde_json::from_str(t).map_err(|e| Error::config("", e.to_string()))?,
            None => serde_json::to_value(SimConfig::default()).expect("defaults serialize"),
        };
        for o in overrides {
            let (path, v) = parse_override(o)?;
            apply_override(&mut value, &path, v)?;
        }
        Self::from_value(value)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        check(g.n_x >= 4 && g.n_x % 2 == 0, "grid.n_x", || format!("must be even and at least 4, got {}", g.n_x))?;
        check(g.n_z >= 8, "grid.n_z", || format!("must be at least 8, got {}", g.n_z))?;
        positive(g.length, "grid.length")?;
        check(g.jacobian_safety > 0.0 && g.jacobian_safety <= 1.0, "grid.jacobian_safety", || {
            format!("must lie in (0, 1], got {}", g.jacobian_safety)
        })?;
        match &self.depth {
            DepthConfig::Finite { depth, bottom } => {
                positive(*depth, "depth.depth")?;
                finite_modes(bottom, "depth.bottom")?;
            }
            DepthConfig::Infinite { z_max } => positive(*z_max, "depth.z_max")?,
        }
        match self.profile {
            ProfileConfig::Constant { c } => finite(c, "profile.c")?,
            ProfileConfig::Affine { c0, c1 } => {
                finite(c0, "profile.c0")?;
                finite(c1, "profile.c1")?;
            }
            ProfileConfig::Tanh { a, b, ell } => {
                finite(a, "profile.a")?;
                finite(b, "profile.b")?;
                positive(ell, "profile.ell")?;
            }
        }
        let min_s = 1.5 + SURFACE_DIM as f64 / 2.0;
        check(self.sobolev_index.is_finite() && self.sobolev_index > min_s, "sobolev_index", || {
            format!("must exceed {min_s}, got {}", self.sobolev_index)
        })?;
        finite(self.initial.f0.mean, "initial.f0.mean")?;
        finite_modes(&self.initial.f0.modes, "initial.f0.modes")?;
        check_random(&self.initial.f0.random, "initial.f0.random")?;
        for (i, m) in self.initial.g0.modes.iter().enumerate() {
            let p = format!("initial.g0.modes.{i}");
            finite_modes(&[m.mode], &p)?;
            finite(m.decay, &format!("{p}.decay"))?;
            finite(m.kz, &format!("{p}.kz"))?;
        }
        for (i, b) in self.initial.g0.gaussians.iter().enumerate() {
            let p = format!("initial.g0.gaussians.{i}");
            finite(b.amplitude, &format!("{p}.amplitude"))?;
            finite(b.x0, &format!("{p}.x0"))?;
            finite(b.z0, &format!("{p}.z0"))?;
            positive(b.width_x, &format!("{p}.width_x"))?;
            positive(b.width_z, &format!("{p}.width_z"))?;
        }
        check_random(&self.initial.g0.random, "initial.g0.random")?;
        positive(self.thresholds.stability_floor, "thresholds.stability_floor")?;
        positive(self.thresholds.separation_floor, "thresholds.separation_floor")?;
        let s = &self.stepper;
        if let Some(dt) = s.dt {
            positive(dt, "stepper.dt")?;
        }
        check(s.cfl > 0.0 && s.cfl <= 1.0, "stepper.cfl", || format!("must lie in (0, 1], got {}", s.cfl))?;
        positive(s.dt_max, "stepper.dt_max")?;
        check(s.t_end.is_finite() && s.t_end >= 0.0, "stepper.t_end", || {
            format!("must be a non-negative number, got {}", s.t_end)
        })?;
        let p = &self.picard;
        check(p.n_max >= 2, "picard.n_max", || format!("must be at least 2, got {}", p.n_max))?;
        check(p.nu.is_finite() && p.nu >= 0.0, "picard.nu", || format!("must be non-negative, got {}", p.nu))?;
        check(p.mu > 0.0 && p.mu < 0.5, "picard.mu", || format!("must lie in (0, 1/2), got {}", p.mu))?;
        positive(p.horizon, "picard.horizon")?;
        check(p.substeps > 0, "picard.substeps", || "must be positive".into())?;
        check(p.contraction_target > 0.0 && p.contraction_target < 1.0, "picard.contraction_target", || {
            format!("must lie in (0, 1), got {}", p.contraction_target)
        })?;
        check(p.norm_growth.is_finite() && p.norm_growth > 1.0, "picard.norm_growth", || {
            format!("must exceed 1, got {}", p.norm_growth)
        })?;
        let t = &self.tolerances;
        positive(t.elliptic, "tolerances.elliptic")?;
        check(t.bound_slack.is_finite() && t.bound_slack >= 0.0, "tolerances.bound_slack", || {
            format!("must be non-negative, got {}", t.bound_slack)
        })?;
        positive(t.tangency, "tolerances.tangency")?;
        positive(t.tail, "tolerances.tail")?;
        if let Some(m) = t.max_iterations {
            check(m > 0, "tolerances.max_iterations", || "must be positive".into())?;
        }
        positive(self.output.interval, "output.interval")?;
        Ok(())
    }

    pub fn x_grid(&self) -> Result<Arc<FourierGrid>> {
        make_grid(self.grid.n_x, self.grid.length)
    }

    pub fn depth_mode(&self, x: &Arc<FourierGrid>) -> Result<DepthMode> {
        Ok(match &self.depth {
            DepthConfig::Finite { depth, bottom } => {
                let scale = 2.0 * PI / x.length();
                let b = SurfaceField::from_fn(x.clone(), |s| bottom.iter().map(|m| m.eval(scale * s)).sum::<f64>());
                DepthMode::Finite {
                    depth: *depth,
                    bottom: b,
                }
            }
            DepthConfig::Infinite { z_max } => DepthMode::Infinite { z_max: *z_max },
        })
    }

    pub fn strip_grid(&self, x: &Arc<FourierGrid>, depth: &DepthMode) -> Result<Arc<StripGrid>> {
        Ok(Arc::new(StripGrid::new(x.clone(), self.grid.n_z, depth.z_bot(), self.grid.clustering)?))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.tolerances.elliptic,
            max_iter: self.tolerances.max_iterations,
            bound_slack: self.tolerances.bound_slack,
        }
    }

    pub fn initial_surface(&self, x: &Arc<FourierGrid>) -> Result<SurfaceField> {
        let init = &self.initial.f0;
        let mut modes = init.modes.clone();
        if let Some(r) = &init.random {
            modes.extend(r.draw());
        }
        let scale = 2.0 * PI / x.length();
        let f = SurfaceField::from_fn(x.clone(), |s| init.mean + modes.iter().map(|m| m.eval(scale * s)).sum::<f64>());
        crate::error::ensure_finite(f.values(), "initial surface")?;
        Ok(f)
    }

    pub fn initial_density(&self, grid: &StripGrid) -> Result<StripField> {
        let init = &self.initial.g0;
        let length = grid.x_grid().length();
        let scale = 2.0 * PI / length;
        let random = init.random.map(|r| r.draw()).unwrap_or_default();
        let g = StripField::from_fn(grid, |x, z| {
            let phase = scale * x;
            let mut v = 0.0;
            for m in &init.modes {
                v += m.mode.eval(phase) * (m.decay * z).exp() * (m.kz * z).cos();
            }
            for b in &init.gaussians {
                let d = (x - b.x0 + 0.5 * length).rem_euclid(length) - 0.5 * length;
                v += b.amplitude * (-0.5 * (d / b.width_x).powi(2) - 0.5 * ((z - b.z0) / b.width_z).powi(2)).exp();
            }
            for m in &random {
                v += m.eval(phase) * (m.k as f64 * scale * z).exp();
            }
            v
        });
        crate::error::ensure_finite(g.data(), "initial density")?;
        Ok(g)
    }

    /// Problem definition for the given initial surface; the smoothing
    /// parameter is selected here.
    pub fn problem(&self, grid: Arc<StripGrid>, depth: DepthMode, f0: &SurfaceField) -> Result<Problem> {
        let delta = select_delta(f0, &depth, &grid, self.grid.jacobian_safety)?;
        Ok(self.problem_with_delta(grid, depth, delta))
    }

    /// Problem definition with a known smoothing parameter, as when
    /// restoring from a checkpoint.
    pub fn problem_with_delta(&self, grid: Arc<StripGrid>, depth: DepthMode, delta: f64) -> Problem {
        Problem {
            grid,
            depth,
            profile: self.profile.to_profile(),
            delta,
            jacobian_safety: self.grid.jacobian_safety,
            a_threshold: self.thresholds.stability_floor,
            d_threshold: self.thresholds.separation_floor,
            solver: self.solver_options(),
            tangency_tol: self.tolerances.tangency,
            s_index: self.sobolev_index,
            dealias: self.stepper.dealias,
        }
    }

    pub fn step_control(&self) -> StepControl {
        let s = &self.stepper;
        StepControl {
            dt: s.dt,
            cfl_target: s.cfl,
            dt_max: s.dt_max,
            scheme: s.scheme,
            implicit_rule: s.implicit_rule,
            max_retries: s.max_retries,
        }
    }
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> Error {
    let path = e.path().to_string();
    Error::config(if path == "." { String::new() } else { path }, e.into_inner().to_string())
}

/// Splits `a.b.c=value`. The value is read as JSON when it parses, and as a
/// bare string otherwise.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must have the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(text, "override key is empty"));
    }
    let mut path = Vec::new();
    for segment in key.split('.') {
        let valid = !segment.is_empty() && segment.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            return Err(Error::config(key, format!("invalid key segment `{segment}`")));
        }
        path.push(segment.to_string());
    }
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

/// Sets `path` inside `root`, creating objects as needed. Numeric segments
/// index existing arrays.
pub fn apply_override(root: &mut Value, path: &[String], value: Value) -> Result<()> {
    let dotted = path.join(".");
    let (last, parents) = path
        .split_last()
        .ok_or_else(|| Error::config("", "empty override path"))?;
    let mut node = root;
    for seg in parents {
        node = step_into(node, seg, &dotted)?;
    }
    match node {
        Value::Object(map) => {
            map.insert(last.clone(), value);
            Ok(())
        }
        Value::Array(items) => {
            let i: usize = last
                .parse()
                .map_err(|_| Error::config(&dotted, format!("`{last}` is not an array index")))?;
            let slot = items
                .get_mut(i)
                .ok_or_else(|| Error::config(&dotted, format!("index {i} is out of range")))?;
            *slot = value;
            Ok(())
        }
        _ => Err(Error::config(&dotted, "cannot set a field inside a non-object value")),
    }
}

fn step_into<'a>(node: &'a mut Value, seg: &str, dotted: &str) -> Result<&'a mut Value> {
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    match node {
        Value::Object(map) => Ok(map.entry(seg.to_string()).or_insert(Value::Null)),
        Value::Array(items) => {
            let i: usize = seg
                .parse()
                .map_err(|_| Error::config(dotted, format!("`{seg}` is not an array index")))?;
            items
                .get_mut(i)
                .ok_or_else(|| Error::config(dotted, format!("index {i} is out of range")))
        }
        _ => Err(Error::config(dotted, "cannot set a field inside a non-object value")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(SimConfig::from_json_str("{}").unwrap(), SimConfig::default());
    }

    #[test]
    fn defaults_round_trip() {
        let text = serde_json::to_string_pretty(&SimConfig::default()).unwrap();
        assert_eq!(SimConfig::from_json_str(&text).unwrap(), SimConfig::default());
    }

    #[test]
    fn odd_grid_is_rejected_with_path() {
        let err = SimConfig::from_json_str(r#"{"grid": {"n_x": 33}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "grid.n_x"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn low_sobolev_index_is_rejected() {
        let err = SimConfig::from_json_str(r#"{"sobolev_index": 2.0}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "sobolev_index"), "{err}");
    }

    #[test]
    fn nonpositive_depth_is_rejected() {
        let err = SimConfig::from_json_str(r#"{"depth": {"mode": "finite", "depth": 0}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "depth.depth"), "{err}");
    }

    #[test]
    fn unknown_field_reports_path() {
        let err = SimConfig::from_json_str(r#"{"stepper": {"sheme": "imex_euler"}}"#).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "stepper.sheme");
                assert!(message.contains("sheme"), "{message}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wrong_type_reports_nested_path() {
        let err = SimConfig::from_json_str(r#"{"initial": {"f0": {"modes": [{"k": 1, "cos": "x"}]}}}"#).unwrap_err();
        match err {
            Error::Config { path, .. } => assert_eq!(path, "initial.f0.modes[0].cos"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn override_parses_json_or_string() {
        let (p, v) = parse_override("stepper.dt=0.05").unwrap();
        assert_eq!(p, ["stepper", "dt"]);
        assert_eq!(v, serde_json::json!(0.05));
        let (_, v) = parse_override("stepper.scheme=imex_midpoint").unwrap();
        assert_eq!(v, serde_json::json!("imex_midpoint"));
        assert!(parse_override("no_equals").is_err());
        assert!(parse_override("a..b=1").is_err());
        assert!(parse_override("=1").is_err());
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = SimConfig::load(None, &["grid.n_x=64".into(), "grid.n_x=16".into(), "stepper.scheme=explicit_rk4".into()]).unwrap();
        assert_eq!(c.grid.n_x, 16);
        assert_eq!(c.stepper.scheme, Scheme::ExplicitRk4);
    }

    #[test]
    fn override_indexes_arrays() {
        let c = SimConfig::load(None, &["initial.f0.modes.0.cos=0.02".into()]).unwrap();
        assert_eq!(c.initial.f0.modes[0].cos, 0.02);
        assert!(SimConfig::load(None, &["initial.f0.modes.3.cos=0.02".into()]).is_err());
        assert!(SimConfig::load(None, &["grid.n_x.deep=1".into()]).is_err());
    }

    #[test]
    fn random_modes_are_seeded() {
        let r = RandomModes {
            count: 5,
            amplitude: 0.1,
            decay: 2.0,
            seed: 7,
        };
        assert_eq!(r.draw(), r.draw());
        let other = RandomModes { seed: 8, ..r };
        assert_ne!(r.draw(), other.draw());
    }

    #[test]
    fn gaussian_is_periodized() {
        let mut c = SimConfig::default();
        c.initial.g0.gaussians.push(Gaussian {
            amplitude: 1.0,
            x0: 0.0,
            z0: -0.5,
            width_x: 0.3,
            width_z: 0.2,
        });
        let x = c.x_grid().unwrap();
        let depth = c.depth_mode(&x).unwrap();
        let grid = c.strip_grid(&x, &depth).unwrap();
        let g = c.initial_density(&grid).unwrap();
        // Columns one step either side of x = 0 see the same bump.
        let j = grid.nz() / 2;
        let left = g.get(grid.nx() - 1, j);
        let right = g.get(1, j);
        assert!((left - right).abs() < 1e-12 * left.abs().max(1e-300));
    }
}
