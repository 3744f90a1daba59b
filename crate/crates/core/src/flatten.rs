//! The strip `[0, L) × [z_bot, 0]`, the graph-following change of variables
//! `(x, z) ↦ (x, y(x, z))` onto the fluid region, and the coefficients of
//! the transported Laplacian.
//!
//! Infinite depth (truncated at `z = -Z`):
//!
//! ```text
//! y = z + e^{δ z ⟨D⟩} f
//! ```
//!
//! Finite depth, bottom `b = -H + b0`:
//!
//! ```text
//! y = (z + 1) e^{δ z ⟨D⟩} f - z e^{-δ (z + 1) ⟨D⟩} b0 + z H
//! ```
//!
//! z-derivatives are analytic; x-derivatives are spectral.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};
use crate::spectral::{FourierGrid, SurfaceField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clustering {
    Uniform,
    /// `z = z_bot (1 - sin(π s / 2))`, refined towards the surface.
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripGrid {
    x: Arc<FourierGrid>,
    z: Vec<f64>,
}

impl StripGrid {
    pub fn new(x: Arc<FourierGrid>, n_z: usize, z_bot: f64, clustering: Clustering) -> Result<Self> {
        if n_z < 8 {
            return Err(Error::Grid(format!("need at least 8 z nodes, got {n_z}")));
        }
        if !(z_bot.is_finite() && z_bot < 0.0) {
            return Err(Error::Grid(format!("strip bottom must be negative, got {z_bot}")));
        }
        let last = (n_z - 1) as f64;
        let mut z: Vec<f64> = (0..n_z)
            .map(|j| {
                let s = j as f64 / last;
                match clustering {
                    Clustering::Uniform => z_bot * (1.0 - s),
                    Clustering::Cosine => z_bot * (1.0 - (0.5 * std::f64::consts::PI * s).sin()),
                }
            })
            .collect();
        z[0] = z_bot;
        z[n_z - 1] = 0.0;
        Self::from_nodes(x, z)
    }

    pub fn from_nodes(x: Arc<FourierGrid>, z: Vec<f64>) -> Result<Self> {
        if z.len() < 8 {
            return Err(Error::Grid(format!("need at least 8 z nodes, got {}", z.len())));
        }
        if z.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("z nodes must be strictly increasing".into()));
        }
        if *z.last().unwrap() != 0.0 {
            return Err(Error::Grid("top z node must be 0".into()));
        }
        Ok(Self { x, z })
    }

    pub fn x_grid(&self) -> &Arc<FourierGrid> {
        &self.x
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nz(&self) -> usize {
        self.z.len()
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn z_bot(&self) -> f64 {
        self.z[0]
    }

    /// Width of cell `c`, between nodes `c` and `c + 1`.
    pub fn cell_width(&self, c: usize) -> f64 {
        self.z[c + 1] - self.z[c]
    }

    pub fn cell_mid(&self, c: usize) -> f64 {
        0.5 * (self.z[c] + self.z[c + 1])
    }

    pub fn min_spacing(&self) -> f64 {
        self.z.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Weights of the piecewise-cubic z-quadrature: each cell integrates the
    /// cubic through the four nearest nodes.
    pub fn z_quadrature_weights(&self) -> Vec<f64> {
        let z = &self.z;
        let m = z.len();
        let mut w = vec![0.0; m];
        // Two-point Gauss rule is exact for the cubic on each cell.
        let g = 0.5 / 3f64.sqrt();
        for c in 0..m - 1 {
            let start = c.saturating_sub(1).min(m - 4);
            let nodes = &z[start..start + 4];
            let (mid, h) = (0.5 * (z[c] + z[c + 1]), z[c + 1] - z[c]);
            for q in [mid - g * h, mid + g * h] {
                for a in 0..4 {
                    let mut l = 1.0;
                    for b in 0..4 {
                        if a != b {
                            l *= (q - nodes[b]) / (nodes[a] - nodes[b]);
                        }
                    }
                    w[start + a] += 0.5 * h * l;
                }
            }
        }
        w
    }

    /// Trapezoid weights in z.
    pub fn z_weights(&self) -> Vec<f64> {
        let m = self.nz();
        let mut w = vec![0.0; m];
        for c in 0..m - 1 {
            let h = self.cell_width(c);
            w[c] += 0.5 * h;
            w[c + 1] += 0.5 * h;
        }
        w
    }
}

/// Values on the strip nodes, stored row by row (one row per z node, bottom first).
#[derive(Debug, Clone, PartialEq)]
pub struct StripField {
    nx: usize,
    nz: usize,
    data: Vec<f64>,
}

impl StripField {
    pub fn zeros(nx: usize, nz: usize) -> Self {
        Self {
            nx,
            nz,
            data: vec![0.0; nx * nz],
        }
    }

    pub fn zeros_like(grid: &StripGrid) -> Self {
        Self::zeros(grid.nx(), grid.nz())
    }

    pub fn from_data(nx: usize, nz: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nx * nz {
            return Err(Error::Grid(format!(
                "strip field has {} values, expected {}",
                data.len(),
                nx * nz
            )));
        }
        Ok(Self { nx, nz, data })
    }

    pub fn from_fn(grid: &StripGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = grid.x_grid().points();
        let mut data = Vec::with_capacity(grid.nx() * grid.nz());
        for &z in grid.z_nodes() {
            data.extend(xs.iter().map(|&x| f(x, z)));
        }
        Self {
            nx: grid.nx(),
            nz: grid.nz(),
            data,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.nx..(j + 1) * self.nx]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nx..(j + 1) * self.nx]
    }

    pub fn top(&self) -> &[f64] {
        self.row(self.nz - 1)
    }

    pub fn get(&self, ix: usize, iz: usize) -> f64 {
        self.data[iz * self.nx + ix]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs_diff(&self, other: &StripField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &StripField) -> Self {
        Self {
            nx: self.nx,
            nz: self.nz,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + scale * b)
                .collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            nz: self.nz,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &StripField, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            nz: self.nz,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// Weights of the derivative of the Lagrange interpolant through `nodes`,
/// evaluated at `x0`.
pub fn first_derivative_weights(x0: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    (0..n)
        .map(|a| {
            let mut sum = 0.0;
            for b in (0..n).filter(|&b| b != a) {
                let mut term = 1.0 / (nodes[a] - nodes[b]);
                for c in (0..n).filter(|&c| c != a && c != b) {
                    term *= (x0 - nodes[c]) / (nodes[a] - nodes[c]);
                }
                sum += term;
            }
            sum
        })
        .collect()
}

/// Stencils for `∂_z` on the strip nodes: five-point centered where
/// possible, three-point one-sided at the two boundary rows.
#[derive(Debug, Clone)]
pub struct VerticalStencil {
    rows: Vec<(usize, Vec<f64>)>,
}

impl VerticalStencil {
    pub fn new(grid: &StripGrid) -> Self {
        let z = grid.z_nodes();
        let m = z.len();
        let rows = (0..m)
            .map(|j| {
                let start = if j == 0 {
                    0
                } else if j == m - 1 {
                    m - 3
                } else {
                    j.saturating_sub(2).min(m - 5)
                };
                let len = if j == 0 || j == m - 1 { 3 } else { 5 };
                (start, first_derivative_weights(z[j], &z[start..start + len]))
            })
            .collect();
        Self { rows }
    }

    pub fn apply(&self, field: &StripField) -> StripField {
        let nx = field.nx();
        let mut out = StripField::zeros(nx, field.nz());
        for (j, (start, w)) in self.rows.iter().enumerate() {
            for (o, &wk) in w.iter().enumerate() {
                let src = field.row(start + o);
                let dst = &mut out.data_mut()[j * nx..(j + 1) * nx];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += wk * s;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum DepthMode {
    /// Flat reference depth `H` and bottom perturbation `b0`; bottom `b = -H + b0`.
    Finite { depth: f64, bottom: SurfaceField },
    /// Unbounded below, truncated at `z = -z_max`.
    Infinite { z_max: f64 },
}

impl DepthMode {
    pub fn is_finite(&self) -> bool {
        matches!(self, DepthMode::Finite { .. })
    }

    /// Strip bottom in z: `-1` for finite depth, `-z_max` otherwise.
    pub fn z_bot(&self) -> f64 {
        match self {
            DepthMode::Finite { .. } => -1.0,
            DepthMode::Infinite { z_max } => -z_max,
        }
    }

    /// Physical bottom `b = -H + b0` (finite depth only).
    pub fn bottom_profile(&self) -> Option<Vec<f64>> {
        match self {
            DepthMode::Finite { depth, bottom } => Some(bottom.values().iter().map(|b| b - depth).collect()),
            DepthMode::Infinite { .. } => None,
        }
    }

    /// `min (f - b)`, or `+∞` for infinite depth.
    pub fn separation(&self, f: &[f64]) -> f64 {
        match self.bottom_profile() {
            Some(b) => f.iter().zip(&b).map(|(f, b)| f - b).fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        }
    }

    /// Lower bound on the jacobian guaranteed for small smoothing parameter.
    pub fn jacobian_floor(&self, f: &[f64]) -> f64 {
        match self {
            DepthMode::Infinite { .. } => 0.5,
            DepthMode::Finite { .. } => 0.5 * self.separation(f),
        }
    }
}

/// z-dependent symbols of the surface and bottom lifts together with their
/// first and second z-derivatives.
#[derive(Debug, Clone, Copy)]
struct LiftSymbols {
    surface: [f64; 3],
    bottom: [f64; 3],
    linear: [f64; 3],
}

fn lift_symbols(depth: &DepthMode, delta: f64, z: f64, kappa: f64) -> LiftSymbols {
    let s = (delta * z * kappa).exp();
    let dk = delta * kappa;
    match depth {
        DepthMode::Infinite { .. } => LiftSymbols {
            surface: [s, dk * s, dk * dk * s],
            bottom: [0.0; 3],
            linear: [z, 1.0, 0.0],
        },
        DepthMode::Finite { depth: h, .. } => {
            let e = (-delta * (z + 1.0) * kappa).exp();
            LiftSymbols {
                surface: [
                    (z + 1.0) * s,
                    s + (z + 1.0) * dk * s,
                    2.0 * dk * s + (z + 1.0) * dk * dk * s,
                ],
                bottom: [-z * e, -e + z * dk * e, 2.0 * dk * e - z * dk * dk * e],
                linear: [z * h, *h, 0.0],
            }
        }
    }
}

/// The change of variables for one surface `f`, sampled at the strip nodes
/// and at the cell midpoints.
#[derive(Debug, Clone)]
pub struct FlatteningMap {
    grid: Arc<StripGrid>,
    depth: DepthMode,
    delta: f64,
    surface: SurfaceField,
    surface_coeffs: Vec<Complex64>,
    bottom_coeffs: Vec<Complex64>,
    /// Physical height `y(x, z)` of each node.
    pub height: StripField,
    /// `∂_z y`.
    pub jacobian: StripField,
    /// `∂_x y`.
    pub slope: StripField,
    /// `∂_z² y`.
    pub jacobian_dz: StripField,
    /// `∂_x ∂_z y`.
    pub slope_dz: StripField,
    /// `∂_x² y`.
    pub slope_dx: StripField,
    /// `∂_z y` at cell midpoints (one row per cell).
    pub mid_jacobian: StripField,
    /// `∂_x y` at cell midpoints.
    pub mid_slope: StripField,
    jac_min: f64,
    jac_argmin: (usize, usize),
}

struct SampledLift {
    rows: [Vec<f64>; 6],
}

fn sample_lift(
    x: &FourierGrid,
    depth: &DepthMode,
    delta: f64,
    fc: &[Complex64],
    bc: &[Complex64],
    z: f64,
    want_all: bool,
) -> SampledLift {
    let n = x.len();
    let nyq = x.nyquist_index();
    let ks = x.wavenumbers();
    let mut c = [
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
        vec![Complex64::default(); n],
    ];
    for i in 0..n {
        let kappa = (1.0 + ks[i] * ks[i]).sqrt();
        let sym = lift_symbols(depth, delta, z, kappa);
        for d in 0..3 {
            c[d][i] = fc[i] * sym.surface[d] + bc[i] * sym.bottom[d];
        }
        if i == 0 {
            for d in 0..3 {
                c[d][0] += sym.linear[d];
            }
        }
    }
    let dx = |v: &[Complex64], order: u32| -> Vec<Complex64> {
        v.iter()
            .enumerate()
            .map(|(i, &a)| {
                if i == nyq {
                    Complex64::default()
                } else {
                    a * Complex64::new(0.0, ks[i]).powu(order)
                }
            })
            .collect()
    };
    let value = if want_all { x.inverse(&c[0]) } else { Vec::new() };
    let jac = x.inverse(&c[1]);
    let slope = x.inverse(&dx(&c[0], 1));
    let (jac_dz, slope_dz, slope_dx) = if want_all {
        (x.inverse(&c[2]), x.inverse(&dx(&c[1], 1)), x.inverse(&dx(&c[0], 2)))
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    SampledLift {
        rows: [value, jac, slope, jac_dz, slope_dz, slope_dx],
    }
}

impl FlatteningMap {
    pub fn grid(&self) -> &Arc<StripGrid> {
        &self.grid
    }

    pub fn depth(&self) -> &DepthMode {
        &self.depth
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn surface(&self) -> &SurfaceField {
        &self.surface
    }

    pub fn jac_min(&self) -> f64 {
        self.jac_min
    }

    /// `(x index, z row)` of the smallest jacobian; midpoint minima report the
    /// lower node of the cell.
    pub fn jac_argmin(&self) -> (usize, usize) {
        self.jac_argmin
    }

    pub fn separation(&self) -> f64 {
        self.depth.separation(self.surface.values())
    }

    /// Applies the surface part of the lift, z-row by z-row, to a surface
    /// field `h`: `e^{δz⟨D⟩}h` (infinite) or `(z+1) e^{δz⟨D⟩}h` (finite).
    /// Since the map is linear in `f`, this is `∂_t y` when `h = ∂_t f`.
    pub fn surface_lift(&self, h: &[f64]) -> StripField {
        let x = self.grid.x_grid();
        let hc = x.forward(h);
        let ks = x.wavenumbers();
        let mut out = StripField::zeros_like(&self.grid);
        let last = self.grid.nz() - 1;
        for (j, &z) in self.grid.z_nodes().iter().enumerate() {
            if j == last {
                out.row_mut(j).copy_from_slice(h);
                continue;
            }
            let c: Vec<Complex64> = hc
                .iter()
                .zip(ks)
                .map(|(&a, &k)| a * lift_symbols(&self.depth, self.delta, z, (1.0 + k * k).sqrt()).surface[0])
                .collect();
            out.row_mut(j).copy_from_slice(&x.inverse(&c));
        }
        out
    }

    /// Height `y(x, z)` at an arbitrary point of the strip.
    pub fn height_at(&self, x: f64, z: f64) -> f64 {
        let xg = self.grid.x_grid();
        let nyq = xg.nyquist_index();
        let mut total = 0.0;
        for (i, &k) in xg.wavenumbers().iter().enumerate() {
            let sym = lift_symbols(&self.depth, self.delta, z, (1.0 + k * k).sqrt());
            let c = self.surface_coeffs[i] * sym.surface[0] + self.bottom_coeffs[i] * sym.bottom[0];
            total += if i == nyq {
                c.re * (k * x).cos()
            } else {
                (c * Complex64::from_polar(1.0, k * x)).re
            };
        }
        total + lift_symbols(&self.depth, self.delta, z, 1.0).linear[0]
    }
}

/// Builds the map for smoothing parameter `delta` and checks that the
/// jacobian stays above `min_fraction` times the guaranteed floor.
pub fn build_map(
    f: &SurfaceField,
    depth: &DepthMode,
    delta: f64,
    grid: &Arc<StripGrid>,
    min_fraction: f64,
) -> Result<FlatteningMap> {
    let map = assemble_map(f, depth, delta, grid)?;
    let threshold = min_fraction * depth.jacobian_floor(f.values());
    if !(map.jac_min >= threshold) {
        return Err(Error::Jacobian {
            jac_min: map.jac_min,
            threshold,
            ix: map.jac_argmin.0,
            iz: map.jac_argmin.1,
        });
    }
    Ok(map)
}

fn assemble_map(f: &SurfaceField, depth: &DepthMode, delta: f64, grid: &Arc<StripGrid>) -> Result<FlatteningMap> {
    ensure_finite(f.values(), "surface")?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidInput(format!("smoothing parameter must be positive, got {delta}")));
    }
    if **f.grid() != **grid.x_grid() {
        return Err(Error::Grid("surface and strip use different x grids".into()));
    }
    let z_bot = grid.z_bot();
    match depth {
        DepthMode::Finite { depth: h, bottom } => {
            if !(h.is_finite() && *h > 0.0) {
                return Err(Error::InvalidInput(format!("depth must be positive, got {h}")));
            }
            if **bottom.grid() != **grid.x_grid() {
                return Err(Error::Grid("bottom and strip use different x grids".into()));
            }
            if z_bot != -1.0 {
                return Err(Error::Grid(format!("finite depth strip must start at z = -1, got {z_bot}")));
            }
            let sep = depth.separation(f.values());
            if !(sep > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "surface must lie above the bottom, min separation {sep:.3e}"
                )));
            }
        }
        DepthMode::Infinite { z_max } => {
            if (z_bot + z_max).abs() > 1e-12 * z_max.abs().max(1.0) {
                return Err(Error::Grid(format!("truncated strip must start at z = -{z_max}, got {z_bot}")));
            }
        }
    }

    let x = grid.x_grid();
    let (nx, nz) = (grid.nx(), grid.nz());
    let fc = x.forward(f.values());
    let bc = match depth {
        DepthMode::Finite { bottom, .. } => x.forward(bottom.values()),
        DepthMode::Infinite { .. } => vec![Complex64::default(); nx],
    };

    let mut fields: [StripField; 6] = std::array::from_fn(|_| StripField::zeros(nx, nz));
    for (j, &z) in grid.z_nodes().iter().enumerate() {
        let s = sample_lift(x, depth, delta, &fc, &bc, z, true);
        for (field, row) in fields.iter_mut().zip(s.rows.iter()) {
            field.row_mut(j).copy_from_slice(row);
        }
    }
    // Pin the boundary rows exactly.
    fields[0].row_mut(nz - 1).copy_from_slice(f.values());
    if let Some(b) = depth.bottom_profile() {
        fields[0].row_mut(0).copy_from_slice(&b);
    }

    let mut mid_jacobian = StripField::zeros(nx, nz - 1);
    let mut mid_slope = StripField::zeros(nx, nz - 1);
    for c in 0..nz - 1 {
        let s = sample_lift(x, depth, delta, &fc, &bc, grid.cell_mid(c), false);
        mid_jacobian.row_mut(c).copy_from_slice(&s.rows[1]);
        mid_slope.row_mut(c).copy_from_slice(&s.rows[2]);
    }

    let mut jac_min = f64::INFINITY;
    let mut jac_argmin = (0, 0);
    for (field, rows) in [(&fields[1], nz), (&mid_jacobian, nz - 1)] {
        for j in 0..rows {
            for (i, &v) in field.row(j).iter().enumerate() {
                if v < jac_min || v.is_nan() {
                    jac_min = v;
                    jac_argmin = (i, j);
                }
            }
        }
    }
    let [height, jacobian, slope, jacobian_dz, slope_dz, slope_dx] = fields;
    for fld in [&height, &jacobian, &slope, &mid_jacobian, &mid_slope] {
        ensure_finite(fld.data(), "flattening map")?;
    }
    Ok(FlatteningMap {
        grid: grid.clone(),
        depth: depth.clone(),
        delta,
        surface: f.clone(),
        surface_coeffs: fc,
        bottom_coeffs: bc,
        height,
        jacobian,
        slope,
        jacobian_dz,
        slope_dz,
        slope_dx,
        mid_jacobian,
        mid_slope,
        jac_min,
        jac_argmin,
    })
}

/// Largest smoothing parameter on the grid `1, 2^{-1/2}, 2^{-1}, ...` whose
/// map keeps the jacobian above `safety` times the guaranteed floor.
pub fn select_delta(f: &SurfaceField, depth: &DepthMode, grid: &Arc<StripGrid>, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidInput(format!("safety must lie in (0, 1), got {safety}")));
    }
    let threshold = safety * depth.jacobian_floor(f.values());
    let mut last = None;
    for j in 0..60 {
        let delta = 0.5f64.powf(0.5 * j as f64);
        let map = assemble_map(f, depth, delta, grid)?;
        if map.jac_min >= threshold {
            return Ok(delta);
        }
        last = Some(map);
    }
    let map = last.expect("search grid is non-empty");
    Err(Error::NoAdmissibleDelta {
        jac_min: map.jac_min,
        threshold,
        ix: map.jac_argmin.0,
        iz: map.jac_argmin.1,
    })
}

/// Coefficients of the transported Laplacian `div(A ∇v)` with
///
/// ```text
/// A = [[ y_z, -y_x ], [ -y_x, (1 + y_x²) / y_z ]]
/// ```
///
/// and of its non-divergence expansion `v_zz + α v_xx + β v_xz - γ v_z`.
#[derive(Debug, Clone)]
pub struct EllipticCoeffs {
    pub alpha: StripField,
    pub beta: StripField,
    pub gamma: StripField,
    /// Entries `(A11, A12, A22)` at the nodes.
    pub a11: StripField,
    pub a12: StripField,
    pub a22: StripField,
    /// Same entries at cell midpoints, used by the discrete operator.
    pub mid_a11: StripField,
    pub mid_a12: StripField,
    pub mid_a22: StripField,
}

impl EllipticCoeffs {
    pub fn matrix(&self, ix: usize, iz: usize) -> [[f64; 2]; 2] {
        let a12 = self.a12.get(ix, iz);
        [[self.a11.get(ix, iz), a12], [a12, self.a22.get(ix, iz)]]
    }
}

pub fn build_coeffs(map: &FlatteningMap) -> EllipticCoeffs {
    let yz = &map.jacobian;
    let yx = &map.slope;
    let alpha = yz.zip_map(yx, |z, x| z * z / (1.0 + x * x));
    let beta = yz.zip_map(yx, |z, x| -2.0 * z * x / (1.0 + x * x));
    let mut gamma = StripField::zeros(yz.nx(), yz.nz());
    for (i, g) in gamma.data_mut().iter_mut().enumerate() {
        let (z, x) = (yz.data()[i], yx.data()[i]);
        let a = z * z / (1.0 + x * x);
        let b = -2.0 * z * x / (1.0 + x * x);
        *g = (map.jacobian_dz.data()[i] + a * map.slope_dx.data()[i] + b * map.slope_dz.data()[i]) / z;
    }
    let entries = |yz: &StripField, yx: &StripField| {
        (
            yz.clone(),
            yx.map(|x| -x),
            yz.zip_map(yx, |z, x| (1.0 + x * x) / z),
        )
    };
    let (a11, a12, a22) = entries(yz, yx);
    let (mid_a11, mid_a12, mid_a22) = entries(&map.mid_jacobian, &map.mid_slope);
    EllipticCoeffs {
        alpha,
        beta,
        gamma,
        a11,
        a12,
        a22,
        mid_a11,
        mid_a12,
        mid_a22,
    }
}

/// Samples a strip field at physical points `(x, y)` of the fluid region:
/// inverts `y(x, ·)` by bisection, then interpolates trigonometrically in x
/// and with a cubic Lagrange stencil in z.
pub fn pushforward_sample(map: &FlatteningMap, field: &StripField, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let grid = map.grid();
    let xg = grid.x_grid();
    let z = grid.z_nodes();
    let nz = grid.nz();
    let row_coeffs: Vec<Vec<Complex64>> = (0..nz).map(|j| xg.forward(field.row(j))).collect();
    let mut out = Vec::with_capacity(points.len());
    for &(px, py) in points {
        if !(px.is_finite() && py.is_finite()) {
            return Err(Error::NonFinite("query point"));
        }
        let (mut lo, mut hi) = (z[0], 0.0);
        let (ylo, yhi) = (map.height_at(px, lo), map.height_at(px, hi));
        let tol = 1e-12 * (1.0 + yhi.abs().max(ylo.abs()));
        if py < ylo - tol || py > yhi + tol {
            return Err(Error::InvalidInput(format!(
                "point ({px}, {py}) lies outside the fluid region [{ylo}, {yhi}]"
            )));
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if map.height_at(px, mid) < py {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zs = 0.5 * (lo + hi);
        let cell = z.partition_point(|&zj| zj <= zs).saturating_sub(1).min(nz - 2);
        let start = cell.saturating_sub(1).min(nz - 4);
        let mut value = 0.0;
        for a in start..start + 4 {
            let mut w = 1.0;
            for b in start..start + 4 {
                if a != b {
                    w *= (zs - z[b]) / (z[a] - z[b]);
                }
            }
            value += w * xg.evaluate(&row_coeffs[a], px);
        }
        out.push(value);
    }
    Ok(out)
}
