//! Periodic Fourier collocation on `[0, L)`.
//!
//! Coefficients use the 1/N convention: `c_j = (1/N) Σ_n u_n e^{-i k_j x_n}`,
//! so `u_n = Σ_j c_j e^{i k_j x_n}` and the discrete Sobolev norm is
//!
//! ```text
//! ‖u‖²_{H^s} = L · Σ_j (1 + k_j²)^s |c_j|²
//! ```
//!
//! which for `s = 0` equals the rectangle-rule quadrature `Δx Σ_n u_n²`.
//! Storage index `i < N/2` carries mode `i`, the rest carry `i - N`, so the
//! unpaired Nyquist index `N/2` has wavenumber `-πN/L`. Every derivative
//! zeroes it; the other symbols used here are even in `k`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{ensure_finite, Error, Result};

pub struct FourierGrid {
    n: usize,
    length: f64,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierGrid")
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for FourierGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// Builds a uniform periodic grid with `n` points on `[0, length)`.
pub fn make_grid(n: usize, length: f64) -> Result<Arc<FourierGrid>> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::Grid(format!(
            "point count must be even and at least 4, got {n}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::Grid(format!(
            "period must be positive and finite, got {length}"
        )));
    }
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let base = 2.0 * std::f64::consts::PI / length;
    let wavenumbers = (0..n).map(|i| base * signed_index(i, n) as f64).collect();
    Ok(Arc::new(FourierGrid {
        n,
        length,
        wavenumbers,
        forward,
        inverse,
    }))
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl FourierGrid {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| i as f64 * self.dx()).collect()
    }

    /// Wavenumber `k_j` carried by storage index `i`.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Signed mode number of storage index `i`.
    pub fn mode_number(&self, i: usize) -> i64 {
        signed_index(i, self.n)
    }

    /// Largest wavenumber that survives the 2/3 rule.
    pub fn max_resolved_wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length * (self.n / 3) as f64
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.n, "field length does not match grid");
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    /// Inverse transform keeping the real part.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n, "coefficient length does not match grid");
        let mut buf = coeffs.to_vec();
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Applies a Fourier multiplier `symbol(k)` and returns the real part.
    pub fn apply_multiplier(&self, values: &[f64], symbol: impl Fn(f64) -> Complex64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut scratch = vec![Complex64::default(); self.n];
        self.apply_multiplier_into(values, &mut out, &mut scratch, |_, k| symbol(k));
        out
    }

    /// Workhorse for multiplier application on caller-provided buffers. The
    /// symbol receives the storage index and the wavenumber.
    pub(crate) fn apply_multiplier_into(
        &self,
        values: &[f64],
        out: &mut [f64],
        scratch: &mut [Complex64],
        symbol: impl Fn(usize, f64) -> Complex64,
    ) {
        debug_assert_eq!(values.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for (s, &v) in scratch.iter_mut().zip(values) {
            *s = Complex64::new(v, 0.0);
        }
        self.forward.process(scratch);
        let scale = 1.0 / self.n as f64;
        for (i, s) in scratch.iter_mut().enumerate() {
            *s *= symbol(i, self.wavenumbers[i]) * scale;
        }
        self.inverse.process(scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o = s.re;
        }
    }

    /// Spectral `∂_x` with the Nyquist mode zeroed (skew-symmetric).
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut scratch = vec![Complex64::default(); self.n];
        self.derivative_into(values, &mut out, &mut scratch);
        out
    }

    pub(crate) fn derivative_into(&self, values: &[f64], out: &mut [f64], scratch: &mut [Complex64]) {
        let nyq = self.nyquist_index();
        self.apply_multiplier_into(values, out, scratch, |i, k| {
            if i == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k)
            }
        });
    }

    /// Spectral `∂_x²` with the Nyquist mode zeroed.
    pub fn second_derivative(&self, values: &[f64]) -> Vec<f64> {
        let nyq = self.nyquist_index();
        let mut out = vec![0.0; self.n];
        let mut scratch = vec![Complex64::default(); self.n];
        self.apply_multiplier_into(values, &mut out, &mut scratch, |i, k| {
            if i == nyq {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(-k * k, 0.0)
            }
        });
        out
    }

    /// Discrete `H^s` norm in the normalization of the module docs.
    pub fn sobolev_norm(&self, values: &[f64], s: f64) -> f64 {
        let coeffs = self.forward(values);
        let sum: f64 = coeffs
            .iter()
            .zip(&self.wavenumbers)
            .map(|(c, &k)| (1.0 + k * k).powf(s) * c.norm_sqr())
            .sum();
        (self.length * sum).sqrt()
    }

    /// 2/3-rule truncation: zeroes every mode with `|j| > N/3`.
    pub fn dealias(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let mut scratch = vec![Complex64::default(); self.n];
        self.dealias_into(values, &mut out, &mut scratch);
        out
    }

    pub(crate) fn dealias_into(&self, values: &[f64], out: &mut [f64], scratch: &mut [Complex64]) {
        let cut = (self.n / 3) as i64;
        let n = self.n;
        self.apply_multiplier_into(values, out, scratch, |i, _| {
            if signed_index(i, n).abs() > cut {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
    }

    /// `e^{δ z ⟨D⟩} h` with `⟨D⟩ = (1 + D²)^{1/2}`; requires `z ≤ 0`.
    pub fn smoothing_layer(&self, values: &[f64], delta: f64, z: f64) -> Result<Vec<f64>> {
        if z > 0.0 {
            return Err(Error::InvalidInput(format!(
                "smoothing layer needs z <= 0, got {z}"
            )));
        }
        if !(delta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "smoothing parameter must be non-negative, got {delta}"
            )));
        }
        ensure_finite(values, "smoothing layer input")?;
        let mut out = vec![0.0; self.n];
        let mut scratch = vec![Complex64::default(); self.n];
        self.apply_multiplier_into(values, &mut out, &mut scratch, |_, k| {
            Complex64::new((delta * z * (1.0 + k * k).sqrt()).exp(), 0.0)
        });
        Ok(out)
    }

    pub fn mean(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / self.n as f64
    }

    /// Rectangle-rule integral over one period.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.dx()
    }

    /// Trigonometric interpolant of the given coefficients at an arbitrary `x`.
    /// The Nyquist term uses `cos` so the interpolant stays real.
    pub fn evaluate(&self, coeffs: &[Complex64], x: f64) -> f64 {
        let nyq = self.nyquist_index();
        coeffs
            .iter()
            .zip(&self.wavenumbers)
            .enumerate()
            .map(|(i, (c, &k))| {
                if i == nyq {
                    c.re * (k * x).cos()
                } else {
                    (c * Complex64::from_polar(1.0, k * x)).re
                }
            })
            .sum()
    }
}

/// A real field sampled on a [`FourierGrid`].
#[derive(Debug, Clone)]
pub struct SurfaceField {
    grid: Arc<FourierGrid>,
    values: Vec<f64>,
}

impl PartialEq for SurfaceField {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}

impl SurfaceField {
    pub fn new(grid: Arc<FourierGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<FourierGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<FourierGrid>, c: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    pub fn from_fn(grid: Arc<FourierGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<FourierGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn coeffs(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    /// Applies an arbitrary multiplier; rejects non-finite input or symbol values.
    pub fn apply_multiplier(&self, symbol: impl Fn(f64) -> Complex64) -> Result<Self> {
        ensure_finite(&self.values, "multiplier input")?;
        for &k in self.grid.wavenumbers() {
            let m = symbol(k);
            if !(m.re.is_finite() && m.im.is_finite()) {
                return Err(Error::NonFinite("multiplier symbol"));
            }
        }
        Ok(self.with_values(self.grid.apply_multiplier(&self.values, symbol)))
    }

    pub fn derivative(&self) -> Self {
        self.with_values(self.grid.derivative(&self.values))
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.grid.sobolev_norm(&self.values, s)
    }

    pub fn dealias(&self) -> Self {
        self.with_values(self.grid.dealias(&self.values))
    }

    pub fn smoothing_layer(&self, delta: f64, z: f64) -> Result<Self> {
        Ok(self.with_values(self.grid.smoothing_layer(&self.values, delta, z)?))
    }

    pub fn mean(&self) -> f64 {
        self.grid.mean(&self.values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// `self + scale * other`.
    pub fn axpy(&self, scale: f64, other: &SurfaceField) -> Self {
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + scale * b)
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &SurfaceField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
