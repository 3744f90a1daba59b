//! Background stratification profiles: density `γ(y)`, its derivative, and
//! the antiderivative normalized to vanish at `y = 0`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A profile supplied as three callables. The antiderivative is shifted so
/// that it vanishes at zero; no differentiation is attempted beyond what
/// the callables provide.
#[derive(Clone)]
pub struct UserProfile {
    pub name: String,
    pub gamma: ScalarFn,
    pub gamma_prime: ScalarFn,
    pub antiderivative: ScalarFn,
}

impl fmt::Debug for UserProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserProfile").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum StratificationProfile {
    /// `γ ≡ c`.
    Constant { c: f64 },
    /// `γ(y) = c0 + c1 y`.
    Affine { c0: f64, c1: f64 },
    /// `γ(y) = a + b tanh(y / ell)`.
    Tanh { a: f64, b: f64, ell: f64 },
    User(UserProfile),
}

/// `ln cosh(u)` without overflow.
fn ln_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl StratificationProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant { c } => c.is_finite(),
            Self::Affine { c0, c1 } => c0.is_finite() && c1.is_finite(),
            Self::Tanh { a, b, ell } => a.is_finite() && b.is_finite() && ell.is_finite() && *ell > 0.0,
            Self::User(_) => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid profile parameters: {self:?}")))
        }
    }

    pub fn gamma(&self, y: f64) -> f64 {
        match self {
            Self::Constant { c } => *c,
            Self::Affine { c0, c1 } => c0 + c1 * y,
            Self::Tanh { a, b, ell } => a + b * (y / ell).tanh(),
            Self::User(u) => (u.gamma)(y),
        }
    }

    pub fn gamma_prime(&self, y: f64) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Affine { c1, .. } => *c1,
            Self::Tanh { b, ell, .. } => {
                let t = (y / ell).tanh();
                b / ell * (1.0 - t * t)
            }
            Self::User(u) => (u.gamma_prime)(y),
        }
    }

    /// Antiderivative of `γ` with value exactly 0 at `y = 0`.
    pub fn antiderivative(&self, y: f64) -> f64 {
        match self {
            Self::Constant { c } => c * y,
            Self::Affine { c0, c1 } => c0 * y + 0.5 * c1 * y * y,
            Self::Tanh { a, b, ell } => a * y + b * ell * ln_cosh(y / ell),
            Self::User(u) => (u.antiderivative)(y) - (u.antiderivative)(0.0),
        }
    }

    /// True when the density gradient vanishes identically.
    pub fn is_constant(&self) -> bool {
        match self {
            Self::Constant { .. } => true,
            Self::Affine { c1, .. } => *c1 == 0.0,
            Self::Tanh { b, .. } => *b == 0.0,
            Self::User(_) => false,
        }
    }

    /// `j`-th derivative of `γ`. Built-in kinds are exact; user profiles use
    /// centered differences of `γ′` for `j ≥ 2`.
    pub fn derivative(&self, j: usize, y: f64) -> f64 {
        match (self, j) {
            (_, 0) => self.gamma(y),
            (_, 1) => self.gamma_prime(y),
            (Self::Constant { .. }, _) | (Self::Affine { .. }, _) => 0.0,
            (Self::Tanh { b, ell, .. }, _) => {
                let t = (y / ell).tanh();
                b / ell.powi(j as i32) * eval_poly(&tanh_derivative_poly(j), t)
            }
            (Self::User(u), _) => {
                let m = j - 1;
                let h = 1e-2;
                let mut acc = 0.0;
                let mut binom = 1.0;
                for i in 0..=m {
                    let shift = (m as f64 / 2.0 - i as f64) * h;
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * binom * (u.gamma_prime)(y + shift);
                    binom = binom * (m - i) as f64 / (i + 1) as f64;
                }
                acc / h.powi(m as i32)
            }
        }
    }
}

/// Coefficients (ascending powers of `T = tanh u`) of `d^j/du^j tanh u`.
fn tanh_derivative_poly(j: usize) -> Vec<f64> {
    let mut p = vec![0.0, 1.0];
    for _ in 0..j {
        // d/du P(T) = P'(T) (1 - T²)
        let dp: Vec<f64> = (1..p.len()).map(|k| k as f64 * p[k]).collect();
        let mut next = vec![0.0; dp.len() + 2];
        for (k, &c) in dp.iter().enumerate() {
            next[k] += c;
            next[k + 2] -= c;
        }
        p = next;
    }
    p
}

fn eval_poly(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

/// Pointwise `(γ, γ′, Γ)` at the given heights.
pub fn eval_profile(
    profile: &StratificationProfile,
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut g = Vec::with_capacity(y.len());
    let mut gp = Vec::with_capacity(y.len());
    let mut big = Vec::with_capacity(y.len());
    for &yi in y {
        if !yi.is_finite() {
            return Err(Error::NonFinite("profile argument"));
        }
        let (a, b, c) = (profile.gamma(yi), profile.gamma_prime(yi), profile.antiderivative(yi));
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::NonFinite("profile value"));
        }
        g.push(a);
        gp.push(b);
        big.push(c);
    }
    Ok((g, gp, big))
}

/// Sampling window and bound used by [`check_derivative_bounds`].
#[derive(Debug, Clone)]
pub struct DerivativeScan {
    pub lo: f64,
    pub hi: f64,
    pub samples: usize,
    pub bound: f64,
}

impl Default for DerivativeScan {
    fn default() -> Self {
        Self {
            lo: -10.0,
            hi: 10.0,
            samples: 2001,
            bound: 1e3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DerivativeReport {
    /// `max |γ^(j)|` over the window, for `j = 0..=order`.
    pub maxima: Vec<f64>,
    pub bound: f64,
    pub passed: bool,
}

/// Boundedness scan of `γ` and its derivatives up to `order`.
pub fn check_derivative_bounds(
    profile: &StratificationProfile,
    order: usize,
    scan: &DerivativeScan,
) -> Result<DerivativeReport> {
    if order == 0 {
        return Err(Error::InvalidInput("derivative order must be at least 1".into()));
    }
    if scan.samples < 2 || !(scan.hi > scan.lo) {
        return Err(Error::InvalidInput("empty derivative scan window".into()));
    }
    let step = (scan.hi - scan.lo) / (scan.samples - 1) as f64;
    let maxima: Vec<f64> = (0..=order)
        .map(|j| {
            (0..scan.samples)
                .map(|i| profile.derivative(j, scan.lo + i as f64 * step).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let passed = maxima.iter().all(|m| m.is_finite() && *m <= scan.bound);
    Ok(DerivativeReport {
        maxima,
        bound: scan.bound,
        passed,
    })
}
