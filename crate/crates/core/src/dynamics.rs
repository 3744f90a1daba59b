//! Right-hand sides of the coupled surface/density system.
//!
//! With `φ₁` the harmonic extension of `Γ(f)` and `φ₂` the potential driven
//! by the density perturbation `g`, the Darcy velocity is
//! `u = -∇φ₁ - ∇φ₂ - g e_y`; the surface moves with `∂_t f = u · (-f_x, 1)`
//! and the strip density `g̃` is carried by the strip velocity
//! `ū = (u_x, (u_y - y_x u_x - ∂_t y) / y_z)`, which is tangent to the strip
//! boundary by construction.

use crate::elliptic::{EllipticOperator, EllipticSolution, SolverOptions};
use crate::error::{Error, Result};
use crate::flatten::{FlatteningMap, StripField, StripGrid, VerticalStencil};
use crate::profiles::StratificationProfile;
use crate::spectral::SurfaceField;

#[derive(Debug, Clone)]
pub struct VelocityBundle {
    /// `u_x ∘ F` and `u_y ∘ F` at the strip nodes.
    pub u_x: StripField,
    pub u_y: StripField,
    pub ubar_x: StripField,
    pub ubar_z: StripField,
    /// `u · N` at the surface, i.e. the surface tendency.
    pub surface_normal_speed: SurfaceField,
    /// Dirichlet–Neumann image of `Γ(f)`.
    pub dn_antiderivative: SurfaceField,
    /// Conormal fluxes `(A∇v)_z` of the two potentials at every node.
    pub lift_flux: StripField,
    pub source_flux: StripField,
    /// `max |ū_z|` over the boundary rows that must be impermeable.
    pub tangency_residual: f64,
    /// `max(|ū_x|, |ū_z|)` over the strip.
    pub ubar_max: f64,
    pub solver_iterations: usize,
}

impl VelocityBundle {
    /// Tangency tolerance check `residual ≤ tol (1 + ‖ū‖_∞)`.
    pub fn check_tangency(&self, tol: f64) -> Result<()> {
        let limit = tol * (1.0 + self.ubar_max);
        if self.tangency_residual > limit {
            Err(Error::Tangency {
                residual: self.tangency_residual,
                limit,
            })
        } else {
            Ok(())
        }
    }
}

/// The two potentials for one state.
#[derive(Debug, Clone)]
pub struct Potentials {
    pub lift: EllipticSolution,
    pub source: EllipticSolution,
}

pub fn solve_potentials(
    map: &FlatteningMap,
    g_strip: &StripField,
    profile: &StratificationProfile,
    options: SolverOptions,
) -> Result<Potentials> {
    let op = EllipticOperator::new(map, options);
    let big: Vec<f64> = map.surface().values().iter().map(|&y| profile.antiderivative(y)).collect();
    let lift = op.solve_dirichlet(&big)?;
    let source = op.solve_source(g_strip)?;
    Ok(Potentials { lift, source })
}

/// `u ∘ F` from the potentials: `u = -∇φ₁ - ∇φ₂ - g e_y`.
pub fn physical_velocity(map: &FlatteningMap, pot: &Potentials, g_strip: &StripField) -> (StripField, StripField) {
    let (ax, ay) = pot.lift.physical_gradient(map);
    let (bx, by) = pot.source.physical_gradient(map);
    let ux = ax.zip_map(&bx, |a, b| -a - b);
    let mut uy = ay.zip_map(&by, |a, b| -a - b);
    for (u, g) in uy.data_mut().iter_mut().zip(g_strip.data()) {
        *u -= g;
    }
    (ux, uy)
}

/// Vertical strip velocity `(-flux - g - ∂_t y) / y_z`, where `flux` is the
/// total conormal flux and `∂_t y` the lift of the surface tendency.
pub fn vertical_strip_velocity(
    map: &FlatteningMap,
    flux: &StripField,
    g_strip: &StripField,
    surface_tendency: &[f64],
) -> StripField {
    let dty = map.surface_lift(surface_tendency);
    let mut out = StripField::zeros(flux.nx(), flux.nz());
    for i in 0..out.data().len() {
        out.data_mut()[i] = (-flux.data()[i] - g_strip.data()[i] - dty.data()[i]) / map.jacobian.data()[i];
    }
    out
}

/// Largest `|ū_z|` on the surface row and, in finite depth, the bottom row.
pub fn boundary_normal_residual(map: &FlatteningMap, ubar_z: &StripField) -> f64 {
    let m = ubar_z.nz();
    let top = ubar_z.row(m - 1).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if map.depth().is_finite() {
        top.max(ubar_z.row(0).iter().fold(0.0f64, |a, v| a.max(v.abs())))
    } else {
        top
    }
}

pub fn assemble_velocity(
    map: &FlatteningMap,
    g_strip: &StripField,
    profile: &StratificationProfile,
    options: SolverOptions,
) -> Result<VelocityBundle> {
    let pot = solve_potentials(map, g_strip, profile, options)?;
    Ok(bundle_from_potentials(map, g_strip, pot))
}

pub fn bundle_from_potentials(map: &FlatteningMap, g_strip: &StripField, pot: Potentials) -> VelocityBundle {
    let grid = map.surface().grid().clone();
    let m = map.grid().nz();
    let top_g = g_strip.row(m - 1);
    let speed: Vec<f64> = (0..grid.len())
        .map(|i| -pot.lift.top_flux[i] - pot.source.top_flux[i] - top_g[i])
        .collect();
    let (u_x, u_y) = physical_velocity(map, &pot, g_strip);
    let flux = pot.lift.conormal.axpy(1.0, &pot.source.conormal);
    let ubar_z = vertical_strip_velocity(map, &flux, g_strip, &speed);
    let tangency_residual = boundary_normal_residual(map, &ubar_z);
    let ubar_max = u_x.max_abs().max(ubar_z.max_abs());
    VelocityBundle {
        ubar_x: u_x.clone(),
        u_x,
        u_y,
        ubar_z,
        surface_normal_speed: SurfaceField::new(grid.clone(), speed).expect("grid length"),
        dn_antiderivative: SurfaceField::new(grid, pot.lift.top_flux.clone()).expect("grid length"),
        lift_flux: pot.lift.conormal,
        source_flux: pot.source.conormal,
        tangency_residual,
        ubar_max,
        solver_iterations: pot.lift.iterations + pot.source.iterations,
    }
}

/// Surface tendency `-G[f]Γ(f) - N·∇φ₂ - g̃(·, 0)`.
pub fn rhs_surface(
    map: &FlatteningMap,
    g_strip: &StripField,
    profile: &StratificationProfile,
    options: SolverOptions,
) -> Result<SurfaceField> {
    Ok(assemble_velocity(map, g_strip, profile, options)?.surface_normal_speed)
}

/// Strip density tendency `-ū · ∇g̃ - γ′(y) u_y`.
pub fn rhs_density(
    map: &FlatteningMap,
    bundle: &VelocityBundle,
    g_strip: &StripField,
    profile: &StratificationProfile,
    tangency_tol: f64,
) -> Result<StripField> {
    bundle.check_tangency(tangency_tol)?;
    Ok(transport_tendency(
        map,
        &bundle.ubar_x,
        &bundle.ubar_z,
        &bundle.u_y,
        g_strip,
        profile,
    ))
}

/// `-a_x ∂_x g - a_z ∂_z g - γ′(y) w` for given strip velocity `a` and
/// vertical physical velocity `w`.
pub fn transport_tendency(
    map: &FlatteningMap,
    ubar_x: &StripField,
    ubar_z: &StripField,
    u_y: &StripField,
    g_strip: &StripField,
    profile: &StratificationProfile,
) -> StripField {
    let grid = map.grid();
    let xg = grid.x_grid();
    let (nx, m) = (grid.nx(), grid.nz());
    let mut out = StripField::zeros(nx, m);
    let forcing = !profile.is_constant();
    if forcing {
        for i in 0..nx * m {
            out.data_mut()[i] = -profile.gamma_prime(map.height.data()[i]) * u_y.data()[i];
        }
    }
    if g_strip.is_zero() {
        return out;
    }
    let gz = VerticalStencil::new(grid).apply(g_strip);
    for j in 0..m {
        let gx = xg.derivative(g_strip.row(j));
        for i in 0..nx {
            let idx = j * nx + i;
            out.data_mut()[idx] -= ubar_x.data()[idx] * gx[i] + ubar_z.data()[idx] * gz.data()[idx];
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// `γ(f) - G[f]Γ(f)`.
    pub taylor: SurfaceField,
    pub taylor_min: f64,
    /// `min (f - b)` in finite depth, `+∞` otherwise.
    pub separation_min: f64,
    pub ok: bool,
}

impl StabilityReport {
    pub fn from_dn(
        map: &FlatteningMap,
        profile: &StratificationProfile,
        dn_antiderivative: &SurfaceField,
        a_threshold: f64,
        d_threshold: f64,
    ) -> Self {
        let f = map.surface();
        let taylor: Vec<f64> = f
            .values()
            .iter()
            .zip(dn_antiderivative.values())
            .map(|(&y, &g)| profile.gamma(y) - g)
            .collect();
        let taylor = SurfaceField::new(f.grid().clone(), taylor).expect("grid length");
        let taylor_min = taylor.min();
        let separation_min = map.separation();
        let ok = taylor_min >= a_threshold && (!map.depth().is_finite() || separation_min >= d_threshold);
        Self {
            taylor,
            taylor_min,
            separation_min,
            ok,
        }
    }

    /// Which threshold failed, if any.
    pub fn violation(&self, a_threshold: f64, d_threshold: f64) -> Option<String> {
        if !(self.taylor_min >= a_threshold) {
            Some(format!(
                "stability functional minimum {:.4e} below {:.4e}",
                self.taylor_min, a_threshold
            ))
        } else if self.separation_min.is_finite() && !(self.separation_min >= d_threshold) {
            Some(format!(
                "surface-bottom separation {:.4e} below {:.4e}",
                self.separation_min, d_threshold
            ))
        } else {
            None
        }
    }
}

pub fn stability_report(
    map: &FlatteningMap,
    profile: &StratificationProfile,
    a_threshold: f64,
    d_threshold: f64,
    options: SolverOptions,
) -> Result<StabilityReport> {
    let op = EllipticOperator::new(map, options);
    let big: Vec<f64> = map.surface().values().iter().map(|&y| profile.antiderivative(y)).collect();
    let lift = op.solve_dirichlet(&big)?;
    let dn = SurfaceField::new(map.surface().grid().clone(), lift.top_flux)?;
    Ok(StabilityReport::from_dn(map, profile, &dn, a_threshold, d_threshold))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedQuantities {
    pub mean_f: f64,
    pub total_density: f64,
    pub sobolev_f: f64,
    pub sobolev_g: f64,
}

/// Anisotropic strip norm used for the density perturbation:
/// `Σ_{j ≤ ⌊s⌋} ∫ ‖∂_z^j g(·, z)‖²_{H^{s-j}_x} dz`, z-derivatives by
/// second-order differences, z-integral by the trapezoid rule.
pub fn strip_sobolev_norm(grid: &StripGrid, g: &StripField, s: f64) -> f64 {
    let xg = grid.x_grid();
    let w = grid.z_weights();
    let z = grid.z_nodes();
    let m = grid.nz();
    let mut total = 0.0;
    let mut current = g.clone();
    let mut j = 0usize;
    loop {
        let order = s - j as f64;
        for (r, wr) in w.iter().enumerate() {
            let n = xg.sobolev_norm(current.row(r), order.max(0.0));
            total += wr * n * n;
        }
        j += 1;
        if j as f64 > s {
            break;
        }
        let mut next = StripField::zeros(g.nx(), m);
        for r in 0..m {
            let (a, b) = if r == 0 {
                (0, 1)
            } else if r == m - 1 {
                (m - 2, m - 1)
            } else {
                (r - 1, r + 1)
            };
            let dz = z[b] - z[a];
            for i in 0..g.nx() {
                next.data_mut()[r * g.nx() + i] = (current.get(i, b) - current.get(i, a)) / dz;
            }
        }
        current = next;
    }
    total.sqrt()
}

/// Mean surface height, total density `∫∫ (γ(y) + g̃) y_z dx dz`, and norms.
///
/// The background part is integrated exactly in z as
/// `∫ (Γ(f) - Γ(y(·, z_bot))) dx`.
pub fn conserved_quantities(
    map: &FlatteningMap,
    g_strip: &StripField,
    profile: &StratificationProfile,
    s: f64,
) -> ConservedQuantities {
    let grid = map.grid();
    let xg = grid.x_grid();
    let f = map.surface();
    let bottom = map.height.row(0);
    let background: f64 = f
        .values()
        .iter()
        .zip(bottom)
        .map(|(&top, &bot)| profile.antiderivative(top) - profile.antiderivative(bot))
        .sum::<f64>()
        * xg.dx();
    let w = grid.z_quadrature_weights();
    let mut perturbation = 0.0;
    for (r, wr) in w.iter().enumerate() {
        let row: f64 = g_strip
            .row(r)
            .iter()
            .zip(map.jacobian.row(r))
            .map(|(g, j)| g * j)
            .sum();
        perturbation += wr * row;
    }
    perturbation *= xg.dx();
    ConservedQuantities {
        mean_f: f.mean(),
        total_density: background + perturbation,
        sobolev_f: f.sobolev_norm(s),
        sobolev_g: strip_sobolev_norm(grid, g_strip, s),
    }
}
