use std::f64::consts::PI;
use std::sync::Arc;

use ipm_core::elliptic::{
    compute_b_v, dirichlet_neumann, lambda_symbol, principal_symbol, solve_phi1, solve_phi2, EllipticOperator,
    SolverOptions,
};
use ipm_core::flatten::{build_map, select_delta, Clustering, DepthMode, FlatteningMap, StripField, StripGrid};
use ipm_core::profiles::StratificationProfile;
use ipm_core::spectral::{make_grid, SurfaceField};
use proptest::prelude::*;

fn opts() -> SolverOptions {
    SolverOptions {
        rel_tol: 1e-12,
        ..Default::default()
    }
}

fn map_for(f: &SurfaceField, depth: DepthMode, n_z: usize) -> FlatteningMap {
    let x = f.grid().clone();
    let grid = Arc::new(StripGrid::new(x, n_z, depth.z_bot(), Clustering::Uniform).unwrap());
    let delta = select_delta(f, &depth, &grid, 0.9).unwrap();
    build_map(f, &depth, delta, &grid, 0.9).unwrap()
}

fn flat_finite(n_x: usize, h: f64, n_z: usize) -> FlatteningMap {
    let x = make_grid(n_x, 2.0 * PI).unwrap();
    let depth = DepthMode::Finite {
        depth: h,
        bottom: SurfaceField::zeros(x.clone()),
    };
    map_for(&SurfaceField::zeros(x), depth, n_z)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn constant_data_extends_as_constant() {
    let map = flat_finite(16, 1.0, 17);
    let sol = solve_phi1(&map, &SurfaceField::constant(map.surface().grid().clone(), 2.5), opts()).unwrap();
    assert!(sol.v.data().iter().all(|&v| (v - 2.5).abs() < 1e-10));
    assert!(sol.top_flux.iter().all(|t| t.abs() < 1e-10));
}

#[test]
fn flat_infinite_mode_decays_exponentially() {
    let x = make_grid(16, 2.0 * PI).unwrap();
    let map = map_for(&SurfaceField::zeros(x.clone()), DepthMode::Infinite { z_max: 8.0 }, 129);
    for k in [1.0f64, 2.0, 3.0] {
        let h = SurfaceField::from_fn(x.clone(), |s| (k * s).cos());
        let sol = solve_phi1(&map, &h, opts()).unwrap();
        let err = map
            .grid()
            .z_nodes()
            .iter()
            .enumerate()
            .flat_map(|(j, &z)| {
                let v = &sol.v;
                x.points().into_iter().enumerate().map(move |(i, s)| (v.get(i, j) - (k * z).exp() * (k * s).cos()).abs())
            })
            .fold(0.0, f64::max);
        assert!(err < 2e-3 * k * k, "k={k}: {err}");
        let want: Vec<f64> = h.values().iter().map(|v| k * v).collect();
        assert!(max_diff(&sol.top_flux, &want) < 1e-4 * k.powi(3), "k={k}");
    }
}

#[test]
fn flat_finite_dn_is_k_tanh() {
    for (h_depth, k) in [(0.5, 2.0f64), (1.0, 1.0), (2.0, 4.0)] {
        let map = flat_finite(32, h_depth, 129);
        let x = map.surface().grid().clone();
        let h = SurfaceField::from_fn(x.clone(), |s| (k * s).sin());
        let dn = dirichlet_neumann(&map, &h, opts()).unwrap();
        let sym = k * (k * h_depth).tanh();
        let want: Vec<f64> = h.values().iter().map(|v| sym * v).collect();
        assert!(max_diff(dn.values(), &want) < 1e-3 * sym.max(1.0), "H={h_depth} k={k}");
        // Interior profile cosh(k(y+H)) / cosh(kH).
        let sol = solve_phi1(&map, &h, opts()).unwrap();
        let j = 64;
        let y = h_depth * map.grid().z_nodes()[j];
        let amp = (k * (y + h_depth)).cosh() / (k * h_depth).cosh();
        for (i, s) in x.points().into_iter().enumerate() {
            assert!((sol.v.get(i, j) - amp * (k * s).sin()).abs() < 1e-3);
        }
    }
}

#[test]
fn curved_surface_recovers_harmonic_function() {
    let x = make_grid(64, 2.0 * PI).unwrap();
    let f = SurfaceField::from_fn(x.clone(), |s| 0.1 * s.cos());
    let map = map_for(&f, DepthMode::Infinite { z_max: 8.0 }, 257);
    let k = 2.0f64;
    let phi = |s: f64, y: f64| (k * y).exp() * (k * s).cos();
    let h = SurfaceField::from_fn(x.clone(), |s| phi(s, 0.1 * s.cos()));
    let sol = solve_phi1(&map, &h, opts()).unwrap();
    let mut err = 0.0f64;
    for j in 0..map.grid().nz() {
        for (i, s) in x.points().into_iter().enumerate() {
            err = err.max((sol.v.get(i, j) - phi(s, map.height.get(i, j))).abs());
        }
    }
    assert!(err < 5e-3, "interior error {err}");
    let fx = f.derivative();
    let want: Vec<f64> = x
        .points()
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let y = f.values()[i];
            let (px, py) = (-k * (k * y).exp() * (k * s).sin(), k * phi(s, y));
            py - fx.values()[i] * px
        })
        .collect();
    let dn_err = max_diff(&sol.top_flux, &want);
    assert!(dn_err < 1e-2, "dn error {dn_err}");
}

#[test]
fn dn_has_zero_mean() {
    let x = make_grid(32, 2.0 * PI).unwrap();
    let bottom = SurfaceField::from_fn(x.clone(), |s| 0.1 * (2.0 * s).cos());
    let f = SurfaceField::from_fn(x.clone(), |s| 0.2 * s.sin() + 0.05 * (3.0 * s).cos());
    let map = map_for(&f, DepthMode::Finite { depth: 1.0, bottom }, 33);
    let h = SurfaceField::from_fn(x, |s| 1.0 + s.cos() + (2.0 * s).sin());
    let dn = dirichlet_neumann(&map, &h, opts()).unwrap();
    assert!(dn.mean().abs() < 1e-10);
}

#[test]
fn source_potential_zero_source() {
    let map = flat_finite(8, 1.0, 9);
    let k = StripField::zeros(8, 9);
    let sol = solve_phi2(&map, &k, opts()).unwrap();
    assert!(sol.v.is_zero());
    assert!(sol.top_flux.iter().all(|&t| t == 0.0));
}

#[test]
fn source_potential_matches_manufactured_mode() {
    // v = sin(πz) cos x on the unit strip; the source is built so that the
    // bottom condition holds.
    let map = flat_finite(16, 1.0, 129);
    let grid = map.grid().clone();
    let c = |z: f64| -PI * (PI * z).cos() - ((PI * z).cos() + 1.0) / PI;
    let k = StripField::from_fn(&grid, |s, z| c(z) * s.cos());
    let sol = solve_phi2(&map, &k, opts()).unwrap();
    let mut err = 0.0f64;
    for (j, &z) in grid.z_nodes().iter().enumerate() {
        for (i, s) in grid.x_grid().points().into_iter().enumerate() {
            err = err.max((sol.v.get(i, j) - (PI * z).sin() * s.cos()).abs());
        }
    }
    assert!(err < 1e-3, "{err}");
}

#[test]
fn source_potential_obeys_variational_bound() {
    let x = make_grid(32, 2.0 * PI).unwrap();
    let f = SurfaceField::from_fn(x.clone(), |s| 0.25 * s.cos());
    let map = map_for(&f, DepthMode::Infinite { z_max: 4.0 }, 33);
    let k = StripField::from_fn(map.grid(), |s, z| (2.0 * s).sin() * (z).exp() + 0.3 * (z * 3.0).cos());
    let op = EllipticOperator::new(&map, opts());
    let sol = op.solve_source(&k).unwrap();
    let (grad, bound) = op.variational_norms(&sol.v, &k);
    assert!(grad <= bound * (1.0 + 1e-9), "{grad} > {bound}");
    assert!(grad > 0.0);
}

#[test]
fn solver_reports_non_finite_data() {
    let map = flat_finite(8, 1.0, 9);
    let mut h = vec![0.0; 8];
    h[3] = f64::NAN;
    assert!(EllipticOperator::new(&map, opts()).solve_dirichlet(&h).is_err());
}

#[test]
fn principal_symbol_examples() {
    assert!((principal_symbol(&[0.0], &[3.0]) - 3.0).abs() < 1e-15);
    assert!((principal_symbol(&[1.0, 0.0], &[0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
    assert!(principal_symbol(&[1.0, 0.0], &[1.0, 0.0]) - 1.0 < 1e-15);
    let x = make_grid(8, 2.0 * PI).unwrap();
    let f = SurfaceField::from_fn(x, |s| 0.4 * s.sin());
    let table = lambda_symbol(&f, &[-2.0, 0.0, 5.0]);
    assert_eq!(table.len(), 3);
    for (row, xi) in table.iter().zip([-2.0f64, 0.0, 5.0]) {
        for &v in row {
            assert!((v - xi.abs()).abs() < 1e-13);
        }
    }
}

#[test]
fn stability_identity_holds() {
    let x = make_grid(16, 2.0 * PI).unwrap();
    let f = SurfaceField::from_fn(x.clone(), |s| 0.3 * s.cos() + 0.1 * (2.0 * s).sin());
    let dn = SurfaceField::from_fn(x, |s| 0.2 * (3.0 * s).sin());
    let profile = StratificationProfile::Tanh { a: 1.0, b: 0.2, ell: 0.5 };
    let (b, v) = compute_b_v(&f, &profile, &dn);
    let fx = f.derivative();
    for i in 0..16 {
        let g = profile.gamma(f.values()[i]);
        let s = fx.values()[i];
        let taylor = g - dn.values()[i];
        assert!((g - b.values()[i] - taylor / (1.0 + s * s)).abs() < 1e-14);
        assert!((v.values()[i] - (g - b.values()[i]) * s).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn operator_is_symmetric_and_nonnegative(
        amp in -0.3f64..0.3, seed in proptest::collection::vec(-1.0f64..1.0, 2 * 16 * 9)
    ) {
        let x = make_grid(16, 2.0 * PI).unwrap();
        let f = SurfaceField::from_fn(x.clone(), |s| amp * (s + 0.3).cos());
        let depth = DepthMode::Finite { depth: 1.0, bottom: SurfaceField::zeros(x) };
        let map = map_for(&f, depth, 9);
        let op = EllipticOperator::new(&map, opts());
        let (a, b) = seed.split_at(16 * 9);
        let u = StripField::from_data(16, 9, a.to_vec()).unwrap();
        let w = StripField::from_data(16, 9, b.to_vec()).unwrap();
        let dot = |p: &StripField, q: &StripField| p.data().iter().zip(q.data()).map(|(x, y)| x * y).sum::<f64>();
        let lhs = dot(&op.apply(&u), &w);
        let rhs = dot(&u, &op.apply(&w));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        prop_assert!(op.energy(&u) >= -1e-12);
    }
}
