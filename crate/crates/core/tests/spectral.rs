use std::f64::consts::PI;

use ipm_core::spectral::{make_grid, SurfaceField};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn wavenumbers_of_eight_point_grid() {
    let g = make_grid(8, 2.0 * PI).unwrap();
    let mut ks: Vec<f64> = g.wavenumbers().to_vec();
    ks.sort_by(f64::total_cmp);
    let expect = [-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];
    for (a, b) in ks.iter().zip(expect) {
        assert!((a - b).abs() < 1e-14, "{ks:?}");
    }
}

#[test]
fn wavenumbers_scale_with_period() {
    let g = make_grid(4, 1.0).unwrap();
    let mut ks: Vec<f64> = g.wavenumbers().to_vec();
    ks.sort_by(f64::total_cmp);
    let expect = [-4.0 * PI, -2.0 * PI, 0.0, 2.0 * PI];
    for (a, b) in ks.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn odd_and_tiny_grids_are_rejected() {
    assert!(make_grid(7, 1.0).is_err());
    assert!(make_grid(2, 1.0).is_err());
    assert!(make_grid(8, 0.0).is_err());
    assert!(make_grid(8, f64::NAN).is_err());
}

#[test]
fn absolute_value_multiplier_on_cosine() {
    let g = make_grid(32, 2.0 * PI).unwrap();
    for k in 1..8 {
        let u = SurfaceField::from_fn(g.clone(), |x| (k as f64 * x).cos());
        let v = u.apply_multiplier(|q| Complex64::new(q.abs(), 0.0)).unwrap();
        let want = u.map(|c| k as f64 * c);
        assert!(v.max_abs_diff(&want) < 1e-12);
    }
}

#[test]
fn derivative_multiplier_on_cosine() {
    let g = make_grid(32, 2.0 * PI).unwrap();
    let u = SurfaceField::from_fn(g.clone(), |x| (3.0 * x).cos());
    let v = u.apply_multiplier(|q| Complex64::new(0.0, q)).unwrap();
    let want = SurfaceField::from_fn(g, |x| -3.0 * (3.0 * x).sin());
    assert!(v.max_abs_diff(&want) < 1e-12);
    assert!(u.derivative().max_abs_diff(&want) < 1e-12);
}

#[test]
fn derivative_ignores_nyquist() {
    let g = make_grid(8, 2.0 * PI).unwrap();
    let u = SurfaceField::from_fn(g, |x| (4.0 * x).cos());
    assert!(u.derivative().max_abs() < 1e-13);
}

#[test]
fn second_derivative_of_sine() {
    let g = make_grid(16, 2.0).unwrap();
    let k = PI * 3.0;
    let u: Vec<f64> = g.points().iter().map(|&x| (k * x).sin()).collect();
    let d2 = g.second_derivative(&u);
    for (a, b) in d2.iter().zip(&u) {
        assert!((a + k * k * b).abs() < 1e-10);
    }
}

#[test]
fn sobolev_norm_of_cosine() {
    let g = make_grid(32, 2.0 * PI).unwrap();
    for &(k, s) in &[(1.0f64, 0.0f64), (2.0, 1.0), (3.0, 2.6), (5.0, 1.5)] {
        let u = SurfaceField::from_fn(g.clone(), |x| (k * x).cos());
        let want = ((1.0 + k * k).powf(s) * PI).sqrt();
        assert!((u.sobolev_norm(s) - want).abs() < 1e-12 * want);
    }
    assert_eq!(SurfaceField::zeros(g).sobolev_norm(3.0), 0.0);
}

#[test]
fn smoothing_layer_multiplier() {
    let g = make_grid(32, 2.0 * PI).unwrap();
    let k = 4.0f64;
    let delta = 0.3;
    let u = SurfaceField::from_fn(g.clone(), |x| (k * x).cos());
    let v = u.smoothing_layer(delta, -1.0).unwrap();
    let want = u.map(|c| (-delta * (1.0 + k * k).sqrt()).exp() * c);
    assert!(v.max_abs_diff(&want) < 1e-13);
    assert!(u.smoothing_layer(0.0, -2.0).unwrap().max_abs_diff(&u) < 1e-14);
    assert!(u.smoothing_layer(0.7, 0.0).unwrap().max_abs_diff(&u) < 1e-14);
    assert!(u.smoothing_layer(0.5, 0.1).is_err());
    assert!(u.smoothing_layer(-0.5, -0.1).is_err());
}

#[test]
fn dealias_keeps_band_and_drops_high_modes() {
    let g = make_grid(24, 2.0 * PI).unwrap();
    let low = SurfaceField::from_fn(g.clone(), |x| x.cos() + 0.3 * (8.0 * x).sin());
    assert!(low.dealias().max_abs_diff(&low) < 1e-13);
    let high = SurfaceField::from_fn(g, |x| (11.0 * x).cos());
    assert!(high.dealias().max_abs() < 1e-13);
}

#[test]
fn nonfinite_values_are_rejected() {
    let g = make_grid(8, 1.0).unwrap();
    let mut v = vec![0.0; 8];
    v[3] = f64::INFINITY;
    let u = SurfaceField::new(g.clone(), v).unwrap();
    assert!(u.apply_multiplier(|_| Complex64::new(1.0, 0.0)).is_err());
    assert!(SurfaceField::new(g, vec![0.0; 5]).is_err());
}

#[test]
fn trigonometric_interpolant_matches_off_grid() {
    let g = make_grid(16, 2.0 * PI).unwrap();
    let f = |x: f64| 0.5 + (2.0 * x).sin() - 0.25 * (5.0 * x).cos();
    let u = SurfaceField::from_fn(g.clone(), f);
    let c = u.coeffs();
    for &x in &[0.1, 1.234, 4.0, 6.2] {
        assert!((g.evaluate(&c, x) - f(x)).abs() < 1e-12);
    }
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #[test]
    fn round_trip(values in field(32)) {
        let g = make_grid(32, 3.0).unwrap();
        let back = g.inverse(&g.forward(&values));
        let scale = values.iter().fold(1e-300f64, |a, v| a.max(v.abs()));
        for (a, b) in back.iter().zip(&values) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn hermitian_coefficients(values in field(16)) {
        let g = make_grid(16, 1.0).unwrap();
        let c = g.forward(&values);
        for i in 1..16 {
            let j = 16 - i;
            prop_assert!((c[i] - c[j].conj()).norm() < 1e-13);
        }
    }

    #[test]
    fn parseval(values in field(32)) {
        let g = make_grid(32, 2.5).unwrap();
        let quad = (g.dx() * values.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let norm = g.sobolev_norm(&values, 0.0);
        prop_assert!((quad - norm).abs() <= 1e-10 * quad.max(1e-300));
    }

    #[test]
    fn dealias_is_idempotent(values in field(24)) {
        let g = make_grid(24, 1.0).unwrap();
        let once = g.dealias(&values);
        let twice = g.dealias(&once);
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_has_zero_mean_and_is_skew(a in field(16), b in field(16)) {
        let g = make_grid(16, 2.0 * PI).unwrap();
        let da = g.derivative(&a);
        let db = g.derivative(&b);
        prop_assert!(g.mean(&da).abs() < 1e-13);
        let lhs: f64 = da.iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(&db).map(|(x, y)| x * y).sum();
        prop_assert!((lhs + rhs).abs() < 1e-11);
    }

    #[test]
    fn sobolev_norm_is_monotone_in_order(values in field(16), s in 0.0f64..3.0) {
        let g = make_grid(16, 2.0 * PI).unwrap();
        prop_assert!(g.sobolev_norm(&values, s) <= g.sobolev_norm(&values, s + 0.5) * (1.0 + 1e-14));
    }
}
