use ipm_core::profiles::{check_derivative_bounds, eval_profile, DerivativeScan, StratificationProfile, UserProfile};
use proptest::prelude::*;
use std::sync::Arc;

fn profiles() -> Vec<StratificationProfile> {
    vec![
        StratificationProfile::Constant { c: 1.0 },
        StratificationProfile::Affine { c0: 2.0, c1: 1.0 },
        StratificationProfile::Tanh { a: 1.0, b: 0.1, ell: 0.7 },
    ]
}

#[test]
fn constant_profile_values() {
    let ys = [-2.0, 0.0, 0.5, 3.0];
    let (g, gp, big) = eval_profile(&StratificationProfile::Constant { c: 1.0 }, &ys).unwrap();
    for i in 0..ys.len() {
        assert_eq!(g[i], 1.0);
        assert_eq!(gp[i], 0.0);
        assert!((big[i] - ys[i]).abs() < 1e-15);
    }
}

#[test]
fn affine_profile_values() {
    let ys = [-1.5, 0.0, 2.0];
    let (g, gp, big) = eval_profile(&StratificationProfile::Affine { c0: 2.0, c1: 1.0 }, &ys).unwrap();
    for i in 0..ys.len() {
        let y = ys[i];
        assert!((g[i] - (2.0 + y)).abs() < 1e-15);
        assert_eq!(gp[i], 1.0);
        assert!((big[i] - (2.0 * y + 0.5 * y * y)).abs() < 1e-14);
    }
}

#[test]
fn tanh_profile_at_origin() {
    let p = StratificationProfile::Tanh { a: 1.5, b: 0.2, ell: 0.5 };
    let (g, gp, big) = eval_profile(&p, &[0.0]).unwrap();
    assert_eq!(g[0], 1.5);
    assert!((gp[0] - 0.4).abs() < 1e-15);
    assert_eq!(big[0], 0.0);
}

#[test]
fn antiderivative_vanishes_at_zero() {
    for p in profiles() {
        assert_eq!(p.antiderivative(0.0), 0.0, "{p:?}");
    }
}

#[test]
fn tanh_antiderivative_is_finite_far_out() {
    let p = StratificationProfile::Tanh { a: 1.0, b: 0.5, ell: 1e-3 };
    let v = p.antiderivative(1e3);
    assert!(v.is_finite());
    // ℓ ln cosh(y/ℓ) ≈ |y| − ℓ ln 2 for |y| ≫ ℓ.
    let want = 1e3 + 0.5 * (1e3 - 1e-3 * std::f64::consts::LN_2);
    assert!((v - want).abs() < 1e-9 * want);
}

#[test]
fn derivative_bounds_by_profile_kind() {
    let scan = DerivativeScan::default();
    let c = check_derivative_bounds(&StratificationProfile::Constant { c: 3.0 }, 3, &scan).unwrap();
    assert!(c.passed);
    assert!(c.maxima[1..].iter().all(|&m| m == 0.0));
    let a = check_derivative_bounds(&StratificationProfile::Affine { c0: 1.0, c1: 0.5 }, 3, &scan).unwrap();
    assert!(a.passed);
    assert!(a.maxima[2..].iter().all(|&m| m == 0.0));
    let t = check_derivative_bounds(&StratificationProfile::Tanh { a: 1.0, b: 0.1, ell: 1.0 }, 3, &scan).unwrap();
    assert!(t.passed);
    // max |tanh'| = 1, max |tanh''| = 4/(3√3) at tanh² = 1/3.
    assert!((t.maxima[1] - 0.1).abs() < 1e-12);
    assert!((t.maxima[2] - 0.1 * 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-5);
    assert!(t.maxima[3].is_finite() && t.maxima[3] > 0.0);
}

#[test]
fn tanh_higher_derivatives_match_finite_differences() {
    let p = StratificationProfile::Tanh { a: 0.0, b: 1.0, ell: 0.8 };
    let h = 1e-4;
    for &y in &[-1.3, -0.2, 0.0, 0.4, 2.0] {
        for j in 1..4 {
            let fd = (p.derivative(j - 1, y + h) - p.derivative(j - 1, y - h)) / (2.0 * h);
            assert!((fd - p.derivative(j, y)).abs() < 1e-6, "order {j} at {y}");
        }
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(StratificationProfile::Tanh { a: 1.0, b: 1.0, ell: 0.0 }.validate().is_err());
    assert!(StratificationProfile::Constant { c: f64::NAN }.validate().is_err());
    assert!(eval_profile(&StratificationProfile::Affine { c0: f64::INFINITY, c1: 0.0 }, &[0.0]).is_err());
}

#[test]
fn user_profile_is_shifted_to_vanish_at_zero() {
    let p = StratificationProfile::User(UserProfile {
        name: "exp".into(),
        gamma: Arc::new(f64::exp),
        gamma_prime: Arc::new(f64::exp),
        antiderivative: Arc::new(f64::exp),
    });
    assert_eq!(p.antiderivative(0.0), 0.0);
    assert!((p.antiderivative(1.0) - (1f64.exp() - 1.0)).abs() < 1e-15);
    assert!(!p.is_constant());
}

proptest! {
    #[test]
    fn antiderivative_differentiates_to_gamma(y in -3.0f64..3.0) {
        let h = 1e-4;
        for p in profiles() {
            let fd = (p.antiderivative(y + h) - p.antiderivative(y - h)) / (2.0 * h);
            prop_assert!((fd - p.gamma(y)).abs() < 1e-7, "{:?}", p);
        }
    }

    #[test]
    fn gamma_prime_matches_gamma(y in -3.0f64..3.0) {
        let h = 1e-4;
        for p in profiles() {
            let fd = (p.gamma(y + h) - p.gamma(y - h)) / (2.0 * h);
            prop_assert!((fd - p.gamma_prime(y)).abs() < 1e-7, "{:?}", p);
        }
    }
}
