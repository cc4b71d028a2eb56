use proptest::prelude::*;
use quasiproj::analyzers::Analyzer;
use quasiproj::conditions::{self, DEFAULT_TOL};
use quasiproj::Kernel;

#[test]
fn scaled_hat_loses_compatibility() {
    let k = Kernel::bspline(2, 1).unwrap().scaled(2.0);
    assert_eq!(conditions::compatibility_order(&k, &Analyzer::Delta, 6, DEFAULT_TOL).unwrap(), 0);
    // Strang–Fix only sees the zeros at nonzero lattice points
    assert_eq!(conditions::strang_fix_order(&k, 6, 50, DEFAULT_TOL).unwrap(), 2);
}

#[test]
fn certificate_is_minimum_of_orders() {
    for n in 1..=5 {
        let k = Kernel::bspline(n, 1).unwrap();
        let c = conditions::certify(&k, &Analyzer::Delta, 6, 50, DEFAULT_TOL).unwrap();
        assert_eq!(c.effective_order, c.strang_fix_order.min(c.compatibility_order));
        assert!(!c.ambiguous);
    }
}

#[test]
fn tail_bound_is_finite_for_smooth_splines() {
    for n in 3..=5 {
        let k = Kernel::bspline(n, 1).unwrap();
        let t = conditions::tail_derivative_bound(&k, 1, 50, 0.25).unwrap();
        assert!(t.bound.is_finite() && t.bound > 0.0, "B{n}: {t:?}");
    }
}

#[test]
fn quasi_interpolant_target_is_capped() {
    let base = Kernel::bspline(3, 1).unwrap();
    assert!(conditions::quasi_interpolation_coeffs(&base, 4).unwrap_err().is_config());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn quasi_interpolant_reaches_target(n in 2usize..=5, back in 0usize..=3) {
        let base = Kernel::bspline(n, 1).unwrap();
        let target = n.saturating_sub(back).max(2);
        let coeffs = conditions::quasi_interpolation_coeffs(&base, target).unwrap();
        let qi = Kernel::bspline_tensor(vec![n], coeffs).unwrap();
        let c = conditions::compatibility_order(&qi, &Analyzer::Delta, 6, DEFAULT_TOL).unwrap();
        prop_assert!(c >= target, "n={} target={} got {}", n, target, c);
        prop_assert_eq!(conditions::strang_fix_order(&qi, 6, 50, DEFAULT_TOL).unwrap(), n);
    }
}
