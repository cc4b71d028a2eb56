use nalgebra::DMatrix;
use proptest::prelude::*;
use quasiproj::dilation::operator_norm;
use quasiproj::DilationMatrix;

fn builtins() -> Vec<DilationMatrix> {
    DilationMatrix::builtin_names().iter().map(|n| DilationMatrix::builtin(n).unwrap()).collect()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn powers_add(which in 0usize..8, a in -8i32..=8, b in -8i32..=8) {
        let m = &builtins()[which];
        let lhs = m.power(a + b).unwrap();
        let rhs = m.power(a).unwrap() * m.power(b).unwrap();
        prop_assert!(max_abs(&(&lhs - &rhs)) <= 1e-9 * max_abs(&lhs));
    }

    #[test]
    fn random_expansive_powers_add(c in 1.2f64..3.0, e in -0.5f64..0.5, a in -6i32..=6, b in -6i32..=6) {
        let m = DilationMatrix::from_rows(&[vec![c, e], vec![0.0, c + 0.3]]).unwrap();
        let lhs = m.power(a + b).unwrap();
        let rhs = m.power(a).unwrap() * m.power(b).unwrap();
        prop_assert!(max_abs(&(&lhs - &rhs)) <= 1e-9 * max_abs(&lhs));
    }
}

#[test]
fn inverse_powers_shrink() {
    for m in builtins() {
        let norms: Vec<f64> = (4..=12).map(|j| operator_norm(&m.power(-j).unwrap()).unwrap()).collect();
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{:?}: {norms:?}", m.rows());
    }
}

#[test]
fn isotropic_growth_is_bracketed() {
    for m in builtins().into_iter().filter(|m| m.is_isotropic(1e-9)) {
        let lambda = m.eig_moduli()[0];
        let cond = m.eigenvector_condition();
        for j in 0..=10 {
            let r = operator_norm(&m.power(j).unwrap()).unwrap() / lambda.powi(j);
            assert!(r >= 1.0 / cond - 1e-9 && r <= cond + 1e-9, "{:?} j={j}: {r}", m.rows());
        }
    }
}

#[test]
fn determinant_of_powers() {
    for m in builtins() {
        for j in [-3, 1, 4] {
            let det = m.power(j).unwrap().determinant().abs();
            assert!((det / m.det_abs().powi(j) - 1.0).abs() < 1e-12);
        }
    }
}
