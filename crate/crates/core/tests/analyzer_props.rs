use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use quasiproj::analyzers::Analyzer;
use quasiproj::field::function::{self, TestFunction};
use quasiproj::{DilationMatrix, Kernel, MultiIndex};

/// `∫ f(y − k) g(y) dy = ∫ f̂(ξ) ĝ(−ξ) e^{−2πikξ} dξ` by Simpson over the band `[-1, 1]`.
fn parseval_oracle(f: &TestFunction, g: &Kernel, k: i64) -> Complex64 {
    let panels = 1 << 12;
    let h = 2.0 / panels as f64;
    (0..=panels)
        .map(|i| {
            let xi = -1.0 + i as f64 * h;
            let c = if i == 0 || i == panels { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let v = f.fourier(&[xi]).unwrap() * g.eval_fourier(&[-xi]).unwrap();
            v * Complex64::from_polar(c * h / 3.0, -2.0 * PI * k as f64 * xi)
        })
        .sum()
}

#[test]
fn averaging_coefficients_match_parseval() {
    let f = function::bl_sinc8(1).unwrap();
    let id = DMatrix::identity(1, 1);
    for n in [1, 2] {
        let g = Kernel::bspline(n, 1).unwrap();
        let an = Analyzer::FunctionKernel(g.clone());
        for k in -5..=5 {
            let c = an.coefficient_with_inverse(&f, &id, &[k]).unwrap();
            let o = parseval_oracle(&f, &g, k);
            assert!((c - o).norm() < 1e-6, "B{n} k={k}: {c} vs {o}");
        }
    }
}

#[test]
fn delta_coefficient_samples_preimage() {
    let f = function::gaussian(2).unwrap();
    let m = DilationMatrix::builtin("quincunx").unwrap();
    let inv = m.power(-2).unwrap();
    for k in [[0i64, 0], [1, -2], [3, 1]] {
        let c = Analyzer::Delta.coefficient(&f, &m, 2, &k).unwrap();
        let x: Vec<f64> = (0..2).map(|r| -(inv[(r, 0)] * k[0] as f64 + inv[(r, 1)] * k[1] as f64)).collect();
        assert_eq!(c.re, f.eval(&x));
    }
}

#[test]
fn first_derivative_analyzer_uses_chain_rule() {
    // ⟨f, −D δ⟩ at level j is f'(−2^{-j}k) · 2^{-j}
    let f = function::gaussian(1).unwrap();
    let an = Analyzer::differential(vec![(MultiIndex(vec![1]), Complex64::new(-1.0, 0.0))]).unwrap();
    let m = DilationMatrix::scalar(2.0, 1).unwrap();
    for k in [-3i64, 0, 2] {
        let x = -(k as f64) / 4.0;
        let want = -2.0 * PI * x * (-PI * x * x).exp() / 4.0;
        let got = an.coefficient(&f, &m, 2, &[k]).unwrap();
        assert!((got.re - want).abs() < 1e-9, "k={k}: {got} vs {want}");
    }
}

#[test]
fn narrow_gaussian_average_is_close_to_sample() {
    let f = function::gaussian(1).unwrap();
    let id = DMatrix::identity(1, 1);
    let an = Analyzer::FunctionKernel(Kernel::gaussian(0.01, 1));
    for k in [-1i64, 0, 2] {
        let c = an.coefficient_with_inverse(&f, &id, &[k]).unwrap();
        assert!((c.re - f.eval(&[-(k as f64)])).abs() < 1e-3, "k={k}: {c}");
    }
}
