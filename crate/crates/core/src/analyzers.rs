//! Analysis distributions `φ̃` and the coefficient functionals `⟨f, φ̃_jk⟩`.
//!
//! Coefficients are normalized so that `Q_j f(x) = Σ_k c_k φ(M^j x + k)`.
//! With `g(y) = f(M^{-j}(y − k))` every variant reduces to `⟨g, φ̃⟩`:
//!
//! * `Delta`: `g(0) = f(−M^{-j}k)`;
//! * `Differential`: `Σ_β conj(c_β) (−1)^{[β]} D^β g(0)`, expanded by the chain rule
//!   into derivatives of `f` at `−M^{-j}k`;
//! * `FunctionKernel`: `∫ g(y) conj(φ̃(y)) dy` over the kernel support.
//!
//! The pairing `⟨f, g⟩ = ∫ f ḡ` is conjugate-linear in the analyzer, which is
//! why the differential coefficients enter conjugated.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dilation::DilationMatrix;
use crate::error::{QpError, Result};
use crate::field::TestFunction;
use crate::kernels::Kernel;
use crate::multiindex::{binomial, chain_rule_expansion, factorial, MultiIndex};
use crate::quadrature;

/// Relative tolerance of the Kantorovich coefficient quadrature.
pub const COEFFICIENT_REL_TOL: f64 = 1e-9;
/// Refinement levels before the quadrature gives up.
pub const COEFFICIENT_MAX_LEVELS: usize = 20;

#[derive(Debug, Clone)]
pub enum Analyzer {
    Delta,
    Differential { terms: Vec<(MultiIndex, Complex64)> },
    FunctionKernel(Kernel),
}

impl Analyzer {
    pub fn differential(terms: Vec<(MultiIndex, Complex64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(QpError::Config("differential analyzer needs at least one term".into()));
        }
        let d = terms[0].0.dim();
        if let Some((b, _)) = terms.iter().find(|(b, _)| b.dim() != d) {
            return Err(QpError::Dimension { expected: d, got: b.dim() });
        }
        Ok(Analyzer::Differential { terms })
    }

    /// `N`: `max [β]` for differential analyzers, 0 otherwise.
    pub fn order_n(&self) -> usize {
        match self {
            Analyzer::Differential { terms } => terms.iter().map(|(b, _)| b.order()).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Dimension fixed by the analyzer, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Analyzer::Delta => None,
            Analyzer::Differential { terms } => terms.first().map(|(b, _)| b.dim()),
            Analyzer::FunctionKernel(k) => Some(k.dim()),
        }
    }

    pub fn is_kantorovich(&self) -> bool {
        matches!(self, Analyzer::FunctionKernel(_))
    }

    pub fn label(&self) -> String {
        match self {
            Analyzer::Delta => "delta".into(),
            Analyzer::Differential { terms } => {
                let parts: Vec<String> = terms.iter().map(|(b, c)| format!("{c}·D{:?}", b.0)).collect();
                format!("diff({})", parts.join(" + "))
            }
            Analyzer::FunctionKernel(k) => format!("kernel({})", k.label()),
        }
    }

    /// `φ̂̃(ξ)`.
    pub fn eval_symbol(&self, xi: &[f64]) -> Result<Complex64> {
        match self {
            Analyzer::Delta => Ok(Complex64::new(1.0, 0.0)),
            Analyzer::Differential { terms } => Ok(terms
                .iter()
                .map(|(b, c)| c * monomial_symbol(b, &MultiIndex::zero(b.dim()), xi))
                .sum()),
            Analyzer::FunctionKernel(k) => k.eval_fourier(xi),
        }
    }

    /// `D^α φ̂̃(ξ)`.
    pub fn eval_symbol_deriv(&self, alpha: &MultiIndex, xi: &[f64]) -> Result<Complex64> {
        match self {
            Analyzer::Delta => Ok(if alpha.order() == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }),
            Analyzer::Differential { terms } => {
                Ok(terms.iter().map(|(b, c)| c * monomial_symbol(b, alpha, xi)).sum())
            }
            Analyzer::FunctionKernel(k) => k.eval_fourier_deriv(alpha, xi),
        }
    }

    /// Largest derivative order of the symbol that is available.
    pub fn symbol_smoothness(&self) -> usize {
        match self {
            Analyzer::FunctionKernel(k) => k.fourier_smoothness_order(),
            _ => usize::MAX,
        }
    }

    /// Checks `|φ̂̃(ξ)| <= C max(1, |ξ|)^N` with `N = order_n()`.
    pub fn check_sn_bound(&self, grid_radius: f64, samples: usize, dim: usize) -> Result<SnBound> {
        self.check_sn_bound_with_order(self.order_n(), grid_radius, samples, dim)
    }

    /// As [`Analyzer::check_sn_bound`] for a claimed growth order `n`.
    ///
    /// Samples Halton points in the ball of radius `grid_radius`; the bound is
    /// accepted when the sup over the whole ball is at most 1.5 times the sup
    /// over the half-radius ball.
    pub fn check_sn_bound_with_order(&self, n: usize, grid_radius: f64, samples: usize, dim: usize) -> Result<SnBound> {
        if samples < 1000 {
            return Err(QpError::Config(format!("check_sn_bound needs at least 1000 samples, got {samples}")));
        }
        if !(grid_radius > 0.0) {
            return Err(QpError::Config("grid radius must be positive".into()));
        }
        if let Some(ad) = self.dim() {
            if ad != dim {
                return Err(QpError::Dimension { expected: ad, got: dim });
            }
        }
        let mut sup_all = 0.0f64;
        let mut sup_half = 0.0f64;
        let mut kept = 0usize;
        let mut index = 1u64;
        let mut xi = vec![0.0; dim];
        while kept < samples {
            for (a, v) in xi.iter_mut().enumerate() {
                *v = grid_radius * (2.0 * halton(index, PRIMES[a % PRIMES.len()]) - 1.0);
            }
            index += 1;
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > grid_radius {
                continue;
            }
            kept += 1;
            let v = self.eval_symbol(&xi)?.norm() / r.max(1.0).powi(n as i32);
            sup_all = sup_all.max(v);
            if r <= 0.5 * grid_radius {
                sup_half = sup_half.max(v);
            }
        }
        Ok(SnBound { bounded: sup_all.is_finite() && sup_all <= 1.5 * sup_half, constant: sup_all })
    }

    /// Coefficient of `φ(M^j x + k)` in `Q_j f`.
    pub fn coefficient(&self, f: &TestFunction, m: &DilationMatrix, j: i32, k: &[i64]) -> Result<Complex64> {
        let inv = m.power(-j)?;
        self.coefficient_with_inverse(f, &inv, k)
    }

    /// [`Analyzer::coefficient`] with `M^{-j}` precomputed.
    pub fn coefficient_with_inverse(&self, f: &TestFunction, inv: &DMatrix<f64>, k: &[i64]) -> Result<Complex64> {
        let d = f.dim();
        if k.len() != d || inv.nrows() != d {
            return Err(QpError::Dimension { expected: d, got: k.len() });
        }
        // x0 = −M^{-j} k
        let x0: Vec<f64> = (0..d).map(|r| -(0..d).map(|c| inv[(r, c)] * k[c] as f64).sum::<f64>()).collect();
        match self {
            Analyzer::Delta => Ok(Complex64::new(f.eval(&x0), 0.0)),
            Analyzer::Differential { terms } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (beta, c) in terms {
                    if beta.dim() != d {
                        return Err(QpError::Dimension { expected: d, got: beta.dim() });
                    }
                    let sign = if beta.order() % 2 == 0 { 1.0 } else { -1.0 };
                    let mut dv = 0.0;
                    for (alpha, w) in chain_rule_expansion(inv, beta) {
                        dv += w * f.derivative(&alpha, &x0)?;
                    }
                    acc += c.conj() * sign * dv;
                }
                Ok(acc)
            }
            Analyzer::FunctionKernel(kernel) => {
                if kernel.dim() != d {
                    return Err(QpError::Dimension { expected: kernel.dim(), got: d });
                }
                let support = kernel.support_box();
                let lo: Vec<f64> = support.iter().map(|s| s.0).collect();
                let hi: Vec<f64> = support.iter().map(|s| s.1).collect();
                let integrand = |y: &[f64]| {
                    let w = kernel.eval(y);
                    if w == 0.0 {
                        return Complex64::new(0.0, 0.0);
                    }
                    let x: Vec<f64> =
                        (0..d).map(|r| (0..d).map(|c| inv[(r, c)] * (y[c] - k[c] as f64)).sum()).collect();
                    Complex64::new(f.eval(&x) * w, 0.0)
                };
                quadrature::adaptive_box(
                    &integrand,
                    &lo,
                    &hi,
                    &kernel.panel_hint(),
                    COEFFICIENT_REL_TOL,
                    COEFFICIENT_MAX_LEVELS,
                )
            }
        }
    }
}

/// `D^α_ξ (2πiξ)^β`.
fn monomial_symbol(beta: &MultiIndex, alpha: &MultiIndex, xi: &[f64]) -> Complex64 {
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    let mut prod = Complex64::new(1.0, 0.0);
    for a in 0..beta.dim() {
        let (b, al) = (beta.0[a], alpha.0[a]);
        if al > b {
            return Complex64::new(0.0, 0.0);
        }
        let falling = factorial(b) / factorial(b - al);
        prod *= two_pi_i.powi(b as i32) * falling * xi[a].powi((b - al) as i32);
    }
    prod
}

/// Result of [`Analyzer::check_sn_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnBound {
    pub bounded: bool,
    /// Sampled `sup |φ̂̃(ξ)| / max(1, |ξ|)^N`.
    pub constant: f64,
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Radical inverse of `i` in base `b`.
fn halton(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// `D^β (φ̂ · conj(φ̂̃))(ξ)` by the Leibniz rule.
pub fn product_symbol_deriv(kernel: &Kernel, analyzer: &Analyzer, beta: &MultiIndex, xi: &[f64]) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for alpha in sub_indices(beta) {
        let rest = MultiIndex(beta.0.iter().zip(&alpha.0).map(|(b, a)| b - a).collect());
        let weight: f64 = beta.0.iter().zip(&alpha.0).map(|(&b, &a)| binomial(b, a)).product();
        let left = kernel.eval_fourier_deriv(&alpha, xi)?;
        if left == Complex64::new(0.0, 0.0) {
            continue;
        }
        let right = analyzer.eval_symbol_deriv(&rest, xi)?.conj();
        acc += left * right * weight;
    }
    Ok(acc)
}

/// All `α <= β` componentwise.
pub(crate) fn sub_indices(beta: &MultiIndex) -> Vec<MultiIndex> {
    let mut out = vec![Vec::new()];
    for &b in &beta.0 {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..=b).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(MultiIndex).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::function;

    fn d1(b: usize, c: Complex64) -> Analyzer {
        Analyzer::differential(vec![(MultiIndex(vec![b]), c)]).unwrap()
    }

    #[test]
    fn symbols() {
        assert_eq!(Analyzer::Delta.eval_symbol(&[3.7, -1.2]).unwrap(), Complex64::new(1.0, 0.0));
        let s = d1(1, Complex64::new(1.0, 0.0)).eval_symbol(&[0.5]).unwrap();
        assert!((s - Complex64::new(0.0, PI)).norm() < 1e-15);
        let bx = Analyzer::FunctionKernel(Kernel::bspline(1, 1).unwrap());
        assert!((bx.eval_symbol(&[0.5]).unwrap().re - 2.0 / PI).abs() < 1e-15);
        let c0 = Analyzer::differential(vec![
            (MultiIndex(vec![0]), Complex64::new(0.7, 0.1)),
            (MultiIndex(vec![2]), Complex64::new(1.0, 0.0)),
        ])
        .unwrap();
        assert_eq!(c0.eval_symbol(&[0.0]).unwrap(), Complex64::new(0.7, 0.1));
        assert_eq!(c0.order_n(), 2);
        assert_eq!(Analyzer::Delta.order_n(), 0);
    }

    #[test]
    fn sn_bounds() {
        let b = Analyzer::Delta.check_sn_bound(10.0, 1000, 1).unwrap();
        assert!(b.bounded && b.constant == 1.0);
        let b = d1(1, Complex64::new(1.0, 0.0)).check_sn_bound(10.0, 1000, 1).unwrap();
        assert!(b.bounded);
        assert!((b.constant - 2.0 * PI).abs() < 1e-12);
        let b = d1(2, Complex64::new(1.0, 0.0)).check_sn_bound_with_order(1, 10.0, 1000, 1).unwrap();
        assert!(!b.bounded);
        assert!(Analyzer::Delta.check_sn_bound(10.0, 10, 1).is_err());
    }

    #[test]
    fn delta_coefficient_samples() {
        let f = TestFunction::builder("e^{-x²}", 1, |x| (-x[0] * x[0]).exp()).decay_box(vec![(-7.0, 7.0)]).build().unwrap();
        let m = DilationMatrix::scalar(2.0, 1).unwrap();
        let c = Analyzer::Delta.coefficient(&f, &m, 1, &[2]).unwrap();
        assert_eq!(c.re, (-1.0f64).exp());
    }

    #[test]
    fn box_average_of_constant() {
        let one = TestFunction::builder("one", 2, |_| 1.0).build().unwrap();
        let m = DilationMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        let a = Analyzer::FunctionKernel(Kernel::bspline(1, 2).unwrap());
        for (j, k) in [(0, [0i64, 0]), (3, [5, -2]), (5, [-7, 11])] {
            let c = a.coefficient(&one, &m, j, &k).unwrap();
            assert!((c.re - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn differential_chain_rule() {
        // −D acting on f(M^{-j}(y − k)) at y = 0 is −2^{-j} f'(−2^{-j}k)
        let f = function::gaussian(1).unwrap();
        let m = DilationMatrix::scalar(2.0, 1).unwrap();
        let a = d1(1, Complex64::new(0.0, 1.0));
        let c = a.coefficient(&f, &m, 2, &[3]).unwrap();
        let x0 = -0.75;
        let fp = -2.0 * PI * x0 * (-PI * x0 * x0).exp();
        // conj(i) · (−1) · 0.25 f'(x0)
        assert!((c - Complex64::new(0.0, 0.25 * fp)).norm() < 1e-14);
        let rough = function::aniso(1).unwrap();
        assert!(matches!(a.coefficient(&rough, &m, 1, &[0]), Err(QpError::MissingDerivatives { .. })));
    }

    #[test]
    fn kantorovich_matches_parseval() {
        // ⟨f(· − k), φ̃⟩ = ∫ f̂(ξ) conj(φ̂̃(ξ)) e^{-2πi(k,ξ)} dξ
        let f = function::bl_sinc8(1).unwrap();
        let a = Analyzer::FunctionKernel(Kernel::bspline(2, 1).unwrap());
        let m = DilationMatrix::scalar(2.0, 1).unwrap();
        for k in [-3i64, 0, 2] {
            let direct = a.coefficient(&f, &m, 0, &[k]).unwrap();
            let spectral = quadrature::adaptive_box(
                &|xi: &[f64]| {
                    f.fourier(xi).unwrap() * a.eval_symbol(xi).unwrap().conj()
                        * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * xi[0])
                },
                &[-1.0],
                &[1.0],
                &[8],
                1e-12,
                12,
            )
            .unwrap();
            assert!((direct - spectral).norm() < 1e-9, "k={k}: {direct} vs {spectral}");
        }
    }

    #[test]
    fn narrow_gaussian_approaches_point_sample() {
        let f = function::tensor_sine(1).unwrap();
        let m = DilationMatrix::scalar(2.0, 1).unwrap();
        let narrow = Analyzer::FunctionKernel(Kernel::gaussian(1e-3, 1));
        let point = Analyzer::differential(vec![(MultiIndex(vec![0]), Complex64::new(1.0, 0.0))]).unwrap();
        for k in [-2i64, 1, 4] {
            let a = narrow.coefficient(&f, &m, 1, &[k]).unwrap();
            let b = point.coefficient(&f, &m, 1, &[k]).unwrap();
            assert!((a - b).norm() < 2e-3);
        }
    }

    #[test]
    fn leibniz_product() {
        let k = Kernel::bspline(2, 1).unwrap();
        let a = Analyzer::FunctionKernel(Kernel::bspline(1, 1).unwrap());
        // φ̂ conj(φ̂̃) = sinc³, second derivative at 0 is −π²
        let v = product_symbol_deriv(&k, &a, &MultiIndex(vec![2]), &[0.0]).unwrap();
        assert!((v.re + PI * PI).abs() < 1e-12);
        assert_eq!(sub_indices(&MultiIndex(vec![1, 2])).len(), 6);
    }
}
