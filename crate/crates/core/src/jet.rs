//! Truncated Taylor series `Σ_{k≤K} a_k t^k` used for exact derivatives of
//! the closed-form Fourier transforms.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::multiindex::factorial;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Jet(pub Vec<Complex64>);

impl Jet {
    pub fn constant(c: Complex64, order: usize) -> Self {
        let mut v = vec![Complex64::new(0.0, 0.0); order + 1];
        v[0] = c;
        Jet(v)
    }

    pub fn order(&self) -> usize {
        self.0.len() - 1
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let k = self.order();
        let mut out = vec![Complex64::new(0.0, 0.0); k + 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().take(k + 1 - i).enumerate() {
                out[i + j] += a * b;
            }
        }
        Jet(out)
    }

    pub fn powi(&self, n: usize) -> Jet {
        let mut acc = Jet::constant(Complex64::new(1.0, 0.0), self.order());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// `e^{self}` via `k g_k = Σ_{i=1}^k i u_i g_{k-i}`.
    pub fn exp(&self) -> Jet {
        let k = self.order();
        let mut g = vec![Complex64::new(0.0, 0.0); k + 1];
        g[0] = self.0[0].exp();
        for n in 1..=k {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 1..=n {
                acc += self.0[i] * g[n - i] * i as f64;
            }
            g[n] = acc / n as f64;
        }
        Jet(g)
    }

    /// Jet of `t -> f(c t)` given the jet of `f` at the corresponding point.
    pub fn rescale(&self, c: f64) -> Jet {
        Jet(self.0.iter().enumerate().map(|(k, a)| a * c.powi(k as i32)).collect())
    }

    /// `k`-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> Complex64 {
        self.0[k] * factorial(k)
    }
}

/// Jet of `sin(πξ)/(πξ)` at `xi`.
pub(crate) fn sinc_jet(xi: f64, order: usize) -> Jet {
    let mut a = vec![Complex64::new(0.0, 0.0); order + 1];
    if xi.abs() < 1.0 {
        // sinc(x) = Σ_m (-1)^m π^{2m} x^{2m} / (2m+1)!, re-expanded around xi
        for m in 0..60usize {
            let c = (-1f64).powi(m as i32) * PI.powi(2 * m as i32) / factorial(2 * m + 1);
            for (k, slot) in a.iter_mut().enumerate().take((2 * m).min(order) + 1) {
                let binom = crate::multiindex::binomial(2 * m, k);
                *slot += c * binom * xi.powi((2 * m - k) as i32);
            }
        }
        return Jet(a);
    }
    // sin(π(xi+t)) · 1/(π(xi+t))
    let sin_part: Vec<Complex64> = (0..=order)
        .map(|k| {
            let v = (PI * xi + k as f64 * PI / 2.0).sin() * PI.powi(k as i32) / factorial(k);
            Complex64::new(v, 0.0)
        })
        .collect();
    let inv: Vec<Complex64> = (0..=order)
        .map(|k| Complex64::new((-1f64 / xi).powi(k as i32) / (PI * xi), 0.0))
        .collect();
    Jet(sin_part).mul(&Jet(inv))
}

/// Jet of `e^{-a x²}` at `x`.
pub(crate) fn gaussian_jet(a: f64, x: f64, order: usize) -> Jet {
    let mut u = vec![Complex64::new(0.0, 0.0); order + 1];
    u[0] = Complex64::new(-a * x * x, 0.0);
    if order >= 1 {
        u[1] = Complex64::new(-2.0 * a * x, 0.0);
    }
    if order >= 2 {
        u[2] = Complex64::new(-a, 0.0);
    }
    Jet(u).exp()
}

/// Jet of `sin(ω x)` at `x`.
pub(crate) fn sin_jet(omega: f64, x: f64, order: usize) -> Jet {
    Jet((0..=order)
        .map(|k| {
            let v = (omega * x + k as f64 * PI / 2.0).sin() * omega.powi(k as i32) / factorial(k);
            Complex64::new(v, 0.0)
        })
        .collect())
}

/// Jet of `e^{-2πi s ξ}` at `xi`.
pub(crate) fn phase_jet(shift: f64, xi: f64, order: usize) -> Jet {
    let base = Complex64::from_polar(1.0, -2.0 * PI * shift * xi);
    let rate = Complex64::new(0.0, -2.0 * PI * shift);
    let mut v = Vec::with_capacity(order + 1);
    let mut term = base;
    for k in 0..=order {
        v.push(term);
        term = term * rate / (k + 1) as f64;
    }
    Jet(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_branches_agree() {
        // both expansions at the switch point
        for &x in &[0.999_999, 1.000_001] {
            let j = sinc_jet(x, 6);
            for k in 0..=6 {
                let other = if x < 1.0 { sinc_jet(1.000_001, 6) } else { sinc_jet(0.999_999, 6) };
                assert!((j.derivative(k) - other.derivative(k)).norm() < 1e-4 * (1.0 + j.derivative(k).norm()));
            }
        }
    }

    #[test]
    fn sinc_squared_second_derivative_at_zero() {
        let j = sinc_jet(0.0, 4).powi(2);
        assert!((j.derivative(2).re + 2.0 * PI * PI / 3.0).abs() < 1e-13);
        assert!(j.derivative(1).norm() < 1e-15);
    }

    #[test]
    fn gaussian_derivatives() {
        // d²/dx² e^{-x²} = (4x² - 2) e^{-x²}
        let x: f64 = 0.7;
        let j = gaussian_jet(1.0, x, 3);
        assert!((j.derivative(2).re - (4.0 * x * x - 2.0) * (-x * x).exp()).abs() < 1e-14);
        // third: (-8x³ + 12x) e^{-x²}
        assert!((j.derivative(3).re - (-8.0 * x.powi(3) + 12.0 * x) * (-x * x).exp()).abs() < 1e-13);
    }

    #[test]
    fn zeros_at_integers() {
        let j = sinc_jet(3.0, 6).powi(4);
        for k in 0..4 {
            assert!(j.derivative(k).norm() < 1e-12, "k={k}");
        }
        assert!(j.derivative(4).norm() > 1e-3);
    }
}
