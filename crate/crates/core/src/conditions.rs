//! Order certificates for a kernel pair: Strang–Fix order of `φ`, compatibility
//! order of `(φ, φ̃)`, the tail-sum bound on Fourier derivatives and the
//! quasi-interpolation combinations of B-splines.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analyzers::{product_symbol_deriv, Analyzer};
use crate::error::{QpError, Result};
use crate::kernels::{lattice_box, Kernel, KernelKind};
use crate::multiindex::MultiIndex;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_LATTICE_RADIUS: i64 = 50;
pub const DEFAULT_DELTA: f64 = 0.25;
/// A non-vanishing residual must exceed the tolerance by this factor.
pub const SEPARATION: f64 = 10.0;

/// Worst residual over the tested lattice points for one multi-index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub condition: &'static str,
    pub beta: MultiIndex,
    /// Lattice point attaining the maximum (the origin for compatibility).
    pub point: Vec<i64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderCertificate {
    pub strang_fix_order: usize,
    pub compatibility_order: usize,
    pub effective_order: usize,
    pub tolerance_used: f64,
    pub max_order_tested: usize,
    pub lattice_radius: i64,
    /// Set when a first non-vanishing residual falls within 10× the tolerance.
    pub ambiguous: bool,
    pub residuals: Vec<Residual>,
}

/// Scans orders `0..=max_s` and returns the first order whose residual reaches `tol`.
///
/// `Ok((s, ambiguous))`; `ambiguous` when that residual is below `SEPARATION · tol`.
fn first_nonvanishing(per_order: &[f64], max_s: usize, tol: f64) -> (usize, bool) {
    for (o, &r) in per_order.iter().enumerate().take(max_s) {
        if r >= tol {
            return (o, r < SEPARATION * tol);
        }
    }
    (max_s, false)
}

fn check_max_s(kernel: &Kernel, max_s: usize) -> Result<()> {
    let d = kernel.dim();
    let available = kernel.fourier_smoothness_order();
    if max_s + d + 1 > available {
        return Err(QpError::OrderTooHigh { requested: max_s, available: available.saturating_sub(d + 1) });
    }
    Ok(())
}

/// Residuals `max_{[β]=o} max_{0<|k|∞<=R} |D^β φ̂(k)|` for `o = 0..=max_s`.
fn strang_fix_residuals(kernel: &Kernel, max_s: usize, lattice_radius: i64) -> Result<Vec<Residual>> {
    let d = kernel.dim();
    let points: Vec<Vec<i64>> =
        lattice_box(d, -lattice_radius, lattice_radius).into_iter().filter(|k| k.iter().any(|&v| v != 0)).collect();
    let mut out = Vec::new();
    for o in 0..=max_s {
        for beta in MultiIndex::all_of_order(d, o) {
            let values: Vec<Result<(f64, usize)>> = points
                .par_iter()
                .enumerate()
                .map(|(i, k)| {
                    let xi: Vec<f64> = k.iter().map(|&v| v as f64).collect();
                    Ok((kernel.eval_fourier_deriv(&beta, &xi)?.norm(), i))
                })
                .collect();
            let mut best = (0.0f64, 0usize);
            for v in values {
                let v = v?;
                if v.0 > best.0 {
                    best = v;
                }
            }
            out.push(Residual { condition: "strang_fix", beta, point: points[best.1].clone(), value: best.0 });
        }
    }
    Ok(out)
}

fn per_order(residuals: &[Residual], condition: &str, max_s: usize) -> Vec<f64> {
    let mut v = vec![0.0f64; max_s + 1];
    for r in residuals.iter().filter(|r| r.condition == condition) {
        let o = r.beta.order();
        if o <= max_s {
            v[o] = v[o].max(r.value);
        }
    }
    v
}

/// Largest `s <= max_s` with `|D^β φ̂(k)| < tol` for `[β] < s` and `0 < |k|∞ <= lattice_radius`.
pub fn strang_fix_order(kernel: &Kernel, max_s: usize, lattice_radius: i64, tol: f64) -> Result<usize> {
    check_max_s(kernel, max_s)?;
    if lattice_radius < 1 {
        return Err(QpError::Config("lattice radius must be at least 1".into()));
    }
    let res = strang_fix_residuals(kernel, max_s, lattice_radius)?;
    let orders = per_order(&res, "strang_fix", max_s);
    let (s, ambiguous) = first_nonvanishing(&orders, max_s, tol);
    if ambiguous {
        return Err(QpError::Ambiguous { order: s, residual: orders[s], tol });
    }
    Ok(s)
}

/// Residuals `max_{[β]=o} |D^β(1 − φ̂ conj(φ̂̃))(0)|`.
fn compatibility_residuals(kernel: &Kernel, analyzer: &Analyzer, max_s: usize) -> Result<Vec<Residual>> {
    let d = kernel.dim();
    if let Some(ad) = analyzer.dim() {
        if ad != d {
            return Err(QpError::Dimension { expected: d, got: ad });
        }
    }
    let origin = vec![0.0; d];
    let mut out = Vec::new();
    for o in 0..=max_s {
        for beta in MultiIndex::all_of_order(d, o) {
            let mut v = -product_symbol_deriv(kernel, analyzer, &beta, &origin)?;
            if o == 0 {
                v += Complex64::new(1.0, 0.0);
            }
            out.push(Residual { condition: "compatibility", beta, point: vec![0; d], value: v.norm() });
        }
    }
    Ok(out)
}

/// Largest `s <= max_s` with `D^β(1 − φ̂ conj(φ̂̃))(0)` below `tol` for `[β] < s`.
pub fn compatibility_order(kernel: &Kernel, analyzer: &Analyzer, max_s: usize, tol: f64) -> Result<usize> {
    check_max_s(kernel, max_s)?;
    let res = compatibility_residuals(kernel, analyzer, max_s)?;
    let orders = per_order(&res, "compatibility", max_s);
    let (s, ambiguous) = first_nonvanishing(&orders, max_s, tol);
    if ambiguous {
        return Err(QpError::Ambiguous { order: s, residual: orders[s], tol });
    }
    Ok(s)
}

/// Both orders with all residuals; ambiguity is recorded rather than raised.
pub fn certify(
    kernel: &Kernel,
    analyzer: &Analyzer,
    max_s: usize,
    lattice_radius: i64,
    tol: f64,
) -> Result<OrderCertificate> {
    check_max_s(kernel, max_s)?;
    if lattice_radius < 1 {
        return Err(QpError::Config("lattice radius must be at least 1".into()));
    }
    let mut residuals = strang_fix_residuals(kernel, max_s, lattice_radius)?;
    residuals.extend(compatibility_residuals(kernel, analyzer, max_s)?);
    let (sf, amb_sf) = first_nonvanishing(&per_order(&residuals, "strang_fix", max_s), max_s, tol);
    let (co, amb_co) = first_nonvanishing(&per_order(&residuals, "compatibility", max_s), max_s, tol);
    Ok(OrderCertificate {
        strang_fix_order: sf,
        compatibility_order: co,
        effective_order: sf.min(co),
        tolerance_used: tol,
        max_order_tested: max_s,
        lattice_radius,
        ambiguous: amb_sf || amb_co,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailBound {
    /// `max_β Σ_{0<|l|∞<=R} sup_{ξ∈[-δ,δ]^d} |D^β φ̂(ξ + l)|`.
    pub bound: f64,
    /// Multi-index attaining the maximum.
    pub worst_beta: MultiIndex,
    /// Worst ratio of the outermost shell to the total over `β`.
    pub last_shell_ratio: f64,
    /// Smallest fitted exponent `α` in `shell(r) ~ r^{-α}` over `β`.
    pub decay_exponent: f64,
    /// `α < 2.5`: convergent in principle, but slowly.
    pub borderline: bool,
}

/// Shell sums below this exponent are treated as divergent.
const DIVERGENT_EXPONENT: f64 = 1.1;
const BORDERLINE_EXPONENT: f64 = 2.5;
const DIVERGENT_SHELL_RATIO: f64 = 0.1;

/// Truncated estimate of `Σ_{l≠0} sup_{2δT^d} |D^β φ̂(· + l)|` for `s <= [β] <= s+d+1`.
///
/// The sup is sampled on a `9^d` grid. Each shell `|l|∞ = r` is summed separately;
/// the decay exponent is the negated log-log slope of the shell sums over the outer half.
pub fn tail_derivative_bound(kernel: &Kernel, s: usize, lattice_radius: i64, delta: f64) -> Result<TailBound> {
    let d = kernel.dim();
    if !(delta > 0.0 && delta < 0.5) {
        return Err(QpError::Config(format!("δ = {delta} must lie in (0, 1/2)")));
    }
    if lattice_radius < 4 {
        return Err(QpError::Config("tail bound needs a lattice radius of at least 4".into()));
    }
    let top = s + d + 1;
    if top > kernel.fourier_smoothness_order() {
        return Err(QpError::OrderTooHigh { requested: top, available: kernel.fourier_smoothness_order() });
    }
    let offsets: Vec<Vec<f64>> = lattice_box(d, -4, 4)
        .into_iter()
        .map(|o| o.iter().map(|&v| v as f64 * delta / 4.0).collect())
        .collect();
    let lattice: Vec<Vec<i64>> =
        lattice_box(d, -lattice_radius, lattice_radius).into_iter().filter(|l| l.iter().any(|&v| v != 0)).collect();

    let mut best: Option<TailBound> = None;
    for beta in MultiIndex::all_in_range(d, s, top) {
        let sups: Vec<Result<(usize, f64)>> = lattice
            .par_iter()
            .map(|l| {
                let shell = l.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0);
                let mut sup = 0.0f64;
                for o in &offsets {
                    let xi: Vec<f64> = l.iter().zip(o).map(|(&a, &b)| a as f64 + b).collect();
                    sup = sup.max(kernel.eval_fourier_deriv(&beta, &xi)?.norm());
                }
                Ok((shell, sup))
            })
            .collect();
        let mut shells = vec![0.0f64; lattice_radius as usize + 1];
        for v in sups {
            let (r, sup) = v?;
            shells[r] += sup;
        }
        let total: f64 = shells.iter().sum();
        let last = shells[lattice_radius as usize];
        let ratio = if total > 0.0 { last / total } else { 0.0 };
        let exponent = shell_exponent(&shells);
        let candidate = TailBound {
            bound: total,
            worst_beta: beta,
            last_shell_ratio: ratio,
            decay_exponent: exponent,
            borderline: exponent < BORDERLINE_EXPONENT,
        };
        best = Some(match best {
            None => candidate,
            Some(b) => TailBound {
                bound: b.bound.max(candidate.bound),
                worst_beta: if candidate.bound > b.bound { candidate.worst_beta.clone() } else { b.worst_beta },
                last_shell_ratio: b.last_shell_ratio.max(candidate.last_shell_ratio),
                decay_exponent: b.decay_exponent.min(candidate.decay_exponent),
                borderline: b.borderline || candidate.borderline,
            },
        });
    }
    let out = best.expect("at least one multi-index in range");
    if out.decay_exponent <= DIVERGENT_EXPONENT || out.last_shell_ratio > DIVERGENT_SHELL_RATIO {
        return Err(QpError::Divergent {
            last_shell_ratio: out.last_shell_ratio,
            decay_exponent: out.decay_exponent,
        });
    }
    Ok(out)
}

/// Negated least-squares slope of `log shell(r)` against `log r` on the outer half of the shells.
fn shell_exponent(shells: &[f64]) -> f64 {
    let radius = shells.len() - 1;
    let pts: Vec<(f64, f64)> = ((radius / 2).max(1)..=radius)
        .filter(|&r| shells[r] > 0.0)
        .map(|r| ((r as f64).ln(), shells[r].ln()))
        .collect();
    if pts.len() < 2 {
        return f64::INFINITY;
    }
    -crate::fit::least_squares_slope(&pts)
}

/// Symmetric combination `Σ_s c_s B(x − s)` of a single B-spline whose symbol
/// satisfies `D^β(1 − φ̂)(0) = 0` for `[β] < target_order`.
///
/// Per axis the shifts are `−r..=r` with `r = ⌊(target_order − 1)/2⌋` and
/// `c_{−i} = c_i`; odd derivatives vanish by symmetry, so the `r + 1` even
/// conditions determine the `r + 1` unknowns. Axes combine by tensor product.
pub fn quasi_interpolation_coeffs(base: &Kernel, target_order: usize) -> Result<Vec<(Vec<i64>, f64)>> {
    let orders = match base.kind() {
        KernelKind::BSplineTensor { orders, terms }
            if terms.len() == 1 && terms[0].1 == 1.0 && terms[0].0.iter().all(|&s| s == 0) =>
        {
            orders.clone()
        }
        _ => return Err(QpError::Config("quasi-interpolation needs a single unshifted B-spline".into())),
    };
    if target_order == 0 {
        return Err(QpError::Config("target order must be positive".into()));
    }
    if let Some(&n) = orders.iter().find(|&&n| n < target_order) {
        return Err(QpError::Config(format!(
            "target order {target_order} exceeds the Strang–Fix order {n} of the base B-spline"
        )));
    }
    let mut per_axis: Vec<Vec<(i64, f64)>> = Vec::with_capacity(orders.len());
    for &n in &orders {
        per_axis.push(quasi_interpolation_1d(n, target_order)?);
    }
    let mut out: Vec<(Vec<i64>, f64)> = vec![(Vec::new(), 1.0)];
    for axis in &per_axis {
        out = out
            .into_iter()
            .flat_map(|(s, c)| {
                axis.iter().map(move |&(si, ci)| {
                    let mut s2 = s.clone();
                    s2.push(si);
                    (s2, c * ci)
                })
            })
            .collect();
    }
    Ok(out)
}

fn quasi_interpolation_1d(n: usize, target_order: usize) -> Result<Vec<(i64, f64)>> {
    let r = (target_order - 1) / 2;
    let unknowns = r + 1;
    let b = Kernel::bspline(n, 1)?;
    // Taylor data D^{2l} sinc^n(0)
    let envelope: Vec<f64> = (0..=2 * r)
        .map(|k| b.eval_fourier_deriv(&MultiIndex(vec![k]), &[0.0]).map(|v| v.re))
        .collect::<Result<_>>()?;
    // symbol = sinc^n(ξ) (c_0 + Σ_i 2 c_i cos(2π i ξ)); D^{2l} at 0 by Leibniz
    let mut a = DMatrix::<f64>::zeros(unknowns, unknowns);
    let mut rhs = DVector::<f64>::zeros(unknowns);
    for l in 0..unknowns {
        let order = 2 * l;
        rhs[l] = if l == 0 { 1.0 } else { 0.0 };
        for i in 0..unknowns {
            let mut v = 0.0;
            for m in (0..=order).step_by(2) {
                // D^m cos(2π i ξ) at 0 = (−1)^{m/2} (2π i)^m
                let cos_deriv = if i == 0 {
                    if m == 0 { 1.0 } else { 0.0 }
                } else {
                    (-1f64).powi((m / 2) as i32) * (2.0 * std::f64::consts::PI * i as f64).powi(m as i32)
                };
                let weight = if i == 0 { 1.0 } else { 2.0 };
                v += crate::multiindex::binomial(order, m) * envelope[order - m] * cos_deriv * weight;
            }
            a[(l, i)] = v;
        }
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < 1e8) {
        return Err(QpError::SingularSystem { condition });
    }
    let c = a.lu().solve(&rhs).ok_or(QpError::SingularSystem { condition })?;
    let mut out = Vec::with_capacity(2 * r + 1);
    for i in -(r as i64)..=(r as i64) {
        out.push((i, c[i.unsigned_abs() as usize]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(n: usize) -> Kernel {
        Kernel::bspline(n, 1).unwrap()
    }

    #[test]
    fn strang_fix_of_bsplines() {
        for n in 1..=4 {
            assert_eq!(strang_fix_order(&bs(n), 6, 50, DEFAULT_TOL).unwrap(), n);
        }
    }

    #[test]
    fn compatibility_examples() {
        assert_eq!(compatibility_order(&bs(2), &Analyzer::Delta, 6, DEFAULT_TOL).unwrap(), 2);
        assert_eq!(compatibility_order(&bs(4), &Analyzer::Delta, 6, DEFAULT_TOL).unwrap(), 2);
        // the centered box has an even symbol, so 1 − sinc(ξ) = (πξ)²/6 + O(ξ⁴)
        assert_eq!(compatibility_order(&bs(1), &Analyzer::Delta, 6, DEFAULT_TOL).unwrap(), 2);
        let c = certify(&bs(1), &Analyzer::Delta, 6, 50, DEFAULT_TOL).unwrap();
        assert_eq!(c.effective_order, 1);
        let boxa = Analyzer::FunctionKernel(bs(1));
        assert_eq!(compatibility_order(&bs(2), &boxa, 6, DEFAULT_TOL).unwrap(), 2);
        assert_eq!(compatibility_order(&bs(2).scaled(2.0), &Analyzer::Delta, 6, DEFAULT_TOL).unwrap(), 0);
    }

    #[test]
    fn max_order_is_limited_by_smoothness() {
        assert!(matches!(strang_fix_order(&bs(2), 20, 50, DEFAULT_TOL), Err(QpError::OrderTooHigh { .. })));
    }

    #[test]
    fn quasi_interpolation() {
        assert_eq!(quasi_interpolation_coeffs(&bs(2), 2).unwrap(), vec![(vec![0], 1.0)]);
        assert_eq!(quasi_interpolation_coeffs(&bs(1), 1).unwrap(), vec![(vec![0], 1.0)]);
        let c = quasi_interpolation_coeffs(&bs(4), 4).unwrap();
        assert_eq!(c.len(), 3);
        assert!((c[0].1 + 1.0 / 6.0).abs() < 1e-12);
        assert!((c[1].1 - 4.0 / 3.0).abs() < 1e-12);
        let k = Kernel::bspline_tensor(vec![4], c).unwrap();
        assert!(compatibility_order(&k, &Analyzer::Delta, 6, DEFAULT_TOL).unwrap() >= 4);
        assert!(quasi_interpolation_coeffs(&bs(2), 4).is_err());
    }

    #[test]
    fn tail_diagnostics() {
        let cubic = tail_derivative_bound(&bs(4), 2, 50, DEFAULT_DELTA).unwrap();
        assert!(cubic.bound.is_finite());
        assert!(cubic.last_shell_ratio < 1e-3);
        assert!(matches!(tail_derivative_bound(&bs(1), 1, 50, DEFAULT_DELTA), Err(QpError::Divergent { .. })));
        let hat = tail_derivative_bound(&bs(2), 2, 50, DEFAULT_DELTA).unwrap();
        assert!(hat.borderline);
    }

    #[test]
    fn certificate_is_consistent() {
        let c = certify(&bs(3), &Analyzer::Delta, 6, 10, DEFAULT_TOL).unwrap();
        assert_eq!(c.strang_fix_order, 3);
        assert_eq!(c.compatibility_order, 2);
        assert_eq!(c.effective_order, 2);
        assert!(!c.ambiguous);
    }
}
