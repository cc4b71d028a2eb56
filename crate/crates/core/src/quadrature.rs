//! Composite Gauss–Legendre quadrature (7-point panels).

use num_complex::Complex64;

use crate::error::{QpError, Result};

const NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

/// Point budget for one tensor-product evaluation.
const MAX_POINTS: usize = 1 << 26;

/// Nodes and weights of a composite 7-point rule with `panels` equal panels on `[a, b]`.
pub fn composite_rule(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let w = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * 7);
    for p in 0..panels {
        let lo = a + w * p as f64;
        let mid = lo + 0.5 * w;
        for (x, wt) in NODES.iter().zip(WEIGHTS.iter()) {
            out.push((mid + 0.5 * w * x, 0.5 * w * wt));
        }
    }
    out
}

/// Tensor-product composite rule; returns `(∫ f, ∫ |f|)`.
pub fn tensor_integrate<F>(f: &F, lo: &[f64], hi: &[f64], panels: &[usize]) -> (Complex64, f64)
where
    F: Fn(&[f64]) -> Complex64,
{
    let d = lo.len();
    let rules: Vec<Vec<(f64, f64)>> =
        (0..d).map(|a| composite_rule(lo[a], hi[a], panels[a])).collect();
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; d];
    let mut acc = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    if rules.iter().any(|r| r.is_empty()) {
        return (acc, abs);
    }
    loop {
        let mut w = 1.0;
        for a in 0..d {
            let (x, wa) = rules[a][idx[a]];
            point[a] = x;
            w *= wa;
        }
        let v = f(&point);
        acc += v * w;
        abs += v.norm() * w;
        let mut a = 0;
        loop {
            if a == d {
                return (acc, abs);
            }
            idx[a] += 1;
            if idx[a] < rules[a].len() {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

/// Globally refined composite Gauss–Legendre over a box.
///
/// Starts from `initial_panels` per axis and doubles them until the relative
/// change drops below `rel_tol` (or the change is negligible next to `∫|f|`).
pub fn adaptive_box<F>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    initial_panels: &[usize],
    rel_tol: f64,
    max_levels: usize,
) -> Result<Complex64>
where
    F: Fn(&[f64]) -> Complex64,
{
    let mut panels = initial_panels.to_vec();
    let (mut prev, _) = tensor_integrate(f, lo, hi, &panels);
    for level in 1..=max_levels {
        for p in panels.iter_mut() {
            *p *= 2;
        }
        let points: usize = panels.iter().map(|p| p * 7).product();
        if points > MAX_POINTS {
            return Err(QpError::Quadrature { levels: level });
        }
        let (cur, abs) = tensor_integrate(f, lo, hi, &panels);
        let change = (cur - prev).norm();
        if change <= rel_tol * cur.norm() || change <= 1e-15 * abs {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(QpError::Quadrature { levels: max_levels })
}

/// Recursive adaptive 7-point Gauss–Legendre on a bounded interval.
pub fn adaptive_1d<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    const MIN_PANELS: usize = 16;
    let w = (b - a) / MIN_PANELS as f64;
    let pieces: Vec<f64> = (0..MIN_PANELS)
        .map(|i| panel(f, a + w * i as f64, a + w * (i + 1) as f64))
        .collect();
    let coarse: f64 = pieces.iter().sum();
    let scale = pieces.iter().map(|v| v.abs()).sum::<f64>();
    let mut total = 0.0;
    for (i, whole) in pieces.into_iter().enumerate() {
        total += refine(f, a + w * i as f64, a + w * (i + 1) as f64, whole, rel_tol, scale, 0);
    }
    if total.is_finite() {
        total
    } else {
        coarse
    }
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    NODES.iter().zip(WEIGHTS.iter()).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    scale: f64,
    depth: usize,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = panel(f, a, mid);
    let right = panel(f, mid, b);
    let both = left + right;
    if depth >= 40 || (both - whole).abs() <= rel_tol * both.abs().max(1e-300) || (both - whole).abs() <= 1e-17 * scale
    {
        return both;
    }
    refine(f, a, mid, left, rel_tol, scale, depth + 1) + refine(f, mid, b, right, rel_tol, scale, depth + 1)
}

/// One axis of an iterated integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interval {
    Bounded(f64, f64),
    /// `[a, ∞)`
    Upper(f64),
    /// `(-∞, b]`
    Lower(f64),
}

impl Interval {
    /// Maps `t ∈ [0,1)` to the interval; returns `(x, dx/dt)`.
    fn map(&self, t: f64) -> (f64, f64) {
        match *self {
            Interval::Bounded(a, b) => (a + (b - a) * t, b - a),
            Interval::Upper(a) => {
                let s = 1.0 - t;
                (a + t / s, 1.0 / (s * s))
            }
            Interval::Lower(b) => {
                let s = 1.0 - t;
                (b - t / s, 1.0 / (s * s))
            }
        }
    }
}

/// Iterated adaptive integral of `f` over a product of (possibly semi-infinite) intervals.
pub fn iterated<F: Fn(&[f64]) -> f64>(f: &F, axes: &[Interval], rel_tol: f64) -> f64 {
    iterated_inner(f, axes, 0, &vec![0.0; axes.len()], rel_tol)
}

fn iterated_inner<F: Fn(&[f64]) -> f64>(
    f: &F,
    axes: &[Interval],
    axis: usize,
    point: &[f64],
    rel_tol: f64,
) -> f64 {
    let interval = axes[axis];
    let last = axis + 1 == axes.len();
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let (x, jac) = interval.map(t);
        if !x.is_finite() || !jac.is_finite() {
            return 0.0;
        }
        let mut p = point.to_vec();
        p[axis] = x;
        let v = if last { f(&p) } else { iterated_inner(f, axes, axis + 1, &p, rel_tol) };
        v * jac
    };
    adaptive_1d(&g, 0.0, 1.0, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let s: f64 = WEIGHTS.iter().sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exact_for_degree_13() {
        let f = |p: &[f64]| Complex64::new(p[0].powi(13) + p[0].powi(12), 0.0);
        let (v, _) = tensor_integrate(&f, &[-1.0], &[1.0], &[1]);
        assert!((v.re - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_box_gaussian() {
        let f = |p: &[f64]| Complex64::new((-p[0] * p[0] - p[1] * p[1]).exp(), 0.0);
        let v = adaptive_box(&f, &[-6.0, -6.0], &[6.0, 6.0], &[2, 2], 1e-9, 20).unwrap();
        assert!((v.re - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn semi_infinite_tail() {
        // ∫_1^∞ e^{-x} dx = e^{-1}
        let v = iterated(&|p: &[f64]| (-p[0]).exp(), &[Interval::Upper(1.0)], 1e-12);
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        let v = iterated(
            &|p: &[f64]| (-(p[0] * p[0]) - p[1] * p[1]).exp(),
            &[Interval::Lower(0.0), Interval::Bounded(-1.0, 1.0)],
            1e-11,
        );
        let erf1 = 0.842_700_792_949_714_9;
        assert!((v - 0.5 * std::f64::consts::PI.sqrt() * std::f64::consts::PI.sqrt() * erf1).abs() < 1e-9);
    }
}
