//! The quasi-projection `Q_j f(x) = Σ_k c_k φ(M^j x + k)` on grids and point sets.
//!
//! `c_k` comes from [`Analyzer::coefficient_with_inverse`], which absorbs the
//! `m^{j/2}` factors of both `φ_jk` and `φ̃_jk`; synthesis never rescales.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::analyzers::Analyzer;
use crate::dilation::DilationMatrix;
use crate::error::{QpError, Result};
use crate::field::grid::{self, GridFunction, GridSpec};
use crate::field::TestFunction;
use crate::kernels::{Kernel, KernelKind};

/// Largest admissible number of active lattice indices.
pub const MAX_ACTIVE_TERMS: u128 = 100_000_000;

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub kernel: Kernel,
    pub analyzer: Analyzer,
    pub dilation: DilationMatrix,
    pub level: i32,
    /// Drops coefficients with `|k|∞` above this radius.
    pub lattice_truncation: Option<i64>,
}

impl OperatorSpec {
    pub fn new(kernel: Kernel, analyzer: Analyzer, dilation: DilationMatrix, level: i32) -> Result<Self> {
        let spec = OperatorSpec { kernel, analyzer, dilation, level, lattice_truncation: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_level(&self, level: i32) -> OperatorSpec {
        OperatorSpec { level, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.level < 0 {
            return Err(QpError::Config(format!("level {} must be nonnegative", self.level)));
        }
        let d = self.dilation.dim();
        if self.kernel.dim() != d {
            return Err(QpError::Dimension { expected: d, got: self.kernel.dim() });
        }
        if let Some(ad) = self.analyzer.dim() {
            if ad != d {
                return Err(QpError::Dimension { expected: d, got: ad });
            }
        }
        if !self.kernel.support_radius().is_finite() {
            return Err(QpError::Unsupported("synthesis needs a kernel with finite support".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dilation.dim()
    }
}

/// Coefficients `c_k` on an axis-aligned block of lattice indices.
struct CoefficientTable {
    lo: Vec<i64>,
    hi: Vec<i64>,
    values: Vec<Complex64>,
}

impl CoefficientTable {
    fn get(&self, k: &[i64]) -> Complex64 {
        let mut flat = 0usize;
        for a in 0..k.len() {
            if k[a] < self.lo[a] || k[a] > self.hi[a] {
                return Complex64::new(0.0, 0.0);
            }
            flat = flat * (self.hi[a] - self.lo[a] + 1) as usize + (k[a] - self.lo[a]) as usize;
        }
        self.values[flat]
    }
}

fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).iter().copied().collect()
}

/// Bounding box of `m · [lo, hi]`.
fn image_box(m: &DMatrix<f64>, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = lo.len();
    let mut out_lo = vec![0.0; d];
    let mut out_hi = vec![0.0; d];
    for r in 0..d {
        for c in 0..d {
            let a = m[(r, c)] * lo[c];
            let b = m[(r, c)] * hi[c];
            out_lo[r] += a.min(b);
            out_hi[r] += a.max(b);
        }
    }
    (out_lo, out_hi)
}

/// Indices `k` with `supp φ(M^j · + k)` meeting the box `[lo, hi]`.
fn active_range(spec: &OperatorSpec, lo: &[f64], hi: &[f64]) -> Result<(Vec<i64>, Vec<i64>)> {
    let mj = spec.dilation.power(spec.level)?;
    let (u_lo, u_hi) = image_box(&mj, lo, hi);
    let support = spec.kernel.support_box();
    let d = lo.len();
    let mut k_lo = vec![0i64; d];
    let mut k_hi = vec![0i64; d];
    let mut count: u128 = 1;
    for a in 0..d {
        k_lo[a] = (support[a].0 - u_hi[a]).ceil() as i64;
        k_hi[a] = (support[a].1 - u_lo[a]).floor() as i64;
        if let Some(t) = spec.lattice_truncation {
            k_lo[a] = k_lo[a].max(-t);
            k_hi[a] = k_hi[a].min(t);
        }
        let n = (k_hi[a] - k_lo[a] + 1).max(0) as u128;
        count = count.saturating_mul(n);
    }
    if count > MAX_ACTIVE_TERMS {
        return Err(QpError::ActiveSetTooLarge { terms: count, limit: MAX_ACTIVE_TERMS });
    }
    Ok((k_lo, k_hi))
}

/// Whether the samples behind `c_k` stay outside the decay box of `f`.
fn negligible(spec: &OperatorSpec, f: &TestFunction, inv: &DMatrix<f64>, k: &[i64]) -> bool {
    let Analyzer::FunctionKernel(kernel) = &spec.analyzer else { return false };
    let d = k.len();
    let support = kernel.support_box();
    let lo: Vec<f64> = (0..d).map(|a| support[a].0 - k[a] as f64).collect();
    let hi: Vec<f64> = (0..d).map(|a| support[a].1 - k[a] as f64).collect();
    let (x_lo, x_hi) = image_box(inv, &lo, &hi);
    let decay = f.decay_box();
    (0..d).any(|a| x_hi[a] < decay[a].0 || x_lo[a] > decay[a].1)
}

fn coefficient_table(spec: &OperatorSpec, f: &TestFunction, k_lo: Vec<i64>, k_hi: Vec<i64>) -> Result<CoefficientTable> {
    let d = k_lo.len();
    let sizes: Vec<usize> = (0..d).map(|a| (k_hi[a] - k_lo[a] + 1).max(0) as usize).collect();
    let total: usize = sizes.iter().product();
    if f.is_zero() {
        return Ok(CoefficientTable { lo: k_lo, hi: k_hi, values: vec![Complex64::new(0.0, 0.0); total] });
    }
    let inv = spec.dilation.power(-spec.level)?;
    let values: Vec<Result<Complex64>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut k = vec![0i64; d];
            let mut rem = flat;
            for a in (0..d).rev() {
                k[a] = k_lo[a] + (rem % sizes[a]) as i64;
                rem /= sizes[a];
            }
            if negligible(spec, f, &inv, &k) {
                return Ok(Complex64::new(0.0, 0.0));
            }
            spec.analyzer.coefficient_with_inverse(f, &inv, &k)
        })
        .collect();
    let values = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CoefficientTable { lo: k_lo, hi: k_hi, values })
}

/// `Σ_k c_k φ(y + k)` over the `k` whose shifted support contains `y = M^j x`.
fn synthesize(kernel: &Kernel, support: &[(f64, f64)], table: &CoefficientTable, y: &[f64]) -> Complex64 {
    let d = y.len();
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for a in 0..d {
        lo[a] = ((support[a].0 - y[a]).ceil() as i64).max(table.lo[a]);
        hi[a] = ((support[a].1 - y[a]).floor() as i64).min(table.hi[a]);
        if hi[a] < lo[a] {
            return Complex64::new(0.0, 0.0);
        }
    }
    let mut k = lo.clone();
    let mut z = vec![0.0; d];
    let mut acc = Complex64::new(0.0, 0.0);
    loop {
        let c = table.get(&k);
        if c != Complex64::new(0.0, 0.0) {
            for a in 0..d {
                z[a] = y[a] + k[a] as f64;
            }
            acc += c * kernel.eval(&z);
        }
        let mut a = d;
        loop {
            if a == 0 {
                return acc;
            }
            a -= 1;
            k[a] += 1;
            if k[a] <= hi[a] {
                break;
            }
            k[a] = lo[a];
        }
    }
}

fn check_function(spec: &OperatorSpec, f: &TestFunction) -> Result<()> {
    spec.validate()?;
    if f.dim() != spec.dim() {
        return Err(QpError::Dimension { expected: spec.dim(), got: f.dim() });
    }
    Ok(())
}

/// `Q_j f` on the grid.
pub fn apply(spec: &OperatorSpec, f: &TestFunction, grid_spec: &GridSpec) -> Result<GridFunction> {
    check_function(spec, f)?;
    grid_spec.validate()?;
    let (k_lo, k_hi) = active_range(spec, &grid_spec.lo, &grid_spec.hi)?;
    let table = coefficient_table(spec, f, k_lo, k_hi)?;
    let mj = spec.dilation.power(spec.level)?;
    let support = spec.kernel.support_box();
    GridFunction::from_fn(grid_spec, |x| synthesize(&spec.kernel, &support, &table, &mat_vec(&mj, x)))
}

/// `Q_j f` at arbitrary points.
pub fn apply_at_points(spec: &OperatorSpec, f: &TestFunction, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    check_function(spec, f)?;
    let d = spec.dim();
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        if p.len() != d {
            return Err(QpError::Dimension { expected: d, got: p.len() });
        }
        for a in 0..d {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let (k_lo, k_hi) = active_range(spec, &lo, &hi)?;
    let table = coefficient_table(spec, f, k_lo, k_hi)?;
    let mj = spec.dilation.power(spec.level)?;
    let support = spec.kernel.support_box();
    Ok(points.par_iter().map(|x| synthesize(&spec.kernel, &support, &table, &mat_vec(&mj, x))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `‖f − Q_j f‖_p` on the grid.
    pub error: f64,
    /// Truncation band of a windowed-sinc kernel (0 for compactly supported kernels).
    pub uncertainty: f64,
    /// Boundary collar excluded from the norm.
    pub collar: f64,
    pub active_terms: u128,
}

/// `Σ_{|k|>R} (πk)^{-2}` per axis, summed over axes.
pub fn sinc_tail_bound(kernel: &Kernel) -> f64 {
    match kernel.kind() {
        KernelKind::WindowedSinc { band, truncation_radius, .. } => {
            let r = truncation_radius.floor() as u64;
            // Σ_{k>R} 1/k² by direct summation to 10^6 plus the integral remainder
            let limit = 1_000_000u64.max(r + 1);
            let partial: f64 = ((r + 1)..=limit).rev().map(|k| 1.0 / (k as f64 * k as f64)).sum();
            let tail = partial + 1.0 / limit as f64;
            band.len() as f64 * 2.0 * tail / (std::f64::consts::PI * std::f64::consts::PI)
        }
        _ => 0.0,
    }
}

/// `‖f − Q_j f‖_p` on the grid, with the sinc truncation band.
pub fn error(spec: &OperatorSpec, f: &TestFunction, p: f64, grid_spec: &GridSpec) -> Result<ErrorReport> {
    crate::field::smoothness::check_p(p)?;
    let (k_lo, k_hi) = active_range(spec, &grid_spec.lo, &grid_spec.hi)?;
    let active_terms = k_lo.iter().zip(&k_hi).map(|(l, h)| (h - l + 1).max(0) as u128).product();
    let q = apply(spec, f, grid_spec)?;
    let exact = grid::sample(f, grid_spec)?;
    let diff = exact.sub(&q)?;
    let err = grid::lp_norm(&diff, p);
    // sup-norm band, carried to L_p through the box volume
    let volume: f64 = grid_spec.lo.iter().zip(&grid_spec.hi).map(|(l, h)| h - l).product();
    let to_lp = if p.is_infinite() { 1.0 } else { volume.powf(1.0 / p) };
    let uncertainty = sinc_tail_bound(&spec.kernel) * exact.max_abs() * to_lp;
    Ok(ErrorReport { error: err, uncertainty, collar: 0.0, active_terms })
}

/// `‖f − Q_j f‖_p / ‖g − Q_0 g‖_p` with `g = m^{-j/p} f(M^{-j} ·)`.
///
/// The right side is evaluated on the image points `y_i = M^j x_i` of the grid
/// with trapezoid weights scaled by `m^j`, so both sides discretize the same
/// integral and the ratio is 1 up to rounding.
pub fn rescale_check(spec: &OperatorSpec, f: &TestFunction, p: f64, grid_spec: &GridSpec) -> Result<f64> {
    crate::field::smoothness::check_p(p)?;
    if spec.level == 0 {
        return Ok(1.0);
    }
    let j = spec.level;
    let m = spec.dilation.det_abs();
    let lhs = error(spec, f, p, grid_spec)?.error;

    let scale = if p.is_infinite() { 1.0 } else { m.powf(-(j as f64) / p) };
    let g = f.linear_transform(&spec.dilation.power(-j)?, scale)?;
    let mj = spec.dilation.power(j)?;
    let points: Vec<Vec<f64>> = (0..grid_spec.len()).map(|i| mat_vec(&mj, &grid_spec.point(i))).collect();
    let q0 = apply_at_points(&spec.with_level(0), &g, &points)?;
    let mjw = m.powi(j);
    let rhs = if p.is_infinite() {
        points.iter().zip(&q0).fold(0.0f64, |acc, (y, q)| acc.max((Complex64::new(g.eval(y), 0.0) - q).norm()))
    } else {
        let terms: Vec<f64> = points
            .par_iter()
            .zip(&q0)
            .enumerate()
            .map(|(i, (y, q))| mjw * grid_spec.weight(i) * (Complex64::new(g.eval(y), 0.0) - q).norm().powf(p))
            .collect();
        terms.iter().sum::<f64>().powf(1.0 / p)
    };
    if lhs == 0.0 && rhs == 0.0 {
        return Ok(1.0);
    }
    Ok(lhs / rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::function;

    fn hat_delta(d: usize) -> OperatorSpec {
        let m = DilationMatrix::scalar(2.0, d).unwrap();
        OperatorSpec::new(Kernel::bspline(2, d).unwrap(), Analyzer::Delta, m, 0).unwrap()
    }

    #[test]
    fn zero_function_gives_zero_grid() {
        let g = GridSpec::centered(1, 3.0, 64).unwrap();
        let q = apply(&hat_delta(1).with_level(3), &function::zero(1).unwrap(), &g).unwrap();
        assert_eq!(q.max_abs(), 0.0);
    }

    #[test]
    fn hat_interpolates_at_lattice_points() {
        let spec = hat_delta(1).with_level(2);
        let f = function::gaussian(1).unwrap();
        let pts: Vec<Vec<f64>> = (-8..=8).map(|i| vec![i as f64 / 4.0]).collect();
        let q = apply_at_points(&spec, &f, &pts).unwrap();
        for (p, v) in pts.iter().zip(&q) {
            assert!((v.re - f.eval(p)).abs() < 1e-15);
        }
    }

    #[test]
    fn box_average_reproduces_constants() {
        let one = TestFunction::builder("one", 1, |_| 1.0).decay_box(vec![(-1e6, 1e6)]).build().unwrap();
        let m = DilationMatrix::scalar(2.0, 1).unwrap();
        let spec =
            OperatorSpec::new(Kernel::bspline(1, 1).unwrap(), Analyzer::FunctionKernel(Kernel::bspline(1, 1).unwrap()), m, 3)
                .unwrap();
        let g = GridSpec::centered(1, 2.0, 257).unwrap();
        let q = apply(&spec, &one, &g).unwrap();
        assert!(q.values.iter().all(|v| (v.re - 1.0).abs() < 1e-12));
    }

    #[test]
    fn active_set_guard() {
        let spec = hat_delta(2).with_level(14);
        let g = GridSpec::centered(2, 100.0, 4).unwrap();
        assert!(matches!(apply(&spec, &function::gaussian(2).unwrap(), &g), Err(QpError::ActiveSetTooLarge { .. })));
    }

    #[test]
    fn rescaling_identity() {
        let f = function::gaussian(1).unwrap();
        let g = GridSpec::centered(1, 6.0, 512).unwrap();
        for j in [0, 1, 3] {
            let r = rescale_check(&hat_delta(1).with_level(j), &f, 2.0, &g).unwrap();
            assert!((r - 1.0).abs() < 1e-6, "j={j}: {r}");
        }
    }

    #[test]
    fn sinc_tail() {
        let k = Kernel::windowed_sinc(vec![0.5], 0.1, 200.0).unwrap();
        let b = sinc_tail_bound(&k);
        // 2/π² Σ_{k>200} k^{-2} ≈ 2/(π² · 200.5)
        assert!((b - 2.0 / (std::f64::consts::PI.powi(2) * 200.5)).abs() < 1e-8);
    }
}
