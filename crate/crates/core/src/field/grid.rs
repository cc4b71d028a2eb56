//! Uniform tensor grids, trapezoid `L_p` norms and DFT band truncation.
//!
//! Grids are closed: `shape[a]` points span `[lo_a, hi_a]` including both
//! endpoints, with step `h_a = (hi_a − lo_a)/(shape[a] − 1)`. Values are stored
//! row-major (last axis fastest). The DFT of a grid with `N` points and step
//! `h` assigns bin `n` (signed, `-N/2 <= n < N/2`) the frequency `n/(N h)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{QpError, Result};
use crate::field::function::TestFunction;
use crate::multiindex::MultiIndex;

/// Memory guard on the number of grid points.
pub const MAX_GRID_POINTS: usize = 1 << 26;

/// Box and resolution of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridSpec {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let g = GridSpec { lo, hi, shape };
        g.validate()?;
        Ok(g)
    }

    /// `[-half, half]^d` with `n` points per axis.
    pub fn centered(dim: usize, half: f64, n: usize) -> Result<Self> {
        Self::new(vec![-half; dim], vec![half; dim], vec![n; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lo.len();
        if d == 0 || self.hi.len() != d || self.shape.len() != d {
            return Err(QpError::Config("grid lo, hi and shape must have equal nonzero length".into()));
        }
        for a in 0..d {
            if self.shape[a] < 2 {
                return Err(QpError::Config("grid shape entries must be at least 2".into()));
            }
            if !(self.hi[a] > self.lo[a]) {
                return Err(QpError::Config(format!("grid axis {a} has hi <= lo")));
            }
        }
        let total = self.shape.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        match total {
            Some(t) if t <= MAX_GRID_POINTS => Ok(()),
            _ => Err(QpError::MemoryGuard {
                points: total.unwrap_or(usize::MAX),
                limit: MAX_GRID_POINTS,
            }),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn step(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| (self.hi[a] - self.lo[a]) / (self.shape[a] - 1) as f64).collect()
    }

    /// Coordinates of the point with flat index `i`.
    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.point_into(i, &mut x);
        x
    }

    pub fn point_into(&self, mut i: usize, x: &mut [f64]) {
        let step = self.step();
        for a in (0..self.dim()).rev() {
            let n = self.shape[a];
            let idx = i % n;
            i /= n;
            x[a] = if idx + 1 == n { self.hi[a] } else { self.lo[a] + step[a] * idx as f64 };
        }
    }

    /// Trapezoid weight of the point with flat index `i`.
    pub fn weight(&self, mut i: usize) -> f64 {
        let step = self.step();
        let mut w = 1.0;
        for a in (0..self.dim()).rev() {
            let n = self.shape[a];
            let idx = i % n;
            i /= n;
            w *= if idx == 0 || idx + 1 == n { 0.5 * step[a] } else { step[a] };
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub spec: GridSpec,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn from_fn<F>(spec: &GridSpec, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Complex64 + Sync,
    {
        spec.validate()?;
        let values = (0..spec.len())
            .into_par_iter()
            .map_init(|| vec![0.0; spec.dim()], |x, i| {
                spec.point_into(i, x);
                f(x)
            })
            .collect();
        Ok(GridFunction { spec: spec.clone(), values })
    }

    pub fn zeros(spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        Ok(GridFunction { spec: spec.clone(), values: vec![Complex64::new(0.0, 0.0); spec.len()] })
    }

    /// Pointwise `self − other` on a shared grid.
    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        if self.spec != other.spec {
            return Err(QpError::Config("grid mismatch".into()));
        }
        Ok(GridFunction {
            spec: self.spec.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Samples `f` on the grid.
pub fn sample(f: &TestFunction, spec: &GridSpec) -> Result<GridFunction> {
    if spec.dim() != f.dim() {
        return Err(QpError::Dimension { expected: f.dim(), got: spec.dim() });
    }
    GridFunction::from_fn(spec, |x| Complex64::new(f.eval(x), 0.0))
}

/// Composite trapezoid `‖g‖_p` for `p < ∞`; grid maximum for `p = ∞`.
pub fn lp_norm(g: &GridFunction, p: f64) -> f64 {
    if p.is_infinite() {
        return g.max_abs();
    }
    let terms: Vec<f64> = (0..g.values.len())
        .into_par_iter()
        .map(|i| g.spec.weight(i) * g.values[i].norm().powf(p))
        .collect();
    terms.iter().sum::<f64>().powf(1.0 / p)
}

/// In-place multi-dimensional DFT (unnormalized forward, `1/N` on inverse).
fn fft_nd(values: &mut [Complex64], shape: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let d = shape.len();
    let total: usize = shape.iter().product();
    for a in 0..d {
        let n = shape[a];
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride: usize = shape[a + 1..].iter().product();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for base in 0..total {
            // first element of each line along axis a has index_a == 0
            if (base / stride) % n != 0 {
                continue;
            }
            for i in 0..n {
                line[i] = values[base + i * stride];
            }
            fft.process(&mut line);
            for i in 0..n {
                values[base + i * stride] = line[i];
            }
        }
        if inverse {
            let s = 1.0 / n as f64;
            values.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Signed frequency of DFT bin `i` on an axis with `n` points and step `h`.
fn bin_frequency(i: usize, n: usize, h: f64) -> f64 {
    let signed = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
    signed / (n as f64 * h)
}

/// Cutoff profile on `η = A^{-1}ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    /// `χ_{T^d}(η)`, `T = [-1/2, 1/2]`.
    Sharp,
    /// Per axis `1` for `|η_i| <= 1/2`, raised-cosine decay to `0` at `|η_i| = 1`.
    RaisedCosine,
}

impl Cutoff {
    fn weight(self, eta: &[f64]) -> f64 {
        match self {
            Cutoff::Sharp => {
                if eta.iter().all(|v| v.abs() <= 0.5 + 1e-12) {
                    1.0
                } else {
                    0.0
                }
            }
            Cutoff::RaisedCosine => eta
                .iter()
                .map(|v| {
                    let a = v.abs();
                    if a <= 0.5 {
                        1.0
                    } else if a >= 1.0 {
                        0.0
                    } else {
                        0.5 * (1.0 + (std::f64::consts::PI * (a - 0.5) / 0.5).cos())
                    }
                })
                .product(),
        }
    }
}

/// Multiplies the DFT of `g` by `m(ξ)` and transforms back.
fn fourier_multiply<M>(g: &GridFunction, m: M) -> GridFunction
where
    M: Fn(&[f64]) -> Complex64,
{
    let shape = &g.spec.shape;
    let step = g.spec.step();
    let d = shape.len();
    let mut values = g.values.clone();
    fft_nd(&mut values, shape, false);
    let mut xi = vec![0.0; d];
    for (flat, v) in values.iter_mut().enumerate() {
        let mut rem = flat;
        for a in (0..d).rev() {
            xi[a] = bin_frequency(rem % shape[a], shape[a], step[a]);
            rem /= shape[a];
        }
        *v *= m(&xi);
    }
    fft_nd(&mut values, shape, true);
    GridFunction { spec: g.spec.clone(), values }
}

/// Keeps the DFT bins with `A^{-1}ξ` inside the cutoff.
pub fn fourier_truncate_with(g: &GridFunction, a: &DMatrix<f64>, cutoff: Cutoff) -> Result<GridFunction> {
    let d = g.spec.dim();
    if a.nrows() != d || a.ncols() != d {
        return Err(QpError::Dimension { expected: d, got: a.nrows() });
    }
    let inv = a.clone().try_inverse().ok_or_else(|| QpError::Singular("truncation matrix".into()))?;
    Ok(fourier_multiply(g, |xi| {
        let eta = &inv * DVector::from_column_slice(xi);
        Complex64::new(cutoff.weight(eta.as_slice()), 0.0)
    }))
}

/// `S_A g`: the sharp projection onto `A T^d`.
pub fn fourier_truncate(g: &GridFunction, a: &DMatrix<f64>) -> Result<GridFunction> {
    fourier_truncate_with(g, a, Cutoff::Sharp)
}

/// `D^β g` by multiplying the DFT with `(2πiξ)^β`.
pub fn dft_derivative(g: &GridFunction, beta: &MultiIndex) -> GridFunction {
    let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    fourier_multiply(g, |xi| {
        beta.0.iter().zip(xi).fold(Complex64::new(1.0, 0.0), |acc, (&b, &x)| acc * (two_pi_i * x).powi(b as i32))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sample_line() {
        let spec = GridSpec::new(vec![0.0], vec![1.0], vec![5]).unwrap();
        let f = TestFunction::builder("x", 1, |x| x[0]).build().unwrap();
        let g = sample(&f, &spec).unwrap();
        let v: Vec<f64> = g.values.iter().map(|c| c.re).collect();
        assert_eq!(v, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(lp_norm(&g, f64::INFINITY), 1.0);
    }

    #[test]
    fn constant_norm() {
        let spec = GridSpec::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![8, 16]).unwrap();
        let g = GridFunction::from_fn(&spec, |_| Complex64::new(1.0, 0.0)).unwrap();
        assert!((lp_norm(&g, 1.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_l2() {
        let spec = GridSpec::centered(1, 8.0, 1 << 10).unwrap();
        let g = GridFunction::from_fn(&spec, |x| Complex64::new((-PI * x[0] * x[0]).exp(), 0.0)).unwrap();
        assert!(g.values[0].norm() < 1e-12);
        assert!((lp_norm(&g, 2.0) - 2f64.powf(-0.25)).abs() < 1e-12);
    }

    #[test]
    fn memory_guard() {
        assert!(matches!(GridSpec::centered(3, 1.0, 1024), Err(QpError::MemoryGuard { .. })));
    }

    #[test]
    fn truncation_of_exponentials() {
        let spec = GridSpec::centered(1, 4.0, 256).unwrap();
        let h = spec.step()[0];
        let bin = |n: f64| n / (256.0 * h);
        let inside = bin(10.0);
        let outside = bin(40.0);
        let a = DMatrix::from_element(1, 1, 4.0);
        for (freq, keep) in [(inside, true), (outside, false)] {
            // grid-periodic exponential: exactly one DFT bin
            let g = GridFunction {
                spec: spec.clone(),
                values: (0..256).map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 * (freq * h))).collect(),
            };
            let t = fourier_truncate(&g, &a).unwrap();
            let expect = if keep { g.clone() } else { GridFunction::zeros(&spec).unwrap() };
            let err = t.sub(&expect).unwrap().max_abs();
            assert!(err < 1e-10, "freq {freq}: {err}");
        }
    }

    #[test]
    fn derivative_of_gaussian() {
        let spec = GridSpec::centered(1, 8.0, 512).unwrap();
        let g = GridFunction::from_fn(&spec, |x| Complex64::new((-PI * x[0] * x[0]).exp(), 0.0)).unwrap();
        let d = dft_derivative(&g, &MultiIndex(vec![1]));
        for i in (100..400).step_by(37) {
            let x = spec.point(i)[0];
            let exact = -2.0 * PI * x * (-PI * x * x).exp();
            assert!((d.values[i].re - exact).abs() < 1e-9);
        }
    }
}
