//! Synthesis kernels `φ`: spatial evaluation, closed-form Fourier transforms
//! `φ̂(ξ) = ∫ φ(x) e^{-2πi(x,ξ)} dx`, Fourier derivatives and the `ℒ_p` class norm.
//!
//! B-splines are centered, `B_n` supported on `[-n/2, n/2]`, so that
//! `B̂_n(ξ) = (sin πξ / πξ)^n` is real and even. A tensor kernel is a finite
//! combination `φ(x) = Σ c_s Π_i B_{n_i}(x_i − s_i)` over integer shifts `s`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{QpError, Result};
use crate::jet::{self, Jet};
use crate::multiindex::MultiIndex;
use crate::numdiff;

/// Highest order `s` the order certificates are expected to probe.
pub const MAX_CERTIFIED_ORDER: usize = 6;

type SpatialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type FourierFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
type FourierDerivFn = Arc<dyn Fn(&MultiIndex, &[f64]) -> Complex64 + Send + Sync>;

/// A user-supplied kernel.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    pub spatial: SpatialFn,
    pub fourier: Option<FourierFn>,
    pub fourier_deriv: Option<FourierDerivFn>,
    /// Radius outside which the kernel is treated as zero; may be infinite.
    pub support_radius: f64,
    /// Whether `|φ(x)| <= C(1+|x|)^{-d-ε}` is known to hold.
    pub decay_certified: bool,
    pub fourier_smoothness_order: usize,
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("support_radius", &self.support_radius)
            .field("has_fourier", &self.fourier.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum KernelKind {
    BSplineTensor {
        orders: Vec<usize>,
        /// `(integer shift, coefficient)` pairs.
        terms: Vec<(Vec<i64>, f64)>,
    },
    WindowedSinc {
        /// Per-axis half-width `b` of the passband; `φ̂ ≈ χ_{[-b,b]}`.
        band: Vec<f64>,
        /// Raised-cosine taper occupying this fraction of the radius.
        rolloff: f64,
        truncation_radius: f64,
    },
    Custom(CustomKernel),
}

#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    dim: usize,
    /// Extra overall factor (only non-trivial for sinc and custom kernels).
    gain: f64,
}

impl Kernel {
    /// Single unshifted centered B-spline of the given order on every axis.
    pub fn bspline(order: usize, dim: usize) -> Result<Self> {
        Self::bspline_tensor(vec![order; dim], vec![(vec![0; dim], 1.0)])
    }

    pub fn bspline_tensor(orders: Vec<usize>, terms: Vec<(Vec<i64>, f64)>) -> Result<Self> {
        let dim = orders.len();
        if dim == 0 {
            return Err(QpError::Config("B-spline kernel needs at least one axis".into()));
        }
        if orders.iter().any(|&n| n == 0) {
            return Err(QpError::Config("B-spline orders must be positive".into()));
        }
        if terms.is_empty() {
            return Err(QpError::Config("B-spline kernel needs at least one term".into()));
        }
        if let Some((s, _)) = terms.iter().find(|(s, _)| s.len() != dim) {
            return Err(QpError::Dimension { expected: dim, got: s.len() });
        }
        Ok(Kernel { kind: KernelKind::BSplineTensor { orders, terms }, dim, gain: 1.0 })
    }

    /// Windowed sinc `Π_i w(x_i) sin(2π b_i x_i)/(π x_i)`, exactly zero for `|x_i| >= radius`.
    pub fn windowed_sinc(band: Vec<f64>, rolloff: f64, radius: f64) -> Result<Self> {
        let dim = band.len();
        if dim == 0 || band.iter().any(|&b| !(b > 0.0)) {
            return Err(QpError::Config("sinc band half-widths must be positive".into()));
        }
        if !(rolloff > 0.0 && rolloff <= 1.0) {
            return Err(QpError::Config(format!("sinc rolloff {rolloff} must lie in (0, 1]")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(QpError::Config("sinc truncation radius must be positive and finite".into()));
        }
        Ok(Kernel {
            kind: KernelKind::WindowedSinc { band, rolloff, truncation_radius: radius },
            dim,
            gain: 1.0,
        })
    }

    pub fn custom(dim: usize, custom: CustomKernel) -> Self {
        Kernel { kind: KernelKind::Custom(custom), dim, gain: 1.0 }
    }

    /// Normalized Gaussian `(2πw²)^{-d/2} e^{-|x|²/(2w²)}` with `∫ = 1`,
    /// treated as zero beyond `12 w`.
    pub fn gaussian(width: f64, dim: usize) -> Self {
        let norm = (2.0 * PI * width * width).powf(-(dim as f64) / 2.0);
        let w2 = width * width;
        Kernel::custom(
            dim,
            CustomKernel {
                name: format!("gaussian(width={width})"),
                spatial: Arc::new(move |x| norm * (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * w2)).exp()),
                fourier: Some(Arc::new(move |xi| {
                    let r2: f64 = xi.iter().map(|v| v * v).sum();
                    Complex64::new((-2.0 * PI * PI * w2 * r2).exp(), 0.0)
                })),
                fourier_deriv: None,
                support_radius: 12.0 * width,
                decay_certified: true,
                fourier_smoothness_order: MAX_CERTIFIED_ORDER + dim + 1,
            },
        )
    }

    /// The kernel multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Kernel {
        let mut out = self.clone();
        match &mut out.kind {
            KernelKind::BSplineTensor { terms, .. } => {
                for (_, coef) in terms.iter_mut() {
                    *coef *= c;
                }
            }
            _ => out.gain *= c,
        }
        out
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_bspline(&self) -> bool {
        matches!(self.kind, KernelKind::BSplineTensor { .. })
    }

    /// Short human-readable description.
    pub fn label(&self) -> String {
        let base = match &self.kind {
            KernelKind::BSplineTensor { orders, terms } => {
                if terms.len() == 1 && terms[0].0.iter().all(|&s| s == 0) && terms[0].1 == 1.0 {
                    format!("bspline{orders:?}")
                } else {
                    format!("bspline{orders:?} x {} terms", terms.len())
                }
            }
            KernelKind::WindowedSinc { band, rolloff, truncation_radius } => {
                format!("sinc(band={band:?}, rolloff={rolloff}, radius={truncation_radius})")
            }
            KernelKind::Custom(c) => c.name.clone(),
        };
        if self.gain == 1.0 {
            base
        } else {
            format!("{} * {base}", self.gain)
        }
    }

    /// Per-axis `[lo, hi]` outside which the kernel vanishes.
    pub fn support_box(&self) -> Vec<(f64, f64)> {
        match &self.kind {
            KernelKind::BSplineTensor { orders, terms } => (0..self.dim)
                .map(|a| {
                    let half = orders[a] as f64 / 2.0;
                    let lo = terms.iter().map(|(s, _)| s[a]).min().unwrap_or(0) as f64;
                    let hi = terms.iter().map(|(s, _)| s[a]).max().unwrap_or(0) as f64;
                    (lo - half, hi + half)
                })
                .collect(),
            KernelKind::WindowedSinc { truncation_radius, .. } => {
                vec![(-truncation_radius, *truncation_radius); self.dim]
            }
            KernelKind::Custom(c) => vec![(-c.support_radius, c.support_radius); self.dim],
        }
    }

    /// `max_i max(|lo_i|, |hi_i|)` over the support box; for B-splines
    /// `max_i (n_i/2 + max|shift_i|)`.
    pub fn support_radius(&self) -> f64 {
        self.support_box().iter().fold(0.0, |r, &(lo, hi)| r.max(lo.abs()).max(hi.abs()))
    }

    /// Largest `s + d + 1` for which `D^β φ̂` is available.
    pub fn fourier_smoothness_order(&self) -> usize {
        match &self.kind {
            KernelKind::Custom(c) => c.fourier_smoothness_order,
            _ => MAX_CERTIFIED_ORDER + self.dim + 1,
        }
    }

    /// Panels per axis that align quadrature cells with the kernel's breakpoints.
    pub(crate) fn panel_hint(&self) -> Vec<usize> {
        match &self.kind {
            KernelKind::BSplineTensor { .. } => self
                .support_box()
                .iter()
                .map(|&(lo, hi)| ((hi - lo).round() as usize).max(1))
                .collect(),
            KernelKind::WindowedSinc { truncation_radius, .. } => {
                vec![(2.0 * truncation_radius).ceil() as usize; self.dim]
            }
            KernelKind::Custom(_) => vec![16; self.dim],
        }
    }

    /// `φ(x)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.kind {
            KernelKind::BSplineTensor { orders, terms } => {
                let mut acc = 0.0;
                for (shift, c) in terms {
                    let mut prod = *c;
                    for a in 0..self.dim {
                        prod *= centered_bspline(orders[a], x[a] - shift[a] as f64);
                        if prod == 0.0 {
                            break;
                        }
                    }
                    acc += prod;
                }
                acc
            }
            KernelKind::WindowedSinc { band, rolloff, truncation_radius } => {
                let mut prod = self.gain;
                for a in 0..self.dim {
                    prod *= windowed_sinc_1d(x[a], band[a], *rolloff, *truncation_radius);
                    if prod == 0.0 {
                        break;
                    }
                }
                prod
            }
            KernelKind::Custom(c) => {
                if x.iter().any(|v| v.abs() > c.support_radius) {
                    0.0
                } else {
                    self.gain * (c.spatial)(x)
                }
            }
        }
    }

    /// `φ̂(ξ)`.
    pub fn eval_fourier(&self, xi: &[f64]) -> Result<Complex64> {
        debug_assert_eq!(xi.len(), self.dim);
        match &self.kind {
            KernelKind::BSplineTensor { orders, terms } => {
                let mut envelope = 1.0;
                for a in 0..self.dim {
                    envelope *= sinc(xi[a]).powi(orders[a] as i32);
                }
                let mut phase = Complex64::new(0.0, 0.0);
                for (shift, c) in terms {
                    let dot: f64 = shift.iter().zip(xi).map(|(&s, &x)| s as f64 * x).sum();
                    phase += Complex64::from_polar(*c, -2.0 * PI * dot);
                }
                Ok(phase * envelope)
            }
            KernelKind::WindowedSinc { band, rolloff, truncation_radius } => {
                let mut prod = self.gain;
                for a in 0..self.dim {
                    prod *= windowed_sinc_fourier_1d(xi[a], band[a], *rolloff, *truncation_radius);
                }
                Ok(Complex64::new(prod, 0.0))
            }
            KernelKind::Custom(c) => match &c.fourier {
                Some(f) => Ok(f(xi) * self.gain),
                None => Err(QpError::Unsupported(format!(
                    "kernel '{}' has no Fourier evaluator",
                    c.name
                ))),
            },
        }
    }

    /// `D^β φ̂(ξ)`. Exact Taylor jets for B-splines, moment integrals for the
    /// windowed sinc, finite differences for custom kernels without analytic derivatives.
    pub fn eval_fourier_deriv(&self, beta: &MultiIndex, xi: &[f64]) -> Result<Complex64> {
        if beta.dim() != self.dim {
            return Err(QpError::Dimension { expected: self.dim, got: beta.dim() });
        }
        let available = self.fourier_smoothness_order();
        if beta.order() > available {
            return Err(QpError::OrderTooHigh { requested: beta.order(), available });
        }
        match &self.kind {
            KernelKind::BSplineTensor { orders, terms } => {
                let envelopes: Vec<Jet> = (0..self.dim)
                    .map(|a| jet::sinc_jet(xi[a], beta.0[a]).powi(orders[a]))
                    .collect();
                let mut acc = Complex64::new(0.0, 0.0);
                for (shift, c) in terms {
                    let mut prod = Complex64::new(*c, 0.0);
                    for a in 0..self.dim {
                        let axis = envelopes[a].mul(&jet::phase_jet(shift[a] as f64, xi[a], beta.0[a]));
                        prod *= axis.derivative(beta.0[a]);
                    }
                    acc += prod;
                }
                Ok(acc)
            }
            KernelKind::WindowedSinc { band, rolloff, truncation_radius } => {
                let mut prod = Complex64::new(self.gain, 0.0);
                for a in 0..self.dim {
                    prod *= windowed_sinc_fourier_deriv_1d(
                        beta.0[a],
                        xi[a],
                        band[a],
                        *rolloff,
                        *truncation_radius,
                    );
                }
                Ok(prod)
            }
            KernelKind::Custom(c) => {
                if let Some(df) = &c.fourier_deriv {
                    return Ok(df(beta, xi) * self.gain);
                }
                // surface the unsupported-operation error before differencing
                self.eval_fourier(xi)?;
                Ok(numdiff::derivative(|p| self.eval_fourier(p).unwrap_or_default(), beta, xi))
            }
        }
    }

    /// Numerical `‖φ‖_{ℒ_p} = ‖Σ_k |φ(·+k)|‖_{L_p(T^d)}` on a midpoint grid of
    /// `box_resolution` points per axis over the unit cell.
    pub fn lp_class_norm(&self, p: f64, box_resolution: usize) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(QpError::Config(format!("p = {p} must be in [1, inf]")));
        }
        if box_resolution == 0 {
            return Err(QpError::Config("box resolution must be positive".into()));
        }
        let radius = self.support_radius();
        if !radius.is_finite() {
            let certified = matches!(&self.kind, KernelKind::Custom(c) if c.decay_certified);
            if !certified {
                return Err(QpError::Unsupported(
                    "infinite support without a decay certificate".into(),
                ));
            }
            return Err(QpError::Unsupported(
                "infinite-support kernels need a finite effective radius".into(),
            ));
        }
        let d = self.dim;
        let reach = radius.ceil() as i64 + 1;
        let shifts = lattice_box(d, -reach, reach);
        let cells = box_resolution.pow(d as u32);
        let mut values = Vec::with_capacity(cells);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        for cell in 0..cells {
            let mut rem = cell;
            for a in (0..d).rev() {
                x[a] = ((rem % box_resolution) as f64 + 0.5) / box_resolution as f64;
                rem /= box_resolution;
            }
            let mut sum = 0.0;
            for k in &shifts {
                for a in 0..d {
                    y[a] = x[a] + k[a] as f64;
                }
                sum += self.eval(&y).abs();
            }
            values.push(sum);
        }
        if p.is_infinite() {
            Ok(values.iter().fold(0.0, |m, &v| m.max(v)))
        } else {
            let mean = values.iter().map(|v| v.powf(p)).sum::<f64>() / cells as f64;
            Ok(mean.powf(1.0 / p))
        }
    }
}

/// All integer points of `[lo, hi]^d`, last axis fastest.
pub(crate) fn lattice_box(d: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![lo; d];
    if hi < lo {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            cur[a] += 1;
            if cur[a] <= hi {
                break;
            }
            cur[a] = lo;
        }
    }
}

/// `sin(πξ)/(πξ)`, with the series `1 − u²/6 + u⁴/120` for `|πξ| < 1e-4`.
pub fn sinc(xi: f64) -> f64 {
    let u = PI * xi;
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// Cardinal B-spline `M_n` on `[0, n]` by the Cox–de Boor recursion on integer knots.
///
/// `M_1` takes the value 1/2 at its jumps, so the centered box is even.
pub fn cardinal_bspline(n: usize, y: f64) -> f64 {
    if n == 1 && (y == 0.0 || y == 1.0) {
        return 0.5;
    }
    if !(y >= 0.0 && y < n as f64) {
        return 0.0;
    }
    // N_{i,1} indicator of [i, i+1)
    let cell = y.floor() as usize;
    let mut basis = vec![0.0; n];
    basis[cell] = 1.0;
    for k in 2..=n {
        for i in 0..=(n - k) {
            let left = (y - i as f64) * basis[i];
            let right = (i as f64 + k as f64 - y) * basis[i + 1];
            basis[i] = (left + right) / (k - 1) as f64;
        }
    }
    basis[0]
}

/// Centered B-spline `B_n(x) = M_n(x + n/2)`.
pub fn centered_bspline(n: usize, x: f64) -> f64 {
    cardinal_bspline(n, x + n as f64 / 2.0)
}

fn raised_cosine_window(x: f64, rolloff: f64, radius: f64) -> f64 {
    let ax = x.abs();
    let flat = (1.0 - rolloff) * radius;
    if ax <= flat {
        1.0
    } else if ax >= radius {
        0.0
    } else {
        0.5 * (1.0 + (PI * (ax - flat) / (radius - flat)).cos())
    }
}

fn windowed_sinc_1d(x: f64, band: f64, rolloff: f64, radius: f64) -> f64 {
    if x.abs() >= radius {
        return 0.0;
    }
    2.0 * band * sinc(2.0 * band * x) * raised_cosine_window(x, rolloff, radius)
}

/// `2 ∫_0^R w(x) (2b sinc(2bx)) cos(2πxξ) dx` by composite Gauss–Legendre on quarter-unit panels.
fn windowed_sinc_fourier_1d(xi: f64, band: f64, rolloff: f64, radius: f64) -> f64 {
    let panels = ((radius * 4.0).ceil() as usize).max(1);
    let rule = crate::quadrature::composite_rule(0.0, radius, panels);
    2.0 * rule
        .iter()
        .map(|&(x, w)| w * windowed_sinc_1d(x, band, rolloff, radius) * (2.0 * PI * x * xi).cos())
        .sum::<f64>()
}

/// `∫ w(x) (2b sinc(2bx)) (-2πix)^k e^{-2πixξ} dx` over `[-R, R]`.
fn windowed_sinc_fourier_deriv_1d(k: usize, xi: f64, band: f64, rolloff: f64, radius: f64) -> Complex64 {
    if k == 0 {
        return Complex64::new(windowed_sinc_fourier_1d(xi, band, rolloff, radius), 0.0);
    }
    let panels = ((radius * 8.0).ceil() as usize).max(1);
    let rule = crate::quadrature::composite_rule(-radius, radius, panels);
    let ik = Complex64::new(0.0, -2.0 * PI).powi(k as i32);
    rule.iter()
        .map(|&(x, w)| {
            let v = w * windowed_sinc_1d(x, band, rolloff, radius) * x.powi(k as i32);
            Complex64::from_polar(v, -2.0 * PI * x * xi)
        })
        .sum::<Complex64>()
        * ik
}
