//! Target functions `f` with closed-form values, optional derivatives and
//! optional closed-form Fourier transforms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{QpError, Result};
use crate::jet::{self, Jet};
use crate::kernels::centered_bspline;
use crate::multiindex::{chain_rule_expansion, MultiIndex};
use crate::quadrature;

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type DerivFn = Arc<dyn Fn(&MultiIndex, &[f64]) -> f64 + Send + Sync>;
type FourierFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Highest derivative order provided by the jet-based built-ins.
const JET_ORDER: usize = 12;

/// Tolerance of the construction-time Fourier self-check.
const FOURIER_CHECK_TOL: f64 = 1e-5;

#[derive(Clone)]
pub struct TestFunction {
    name: String,
    dim: usize,
    eval: EvalFn,
    deriv: Option<(usize, DerivFn)>,
    fourier: Option<FourierFn>,
    decay_box: Vec<(f64, f64)>,
    band: Option<Vec<f64>>,
    smoothness: String,
    zero: bool,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("decay_box", &self.decay_box)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

pub struct TestFunctionBuilder {
    inner: TestFunction,
    check_fourier: bool,
    seed: u64,
}

impl TestFunctionBuilder {
    pub fn derivatives<D>(mut self, order: usize, d: D) -> Self
    where
        D: Fn(&MultiIndex, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.inner.deriv = Some((order, Arc::new(d)));
        self
    }

    pub fn fourier<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    {
        self.inner.fourier = Some(Arc::new(f));
        self
    }

    /// Box outside which `|f| < 1e-12`.
    pub fn decay_box(mut self, b: Vec<(f64, f64)>) -> Self {
        self.inner.decay_box = b;
        self
    }

    /// Declares `supp f̂ ⊂ Π_i [-b_i, b_i]`.
    pub fn band(mut self, b: Vec<f64>) -> Self {
        self.inner.band = Some(b);
        self
    }

    pub fn smoothness(mut self, tag: &str) -> Self {
        self.inner.smoothness = tag.to_string();
        self
    }

    /// Skips the Fourier self-check (slowly decaying functions).
    pub fn skip_fourier_check(mut self) -> Self {
        self.check_fourier = false;
        self
    }

    pub fn build(self) -> Result<TestFunction> {
        let f = self.inner;
        if f.decay_box.len() != f.dim {
            return Err(QpError::Dimension { expected: f.dim, got: f.decay_box.len() });
        }
        if let Some(b) = &f.band {
            if b.len() != f.dim {
                return Err(QpError::Dimension { expected: f.dim, got: b.len() });
            }
        }
        if self.check_fourier && f.fourier.is_some() {
            f.fourier_self_check(self.seed)?;
        }
        Ok(f)
    }
}

impl TestFunction {
    pub fn builder<F>(name: &str, dim: usize, eval: F) -> TestFunctionBuilder
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TestFunctionBuilder {
            inner: TestFunction {
                name: name.to_string(),
                dim,
                eval: Arc::new(eval),
                deriv: None,
                fourier: None,
                decay_box: vec![(-1.0, 1.0); dim],
                band: None,
                smoothness: String::from("unspecified"),
                zero: false,
            },
            check_fourier: true,
            seed: 0x5eed,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn decay_box(&self) -> &[(f64, f64)] {
        &self.decay_box
    }

    pub fn band(&self) -> Option<&[f64]> {
        self.band.as_deref()
    }

    pub fn smoothness(&self) -> &str {
        &self.smoothness
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn has_fourier(&self) -> bool {
        self.fourier.is_some()
    }

    /// Highest derivative order available, 0 if none.
    pub fn derivative_order(&self) -> usize {
        self.deriv.as_ref().map_or(0, |(n, _)| *n)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// `D^β f(x)`.
    pub fn derivative(&self, beta: &MultiIndex, x: &[f64]) -> Result<f64> {
        if beta.order() == 0 {
            return Ok(self.eval(x));
        }
        match &self.deriv {
            Some((n, d)) if beta.order() <= *n => Ok(d(beta, x)),
            _ => Err(QpError::MissingDerivatives {
                requested: beta.order(),
                available: self.derivative_order(),
            }),
        }
    }

    /// `f̂(ξ)`.
    pub fn fourier(&self, xi: &[f64]) -> Result<Complex64> {
        match &self.fourier {
            Some(f) => Ok(f(xi)),
            None => Err(QpError::Unsupported(format!("'{}' has no closed-form Fourier transform", self.name))),
        }
    }

    /// `x -> scale · f(B x)` with derivatives through the chain rule and
    /// `ĝ(ξ) = scale |det B|^{-1} f̂(B^{-T} ξ)`.
    pub fn linear_transform(&self, b: &DMatrix<f64>, scale: f64) -> Result<TestFunction> {
        let d = self.dim;
        if b.nrows() != d || b.ncols() != d {
            return Err(QpError::Dimension { expected: d, got: b.nrows() });
        }
        let inv = b
            .clone()
            .try_inverse()
            .ok_or_else(|| QpError::Singular("linear change of variables".into()))?;
        let det = b.determinant().abs();
        let apply = |m: &DMatrix<f64>, x: &[f64]| -> Vec<f64> {
            (m * DVector::from_column_slice(x)).iter().copied().collect()
        };

        let base = self.clone();
        let bm = b.clone();
        let mut out = TestFunction::builder(&format!("{}∘B", self.name), d, {
            let base = base.clone();
            let bm = bm.clone();
            move |x| scale * base.eval(&apply(&bm, x))
        })
        .smoothness(&self.smoothness)
        .skip_fourier_check();

        // support of g is B^{-1} applied to the decay box
        let corners = box_corners(&self.decay_box);
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for c in &corners {
            let y = apply(&inv, c);
            for a in 0..d {
                lo[a] = lo[a].min(y[a]);
                hi[a] = hi[a].max(y[a]);
            }
        }
        out = out.decay_box(lo.into_iter().zip(hi).collect());

        if let Some((n, _)) = &self.deriv {
            let base = base.clone();
            let bm = bm.clone();
            out = out.derivatives(*n, move |beta, x| {
                let y = apply(&bm, x);
                chain_rule_expansion(&bm, beta)
                    .iter()
                    .map(|(alpha, c)| c * base.derivative(alpha, &y).unwrap_or(f64::NAN))
                    .sum::<f64>()
                    * scale
            });
        }
        if self.fourier.is_some() {
            let base = base.clone();
            let inv_t = inv.transpose();
            out = out.fourier(move |xi| {
                base.fourier(&apply(&inv_t, xi)).unwrap_or_default() * (scale / det)
            });
        }
        let mut g = out.build()?;
        g.zero = self.zero;
        Ok(g)
    }

    /// Compares the closed-form `f̂` against quadrature over the decay box at 10 random `ξ ∈ [-2, 2]^d`.
    fn fourier_self_check(&self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo: Vec<f64> = self.decay_box.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = self.decay_box.iter().map(|b| b.1).collect();
        let panels: Vec<usize> = self.decay_box.iter().map(|b| ((b.1 - b.0) * 2.0).ceil().max(2.0) as usize).collect();
        for _ in 0..10 {
            let xi: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            let integrand = |x: &[f64]| {
                let dot: f64 = x.iter().zip(&xi).map(|(a, b)| a * b).sum();
                Complex64::from_polar(self.eval(x), -2.0 * PI * dot)
            };
            let numeric = quadrature::adaptive_box(&integrand, &lo, &hi, &panels, 1e-8, 8)?;
            let closed = self.fourier(&xi)?;
            if (numeric - closed).norm() > FOURIER_CHECK_TOL {
                return Err(QpError::Numeric(format!(
                    "Fourier self-check failed for '{}' at ξ = {xi:?}: quadrature {numeric} vs closed form {closed}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn box_corners(b: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let d = b.len();
    (0..1usize << d)
        .map(|mask| (0..d).map(|a| if mask >> a & 1 == 1 { b[a].1 } else { b[a].0 }).collect())
        .collect()
}

/// One-dimensional factor of a tensor-product test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `e^{-πx²}`
    Gaussian,
    /// `sin(2πx) e^{-πx²}`
    Sine,
    /// `sinc²(x)`, spectrum `max(0, 1-|ξ|)`
    Sinc2,
    /// `sinc⁸(x/a)`, spectrum `a B_8(aξ)` supported in `|ξ| <= 4/a`
    Sinc8(f64),
    /// `sin(πx)|sin(πx)| e^{-πx²/4}`, C¹ but not C²
    C1,
    /// `|sin(πx)| e^{-πx²/4}`, Lipschitz with kinks at the integers
    Kink,
    /// `exp(1 - 1/(1-x²))` on `(-1, 1)`
    Bump,
    Zero,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Gaussian => (-PI * x * x).exp(),
            Profile::Sine => (2.0 * PI * x).sin() * (-PI * x * x).exp(),
            Profile::Sinc2 => crate::kernels::sinc(x).powi(2),
            Profile::Sinc8(a) => crate::kernels::sinc(x / a).powi(8),
            Profile::C1 => {
                let s = (PI * x).sin();
                s * s.abs() * (-PI * x * x / 4.0).exp()
            }
            Profile::Kink => (PI * x).sin().abs() * (-PI * x * x / 4.0).exp(),
            Profile::Bump => {
                if x.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - x * x)).exp()
                } else {
                    0.0
                }
            }
            Profile::Zero => 0.0,
        }
    }

    fn jet(&self, x: f64, order: usize) -> Option<Jet> {
        match *self {
            Profile::Gaussian => Some(jet::gaussian_jet(PI, x, order)),
            Profile::Sine => Some(jet::sin_jet(2.0 * PI, x, order).mul(&jet::gaussian_jet(PI, x, order))),
            Profile::Sinc2 => Some(jet::sinc_jet(x, order).powi(2)),
            Profile::Sinc8(a) => Some(jet::sinc_jet(x / a, order).rescale(1.0 / a).powi(8)),
            Profile::Zero => Some(Jet::constant(Complex64::new(0.0, 0.0), order)),
            _ => None,
        }
    }

    fn fourier(&self, xi: f64) -> Option<Complex64> {
        let g = |v: f64| (-PI * v * v).exp();
        match *self {
            Profile::Gaussian => Some(Complex64::new(g(xi), 0.0)),
            Profile::Sine => Some(Complex64::new(0.0, -0.5 * (g(xi - 1.0) - g(xi + 1.0)))),
            Profile::Sinc2 => Some(Complex64::new((1.0 - xi.abs()).max(0.0), 0.0)),
            Profile::Sinc8(a) => Some(Complex64::new(a * centered_bspline(8, a * xi), 0.0)),
            Profile::Zero => Some(Complex64::new(0.0, 0.0)),
            _ => None,
        }
    }

    /// Half-width of the interval outside which `|f| < 1e-12`.
    fn decay_radius(&self) -> f64 {
        match *self {
            Profile::Gaussian | Profile::Sine => 6.0,
            Profile::Sinc2 => 1000.0,
            Profile::Sinc8(a) => 10.0 * a,
            Profile::C1 | Profile::Kink => 11.0,
            Profile::Bump => 1.0,
            Profile::Zero => 1.0,
        }
    }

    fn band(&self) -> Option<f64> {
        match *self {
            Profile::Sinc2 => Some(1.0),
            Profile::Sinc8(a) => Some(4.0 / a),
            _ => None,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Profile::Gaussian | Profile::Sine | Profile::Sinc2 | Profile::Sinc8(_) => "analytic",
            Profile::C1 => "C1",
            Profile::Kink => "Lipschitz",
            Profile::Bump => "C-infinity, compact support",
            Profile::Zero => "zero",
        }
    }
}

/// Tensor product `Π_i p_i(x_i)`.
pub fn tensor(name: &str, profiles: &[Profile]) -> Result<TestFunction> {
    let d = profiles.len();
    if d == 0 {
        return Err(QpError::Config("tensor function needs at least one axis".into()));
    }
    let ps: Vec<Profile> = profiles.to_vec();
    let eval_ps = ps.clone();
    let mut b = TestFunction::builder(name, d, move |x| {
        let mut prod = 1.0;
        for (p, &v) in eval_ps.iter().zip(x) {
            prod *= p.eval(v);
            if prod == 0.0 {
                break;
            }
        }
        prod
    })
    .decay_box(ps.iter().map(|p| (-p.decay_radius(), p.decay_radius())).collect());

    let tags: Vec<&str> = ps.iter().map(|p| p.tag()).collect();
    let tag = if tags.iter().all(|t| *t == tags[0]) { tags[0].to_string() } else { tags.join(" x ") };
    b = b.smoothness(&tag);

    if ps.iter().all(|p| p.jet(0.0, 0).is_some()) {
        let dp = ps.clone();
        b = b.derivatives(JET_ORDER, move |beta, x| {
            let mut prod = Complex64::new(1.0, 0.0);
            for a in 0..dp.len() {
                let j = dp[a].jet(x[a], beta.0[a]).expect("jet availability checked");
                prod *= j.derivative(beta.0[a]);
            }
            prod.re
        });
    }
    if ps.iter().all(|p| p.fourier(0.0).is_some()) {
        let fp = ps.clone();
        b = b.fourier(move |xi| {
            fp.iter().zip(xi).fold(Complex64::new(1.0, 0.0), |acc, (p, &v)| acc * p.fourier(v).expect("checked"))
        });
    }
    if d > 1 {
        // the transform factorizes, so checking each distinct factor in one dimension suffices
        let mut seen: Vec<Profile> = Vec::new();
        for p in &ps {
            if !seen.contains(p) {
                seen.push(*p);
                tensor(name, &[*p])?;
            }
        }
        b = b.skip_fourier_check();
    }
    if ps.iter().any(|p| matches!(p, Profile::Sinc2)) {
        b = b.skip_fourier_check();
    }
    if ps.iter().all(|p| p.band().is_some()) {
        b = b.band(ps.iter().map(|p| p.band().expect("checked")).collect());
    }
    let mut f = b.build()?;
    f.zero = ps.iter().any(|p| matches!(p, Profile::Zero));
    Ok(f)
}

pub fn gaussian(dim: usize) -> Result<TestFunction> {
    tensor("gaussian", &vec![Profile::Gaussian; dim])
}

pub fn bump(dim: usize) -> Result<TestFunction> {
    tensor("bump", &vec![Profile::Bump; dim])
}

pub fn tensor_sine(dim: usize) -> Result<TestFunction> {
    tensor("tensor_sine", &vec![Profile::Sine; dim])
}

/// `Π sinc²(x_i)`, spectrum supported in `[-1, 1]^d`; decays only like `|x|^{-2}`.
pub fn bl_sinc2(dim: usize) -> Result<TestFunction> {
    tensor("bl_sinc2", &vec![Profile::Sinc2; dim])
}

/// `Π sinc⁸(x_i/4)`, spectrum supported in `[-1, 1]^d` with fast spatial decay.
pub fn bl_sinc8(dim: usize) -> Result<TestFunction> {
    tensor("bl_sinc8", &vec![Profile::Sinc8(4.0); dim])
}

/// `Π sinc⁸(x_i/8)`, spectrum supported in `[-1/2, 1/2]^d`.
pub fn bl_band_half(dim: usize) -> Result<TestFunction> {
    tensor("bl_band_half", &vec![Profile::Sinc8(8.0); dim])
}

/// Gaussian along the first axis, C¹ profile along the last.
pub fn aniso(dim: usize) -> Result<TestFunction> {
    let mut ps = vec![Profile::Gaussian; dim];
    ps[dim.max(1) - 1] = Profile::C1;
    tensor("aniso", &ps)
}

pub fn zero(dim: usize) -> Result<TestFunction> {
    tensor("zero", &vec![Profile::Zero; dim])
}

/// Built-in function by name.
pub fn by_name(name: &str, dim: usize) -> Result<TestFunction> {
    match name {
        "gaussian" => gaussian(dim),
        "bump" => bump(dim),
        "tensor_sine" => tensor_sine(dim),
        "bl_sinc2" => bl_sinc2(dim),
        "bl_sinc8" => bl_sinc8(dim),
        "bl_band_half" => bl_band_half(dim),
        "aniso" => aniso(dim),
        "zero" => zero(dim),
        other => Err(QpError::Config(format!("unknown test function '{other}'"))),
    }
}

pub const BUILTIN_NAMES: &[&str] =
    &["gaussian", "bump", "tensor_sine", "bl_sinc2", "bl_sinc8", "bl_band_half", "aniso", "zero"];
