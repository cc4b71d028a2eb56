//! Level sweeps: errors, moduli and tail terms per level, fitted orders and verdicts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analyzers::Analyzer;
use crate::conditions::{self, OrderCertificate};
use crate::dilation::DilationMatrix;
use crate::error::{QpError, Result};
use crate::field::function::{self, Profile, TestFunction};
use crate::field::grid::{self, GridSpec};
use crate::field::smoothness::{self, ModulusOptions};
use crate::fit::least_squares_slope;
use crate::kernels::{Kernel, MAX_CERTIFIED_ORDER};
use crate::operator::{self, OperatorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Largest admissible `max ratio / min ratio`.
    pub ratio_spread: f64,
    /// Largest admissible `|slope − target|`.
    pub slope_tolerance: f64,
    /// First level used by the slope fit.
    pub min_fit_level: i32,
    /// `δ` in the tail term `E_{δM^ν}`.
    pub delta: f64,
    /// Tail sums run to `ν = max level + extra_tail_levels`.
    pub extra_tail_levels: i32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { ratio_spread: 20.0, slope_tolerance: 0.25, min_fit_level: 2, delta: 0.25, extra_tail_levels: 4 }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub kernel: Kernel,
    pub analyzer: Analyzer,
    pub dilation: DilationMatrix,
    pub function: TestFunction,
    pub p: f64,
    pub levels: Vec<i32>,
    pub grid: GridSpec,
    pub seed: u64,
    /// Order `s` of the modulus; the certified effective order when unset.
    pub modulus_order: Option<usize>,
    pub lattice_radius: i64,
    pub thresholds: Thresholds,
}

impl Experiment {
    pub fn new(
        kernel: Kernel,
        analyzer: Analyzer,
        dilation: DilationMatrix,
        function: TestFunction,
        p: f64,
        levels: Vec<i32>,
        grid: GridSpec,
    ) -> Self {
        Experiment {
            name: function.name().to_string(),
            kernel,
            analyzer,
            dilation,
            function,
            p,
            levels,
            grid,
            seed: smoothness::DEFAULT_DIRECTION_SEED,
            modulus_order: None,
            lattice_radius: conditions::DEFAULT_LATTICE_RADIUS,
            thresholds: Thresholds::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(QpError::Config("levels must be nonempty".into()));
        }
        if self.levels[0] < 0 || self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(QpError::Config("levels must be nonnegative and strictly increasing".into()));
        }
        smoothness::check_p(self.p)?;
        self.grid.validate()?;
        let d = self.dilation.dim();
        for got in [self.kernel.dim(), self.function.dim(), self.grid.dim()] {
            if got != d {
                return Err(QpError::Dimension { expected: d, got });
            }
        }
        Ok(())
    }

    fn spec(&self, level: i32) -> OperatorSpec {
        OperatorSpec {
            kernel: self.kernel.clone(),
            analyzer: self.analyzer.clone(),
            dilation: self.dilation.clone(),
            level,
            lattice_truncation: None,
        }
    }

    fn with_function(&self, f: TestFunction) -> Experiment {
        Experiment { name: f.name().to_string(), function: f, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    /// Errors at the truncation floor; no rate to fit.
    Exact,
    /// `f ≡ 0`.
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub j: i32,
    pub error: f64,
    /// Truncation band of the kernel, in the same norm as `error`.
    pub uncertainty: f64,
    pub modulus: f64,
    pub tail_term: f64,
    /// `modulus + tail_term`, or `modulus` alone for averaging analyzers.
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub name: String,
    pub function: String,
    pub kernel: String,
    pub analyzer: String,
    #[serde(serialize_with = "crate::config::serialize_p")]
    pub p: f64,
    pub dim: usize,
    pub seed: u64,
    pub certificate: OrderCertificate,
    pub modulus_order: usize,
    /// `N` of the analyzer.
    pub analyzer_order: usize,
    /// `min(s, N + d/p)` with `s` the effective order.
    pub predicted_order: f64,
    /// Uses `Ω_s` alone as the bound.
    pub modulus_only: bool,
    pub levels: Vec<LevelRow>,
    /// Fitted decay order of the errors in units of `log m^{1/d}`.
    pub slope: Option<f64>,
    /// Fitted decay order of the bound.
    pub bound_slope: Option<f64>,
    /// `min(s, bound_slope)`.
    pub target_order: Option<f64>,
    /// Set when the smoothness of `f` limits the rate before the pair does.
    pub one_sided: bool,
    pub ratio_spread: Option<f64>,
    /// Levels `j` with `e_{j+1} >= e_j`.
    pub non_monotone: Vec<i32>,
    pub thresholds: Thresholds,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl RateReport {
    /// Columns `j, error, modulus, tail_term, ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,error,modulus,tail_term,ratio\n");
        for r in &self.levels {
            out.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", r.j, r.error, r.modulus, r.tail_term, r.ratio));
        }
        out
    }

    pub fn errors(&self) -> Vec<f64> {
        self.levels.iter().map(|r| r.error).collect()
    }
}

fn certificate(exp: &Experiment) -> Result<OrderCertificate> {
    let d = exp.dilation.dim();
    let available = exp.kernel.fourier_smoothness_order().min(exp.analyzer.symbol_smoothness());
    let max_s = MAX_CERTIFIED_ORDER.min(available.saturating_sub(d + 1));
    conditions::certify(&exp.kernel, &exp.analyzer, max_s, exp.lattice_radius, conditions::DEFAULT_TOL)
}

/// Least-squares decay order of `values` against `j · log m^{1/d}` on the fit levels.
fn decay_order(levels: &[i32], values: &[f64], min_level: i32, log_lambda: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .zip(values)
        .filter(|(&j, &v)| j >= min_level && v > 0.0)
        .map(|(&j, &v)| (j as f64 * log_lambda, v.ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    Some(-least_squares_slope(&pts))
}

/// Runs the level sweep of `exp` and assigns a verdict.
pub fn run(exp: &Experiment) -> Result<RateReport> {
    exp.validate()?;
    let f = &exp.function;
    let d = exp.dilation.dim();
    let m = exp.dilation.det_abs();
    let certificate = certificate(exp)?;
    let s_eff = certificate.effective_order;
    let s = exp.modulus_order.unwrap_or(s_eff.max(1));
    let n = exp.analyzer.order_n();
    let inv_p = if exp.p.is_infinite() { 0.0 } else { 1.0 / exp.p };
    let kappa = inv_p + n as f64 / d as f64;
    let predicted_order = (s_eff as f64).min(n as f64 + d as f64 * inv_p);
    let modulus_only = exp.analyzer.is_kantorovich();
    let opts = ModulusOptions { directions: 32, seed: exp.seed };

    // E_{δM^ν}(f)_p for every ν the tail sums touch
    let j_min = exp.levels[0];
    let nu_max = exp.levels[exp.levels.len() - 1] + exp.thresholds.extra_tail_levels;
    let best: Vec<f64> = (j_min..=nu_max)
        .into_par_iter()
        .map(|nu| {
            let a = exp.dilation.power(nu)? * exp.thresholds.delta;
            smoothness::best_approx(f, &a, exp.p, &exp.grid)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<LevelRow> = exp
        .levels
        .par_iter()
        .map(|&j| {
            let err = operator::error(&exp.spec(j), f, exp.p, &exp.grid)?;
            let modulus = smoothness::modulus(f, &exp.dilation.power(j)?, s, exp.p, &exp.grid, &opts)?;
            let tail_term: f64 = (j..=nu_max)
                .map(|nu| m.powf(kappa * (nu - j) as f64) * best[(nu - j_min) as usize])
                .sum();
            let bound = if modulus_only { modulus } else { modulus + tail_term };
            let ratio = if bound > 0.0 { err.error / bound } else { 0.0 };
            Ok(LevelRow { j, error: err.error, uncertainty: err.uncertainty, modulus, tail_term, bound, ratio })
        })
        .collect::<Result<_>>()?;

    let mut report = RateReport {
        name: exp.name.clone(),
        function: f.name().to_string(),
        kernel: exp.kernel.label(),
        analyzer: exp.analyzer.label(),
        p: exp.p,
        dim: d,
        seed: exp.seed,
        certificate,
        modulus_order: s,
        analyzer_order: n,
        predicted_order,
        modulus_only,
        levels: rows,
        slope: None,
        bound_slope: None,
        target_order: None,
        one_sided: false,
        ratio_spread: None,
        non_monotone: Vec::new(),
        thresholds: exp.thresholds.clone(),
        verdict: Verdict::Fail,
        notes: Vec::new(),
    };
    report.non_monotone = report
        .levels
        .windows(2)
        .filter(|w| w[1].error >= w[0].error)
        .map(|w| w[0].j)
        .collect();

    if f.is_zero() {
        report.verdict = Verdict::Trivial;
        return Ok(report);
    }
    let scale = grid::lp_norm(&grid::sample(f, &exp.grid)?, exp.p);
    if report.levels.iter().all(|r| r.error <= r.uncertainty.max(1e-12 * scale)) {
        report.verdict = Verdict::Exact;
        report.notes.push("errors at the truncation floor; slope fit skipped".into());
        return Ok(report);
    }

    let log_lambda = m.ln() / d as f64;
    let js: Vec<i32> = report.levels.iter().map(|r| r.j).collect();
    let min_level = exp.thresholds.min_fit_level;
    let slope = decay_order(&js, &report.errors(), min_level, log_lambda).ok_or(QpError::InsufficientLevels {
        needed: 4,
        have: js.iter().filter(|&&j| j >= min_level).count(),
    })?;
    let bounds: Vec<f64> = report.levels.iter().map(|r| r.bound).collect();
    let bound_slope = decay_order(&js, &bounds, min_level, log_lambda);
    let target = match bound_slope {
        Some(b) => (s_eff as f64).min(b),
        None => s_eff as f64,
    };
    let ratios: Vec<f64> = report.levels.iter().map(|r| r.ratio).collect();
    let max_r = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_r = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if min_r > 0.0 { max_r / min_r } else { f64::INFINITY };

    report.slope = Some(slope);
    report.bound_slope = bound_slope;
    report.target_order = Some(target);
    report.one_sided = target < s_eff as f64 - exp.thresholds.slope_tolerance;
    report.ratio_spread = spread.is_finite().then_some(spread);
    if s_eff == 0 {
        report.notes.push("pair has effective order 0; no decay is predicted".into());
    }
    if !report.non_monotone.is_empty() {
        report.notes.push(format!("non-monotone error after levels {:?}", report.non_monotone));
    }
    let slope_ok = (slope - target).abs() <= exp.thresholds.slope_tolerance;
    let spread_ok = spread < exp.thresholds.ratio_spread;
    if !slope_ok {
        report.notes.push(format!("slope {slope:.3} is not within {} of {target:.3}", exp.thresholds.slope_tolerance));
    }
    if !spread_ok {
        report.notes.push(format!("ratio spread {spread:.3} exceeds {}", exp.thresholds.ratio_spread));
    }
    report.verdict = if s_eff > 0 && slope_ok && spread_ok { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

/// Profiles of the anisotropic sweep: `rough` along one axis, `smooth` along the other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoProfiles {
    pub rough: Profile,
    pub smooth: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnisoReport {
    /// `rough ⊗ smooth`.
    pub x_rough: RateReport,
    /// `smooth ⊗ rough`.
    pub y_rough: RateReport,
    /// `rough ⊗ rough`.
    pub combined: RateReport,
    /// Per level `max(e/E, E/e)` for the combined error `e` and `E = max(e_x, e_y)`.
    pub tracking: Vec<f64>,
    pub max_tracking_factor: f64,
    pub tracks: bool,
    pub verdict: Verdict,
}

/// Largest admissible tracking factor of [`aniso_run`].
pub const TRACKING_FACTOR: f64 = 4.0;

/// Runs `exp` on the single-axis and combined tensor functions and checks that
/// the combined error stays within [`TRACKING_FACTOR`] of the larger single-axis error.
pub fn aniso_run(exp: &Experiment, profiles: AnisoProfiles) -> Result<AnisoReport> {
    if exp.dilation.dim() != 2 {
        return Err(QpError::Dimension { expected: 2, got: exp.dilation.dim() });
    }
    let e = exp.dilation.entries();
    if e[(0, 1)] != 0.0 || e[(1, 0)] != 0.0 {
        return Err(QpError::Config("anisotropic sweep needs a diagonal matrix".into()));
    }
    let AnisoProfiles { rough, smooth } = profiles;
    let fx = function::tensor("x_rough", &[rough, smooth])?;
    let fy = function::tensor("y_rough", &[smooth, rough])?;
    let fxy = function::tensor("combined", &[rough, rough])?;
    let x_rough = run(&exp.with_function(fx))?;
    let y_rough = run(&exp.with_function(fy))?;
    let combined = run(&exp.with_function(fxy))?;

    let tracking: Vec<f64> = combined
        .levels
        .iter()
        .zip(x_rough.levels.iter().zip(&y_rough.levels))
        .map(|(c, (x, y))| {
            let single = x.error.max(y.error);
            if c.error == 0.0 && single == 0.0 {
                1.0
            } else if c.error == 0.0 || single == 0.0 {
                f64::INFINITY
            } else {
                (c.error / single).max(single / c.error)
            }
        })
        .collect();
    let max_tracking_factor = tracking.iter().copied().fold(1.0, f64::max);
    let tracks = max_tracking_factor <= TRACKING_FACTOR;
    let verdict = if combined.verdict == Verdict::Trivial {
        Verdict::Trivial
    } else if tracks {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(AnisoReport { x_rough, y_rough, combined, tracking, max_tracking_factor, tracks, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hat_gaussian(levels: Vec<i32>) -> Experiment {
        Experiment::new(
            Kernel::bspline(2, 1).unwrap(),
            Analyzer::Delta,
            DilationMatrix::scalar(2.0, 1).unwrap(),
            function::gaussian(1).unwrap(),
            2.0,
            levels,
            GridSpec::new(vec![-6.0], vec![6.0], vec![3001]).unwrap(),
        )
    }

    #[test]
    fn validation() {
        assert!(hat_gaussian(vec![]).validate().is_err());
        assert!(hat_gaussian(vec![3, 2]).validate().is_err());
        assert!(hat_gaussian(vec![-1, 2]).validate().is_err());
        let mut e = hat_gaussian(vec![1, 2]);
        e.p = 0.5;
        assert!(e.validate().is_err());
    }

    #[test]
    fn zero_function_is_trivial() {
        let mut e = hat_gaussian(vec![1, 2, 3]);
        e.function = function::zero(1).unwrap();
        let r = run(&e).unwrap();
        assert_eq!(r.verdict, Verdict::Trivial);
        assert!(r.levels.iter().all(|l| l.error == 0.0));
    }

    #[test]
    fn too_few_levels() {
        assert!(matches!(run(&hat_gaussian(vec![1, 2, 3])), Err(QpError::InsufficientLevels { .. })));
    }

    #[test]
    fn csv_layout() {
        let r = run(&hat_gaussian(vec![2, 3, 4, 5])).unwrap();
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "j,error,modulus,tail_term,ratio");
        assert_eq!(csv.lines().count(), 5);
    }
}
