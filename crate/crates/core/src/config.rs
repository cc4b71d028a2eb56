//! Serializable descriptions of kernels, analyzers, matrices and experiments.
//!
//! Kernels and analyzers accept either a tagged object or a shorthand string:
//!
//! | shorthand          | meaning                                              |
//! |--------------------|------------------------------------------------------|
//! | `bspline:n`        | centered B-spline of order `n` on every axis         |
//! | `sinc:b:R[:r]`     | windowed sinc, half-band `b`, radius `R`, rolloff `r` |
//! | `qi:n:t`           | quasi-interpolating combination of `B_n` of order `t` |
//! | `gaussian:w`       | normalized Gaussian of width `w`                     |
//! | `delta`            | point evaluation (analyzers only)                    |
//! | `box`              | averaging against the centered box (analyzers only)  |
//! | `kernel:<kernel>`  | averaging against a kernel (analyzers only)          |
//!
//! Per-axis lists of length 1 are broadcast to the dimension of the matrix.

use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analyzers::Analyzer;
use crate::conditions;
use crate::dilation::DilationMatrix;
use crate::error::{QpError, Result};
use crate::field::function::{self, Profile};
use crate::field::grid::GridSpec;
use crate::harness::{AnisoProfiles, Experiment, Thresholds};
use crate::kernels::Kernel;
use crate::multiindex::MultiIndex;

pub const DEFAULT_SINC_ROLLOFF: f64 = 0.1;

/// Writes `p = ∞` as the string `"inf"`.
pub fn serialize_p<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

/// Reads `p` as a number or one of `"inf"`, `"infinity"`.
pub fn deserialize_p<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| serde::de::Error::custom("p is not a number")),
        serde_json::Value::String(s) => parse_p(&s).map_err(serde::de::Error::custom),
        other => Err(serde::de::Error::custom(format!("p must be a number or \"inf\", got {other}"))),
    }
}

pub fn parse_p(s: &str) -> Result<f64> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t.parse::<f64>().map_err(|_| QpError::Config(format!("cannot parse p = '{s}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    Bspline {
        orders: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shifts: Option<Vec<Vec<i64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeffs: Option<Vec<f64>>,
    },
    Sinc {
        band: Vec<f64>,
        #[serde(default = "default_rolloff")]
        rolloff: f64,
        radius: f64,
    },
    /// Quasi-interpolating combination of a B-spline.
    Qi { order: usize, target: usize },
    Gaussian { width: f64 },
}

fn default_rolloff() -> f64 {
    DEFAULT_SINC_ROLLOFF
}

fn field<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| QpError::Config(format!("cannot parse {what} from '{s}'")))
}

impl FromStr for KernelSpec {
    type Err = QpError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["bspline", n] => Ok(KernelSpec::Bspline { orders: vec![field(n, "order")?], shifts: None, coeffs: None }),
            ["sinc", b, r] => Ok(KernelSpec::Sinc {
                band: vec![field(b, "band")?],
                rolloff: DEFAULT_SINC_ROLLOFF,
                radius: field(r, "radius")?,
            }),
            ["sinc", b, r, roll] => Ok(KernelSpec::Sinc {
                band: vec![field(b, "band")?],
                rolloff: field(roll, "rolloff")?,
                radius: field(r, "radius")?,
            }),
            ["qi", n, t] => Ok(KernelSpec::Qi { order: field(n, "order")?, target: field(t, "target order")? }),
            ["gaussian", w] => Ok(KernelSpec::Gaussian { width: field(w, "width")? }),
            _ => Err(QpError::Config(format!("unrecognized kernel shorthand '{s}'"))),
        }
    }
}

fn broadcast<T: Clone>(v: &[T], dim: usize, what: &str) -> Result<Vec<T>> {
    match v.len() {
        1 => Ok(vec![v[0].clone(); dim]),
        n if n == dim => Ok(v.to_vec()),
        n => Err(QpError::Config(format!("{what} has {n} entries for dimension {dim}"))),
    }
}

impl KernelSpec {
    pub fn build(&self, dim: usize) -> Result<Kernel> {
        match self {
            KernelSpec::Bspline { orders, shifts, coeffs } => {
                let orders = broadcast(orders, dim, "orders")?;
                let terms = match (shifts, coeffs) {
                    (None, None) => vec![(vec![0; dim], 1.0)],
                    (Some(s), Some(c)) if s.len() == c.len() => s.iter().cloned().zip(c.iter().copied()).collect(),
                    _ => return Err(QpError::Config("shifts and coeffs must be given together with equal length".into())),
                };
                Kernel::bspline_tensor(orders, terms)
            }
            KernelSpec::Sinc { band, rolloff, radius } => Kernel::windowed_sinc(broadcast(band, dim, "band")?, *rolloff, *radius),
            KernelSpec::Qi { order, target } => {
                let base = Kernel::bspline(*order, dim)?;
                let terms = conditions::quasi_interpolation_coeffs(&base, *target)?;
                Kernel::bspline_tensor(vec![*order; dim], terms)
            }
            KernelSpec::Gaussian { width } => {
                if !(*width > 0.0) {
                    return Err(QpError::Config("gaussian width must be positive".into()));
                }
                Ok(Kernel::gaussian(*width, dim))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffTerm {
    pub beta: Vec<usize>,
    /// `[re, im]`.
    pub c: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum AnalyzerSpec {
    Delta {},
    Diff { terms: Vec<DiffTerm> },
    Kernel {
        #[serde(deserialize_with = "kernel_or_shorthand")]
        kernel: KernelSpec,
    },
}

impl FromStr for AnalyzerSpec {
    type Err = QpError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "delta" => Ok(AnalyzerSpec::Delta {}),
            "box" => Ok(AnalyzerSpec::Kernel { kernel: KernelSpec::Bspline { orders: vec![1], shifts: None, coeffs: None } }),
            _ => match s.strip_prefix("kernel:") {
                Some(rest) => Ok(AnalyzerSpec::Kernel { kernel: rest.parse()? }),
                None => Err(QpError::Config(format!("unrecognized analyzer shorthand '{s}'"))),
            },
        }
    }
}

impl AnalyzerSpec {
    pub fn build(&self, dim: usize) -> Result<Analyzer> {
        match self {
            AnalyzerSpec::Delta {} => Ok(Analyzer::Delta),
            AnalyzerSpec::Diff { terms } => {
                let terms = terms
                    .iter()
                    .map(|t| {
                        if t.beta.len() != dim {
                            return Err(QpError::Dimension { expected: dim, got: t.beta.len() });
                        }
                        Ok((MultiIndex(t.beta.clone()), Complex64::new(t.c[0], t.c[1])))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Analyzer::differential(terms)
            }
            AnalyzerSpec::Kernel { kernel } => Ok(Analyzer::FunctionKernel(kernel.build(dim)?)),
        }
    }
}

/// A built-in matrix name or explicit rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn build(&self) -> Result<DilationMatrix> {
        match self {
            MatrixSpec::Named(name) => parse_matrix(name),
            MatrixSpec::Rows(rows) => DilationMatrix::from_rows(rows),
        }
    }
}

/// A built-in name, `c` (scalar in one dimension), `c*I<d>` or `diag(a,b,...)`.
pub fn parse_matrix(s: &str) -> Result<DilationMatrix> {
    let s = s.trim();
    if let Some(m) = DilationMatrix::builtin(s) {
        return Ok(m);
    }
    if let Some(inner) = s.strip_prefix("diag(").and_then(|r| r.strip_suffix(')')) {
        let diag: Vec<f64> = inner.split(',').map(|v| field(v.trim(), "diagonal entry")).collect::<Result<_>>()?;
        return DilationMatrix::diagonal(&diag);
    }
    if let Some((c, d)) = s.split_once("*I") {
        return DilationMatrix::scalar(field(c.trim(), "scalar")?, field(d.trim(), "dimension")?);
    }
    if let Ok(c) = s.parse::<f64>() {
        return DilationMatrix::scalar(c, 1);
    }
    Err(QpError::Config(format!(
        "unrecognized matrix '{s}'; expected one of {:?}, 'c*I<d>' or 'diag(...)'",
        DilationMatrix::builtin_names()
    )))
}

fn kernel_or_shorthand<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<KernelSpec, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
        v => serde_json::from_value(v).map_err(serde::de::Error::custom),
    }
}

fn analyzer_or_shorthand<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<AnalyzerSpec, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
        v => serde_json::from_value(v).map_err(serde::de::Error::custom),
    }
}

pub fn parse_profile(name: &str) -> Result<Profile> {
    match name {
        "gaussian" => Ok(Profile::Gaussian),
        "sine" => Ok(Profile::Sine),
        "sinc2" => Ok(Profile::Sinc2),
        "c1" => Ok(Profile::C1),
        "kink" => Ok(Profile::Kink),
        "bump" => Ok(Profile::Bump),
        "zero" => Ok(Profile::Zero),
        other => Err(QpError::Config(format!("unknown profile '{other}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisoSpec {
    pub rough: String,
    pub smooth: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(deserialize_with = "kernel_or_shorthand")]
    pub kernel: KernelSpec,
    #[serde(deserialize_with = "analyzer_or_shorthand")]
    pub analyzer: AnalyzerSpec,
    pub matrix: MatrixSpec,
    pub function: String,
    #[serde(deserialize_with = "deserialize_p", serialize_with = "serialize_p")]
    pub p: f64,
    pub levels: Vec<i32>,
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub modulus_order: Option<usize>,
    #[serde(default)]
    pub lattice_radius: Option<i64>,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
    #[serde(default)]
    pub aniso: Option<AnisoSpec>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| QpError::Config(format!("invalid experiment config: {e}")))
    }

    pub fn build(&self) -> Result<Experiment> {
        let dilation = self.matrix.build()?;
        let d = dilation.dim();
        let kernel = self.kernel.build(d)?;
        let analyzer = self.analyzer.build(d)?;
        let f = function::by_name(&self.function, d)?;
        let mut exp = Experiment::new(kernel, analyzer, dilation, f, self.p, self.levels.clone(), self.grid.clone());
        if let Some(name) = &self.name {
            exp.name = name.clone();
        }
        if let Some(seed) = self.seed {
            exp.seed = seed;
        }
        exp.modulus_order = self.modulus_order;
        if let Some(r) = self.lattice_radius {
            exp.lattice_radius = r;
        }
        if let Some(t) = &self.thresholds {
            exp.thresholds = t.clone();
        }
        exp.validate()?;
        Ok(exp)
    }

    pub fn aniso_profiles(&self) -> Result<Option<AnisoProfiles>> {
        self.aniso
            .as_ref()
            .map(|a| Ok(AnisoProfiles { rough: parse_profile(&a.rough)?, smooth: parse_profile(&a.smooth)? }))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthands() {
        assert_eq!(
            "bspline:2".parse::<KernelSpec>().unwrap(),
            KernelSpec::Bspline { orders: vec![2], shifts: None, coeffs: None }
        );
        assert_eq!(
            "sinc:0.5:200".parse::<KernelSpec>().unwrap(),
            KernelSpec::Sinc { band: vec![0.5], rolloff: DEFAULT_SINC_ROLLOFF, radius: 200.0 }
        );
        assert!("bspline".parse::<KernelSpec>().is_err());
        assert!("spline:2".parse::<KernelSpec>().is_err());
        assert!(matches!("kernel:bspline:1".parse::<AnalyzerSpec>().unwrap(), AnalyzerSpec::Kernel { .. }));
        assert_eq!(parse_p("inf").unwrap(), f64::INFINITY);
        assert_eq!(parse_matrix("diag(2,4)").unwrap().dim(), 2);
        assert_eq!(parse_matrix("2*I3").unwrap().det_abs(), 8.0);
    }

    #[test]
    fn json_forms() {
        let k: KernelSpec = serde_json::from_str(r#"{"type":"bspline","orders":[2],"shifts":[[0]],"coeffs":[1.0]}"#).unwrap();
        assert_eq!(k.build(1).unwrap().support_radius(), 1.0);
        let a: AnalyzerSpec = serde_json::from_str(r#"{"type":"diff","terms":[{"beta":[1],"c":[0.0,1.0]}]}"#).unwrap();
        assert_eq!(a.build(1).unwrap().order_n(), 1);
        assert!(serde_json::from_str::<KernelSpec>(r#"{"type":"bspline","orders":[2],"extra":1}"#).is_err());
        assert!(serde_json::from_str::<AnalyzerSpec>(r#"{"type":"delta","x":1}"#).is_err());
    }

    #[test]
    fn experiment_config() {
        let text = r#"{
            "kernel": "bspline:2", "analyzer": "delta", "matrix": "dyadic1",
            "function": "gaussian", "p": "inf", "levels": [2, 3, 4, 5],
            "grid": {"lo": [-6], "hi": [6], "shape": [601]}, "seed": 7
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        let e = c.build().unwrap();
        assert_eq!(e.p, f64::INFINITY);
        assert_eq!(e.seed, 7);
        let bad = text.replace("\"seed\": 7", "\"seed\": 7, \"colour\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }
}
