//! `qp`: order certificates, single-level approximations, rate sweeps and moduli.
//!
//! Exit codes: 0 success, 1 verdict FAIL, 2 configuration error, 3 numeric failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use quasiproj::analyzers::Analyzer;
use quasiproj::conditions;
use quasiproj::config::{self, AnalyzerSpec, ExperimentConfig, KernelSpec};
use quasiproj::field::function;
use quasiproj::field::grid::GridSpec;
use quasiproj::field::smoothness::{self, ModulusOptions};
use quasiproj::harness::{self, Verdict};
use quasiproj::operator::{self, OperatorSpec};
use quasiproj::{DilationMatrix, QpError};
use serde::Serialize;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "qp", about = "Quasi-projection operators: certificates, approximation and rate sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Strang–Fix and compatibility orders of a kernel pair, as JSON.
    CheckKernel(CheckKernelArgs),
    /// Samples f and Q_j f on a grid, as CSV.
    Approx(ApproxArgs),
    /// Runs a level sweep from a JSON config.
    Rate(RateArgs),
    /// Moduli of smoothness and best-approximation errors over levels.
    Moduli(ModuliArgs),
    /// Prints the version.
    Version,
}

#[derive(Args)]
struct CheckKernelArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value = "delta")]
    analyzer: String,
    /// Dimension used to broadcast shorthand kernels.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 6)]
    max_order: usize,
    #[arg(long, default_value_t = conditions::DEFAULT_LATTICE_RADIUS)]
    lattice_radius: i64,
    #[arg(long, default_value_t = conditions::DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Half-width of the box `[-h, h]^d`.
    #[arg(long, default_value_t = 5.0)]
    half_width: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 1001)]
    points: usize,
}

impl GridArgs {
    fn spec(&self, dim: usize) -> quasiproj::Result<GridSpec> {
        GridSpec::centered(dim, self.half_width, self.points)
    }
}

#[derive(Args)]
struct ApproxArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long, default_value = "delta")]
    analyzer: String,
    #[arg(long, default_value = "dyadic1")]
    matrix: String,
    #[arg(long)]
    level: i32,
    #[arg(long = "f", default_value = "gaussian")]
    function: String,
    #[arg(long, default_value = "2")]
    p: String,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ModuliArgs {
    #[arg(long = "f", default_value = "gaussian")]
    function: String,
    #[arg(long, default_value = "dyadic1")]
    matrix: String,
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[arg(long, default_value = "2")]
    p: String,
    /// Inclusive range `a..b` or a single level.
    #[arg(long, default_value = "1..6")]
    levels: String,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, mapped to an exit code.
enum Failure {
    Config(String),
    Numeric(String),
    Io(String),
}

impl From<QpError> for Failure {
    fn from(e: QpError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

type CmdResult = Result<bool, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("qp: {msg}");
        return ExitCode::from(2);
    }
    let outcome = match cli.command {
        Command::CheckKernel(a) => check_kernel(a),
        Command::Approx(a) => approx(a),
        Command::Rate(a) => rate(a),
        Command::Moduli(a) => moduli(a),
        Command::Version => {
            println!("qp {VERSION}");
            Ok(true)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("qp: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("qp: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Io(m)) => {
            eprintln!("qp: {m}");
            ExitCode::from(2)
        }
    }
}

/// Caps the global pool at `QP_THREADS` workers when set.
fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("QP_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| format!("QP_THREADS='{v}' is not a positive integer"))?;
    if n == 0 {
        return Err("QP_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn parse_kernel(s: &str, dim: usize) -> Result<quasiproj::Kernel, Failure> {
    Ok(parse_spec::<KernelSpec>(s)?.build(dim)?)
}

fn parse_analyzer(s: &str, dim: usize) -> Result<Analyzer, Failure> {
    Ok(parse_spec::<AnalyzerSpec>(s)?.build(dim)?)
}

/// Shorthand string or inline JSON object.
fn parse_spec<T>(s: &str) -> Result<T, Failure>
where
    T: std::str::FromStr<Err = QpError> + serde::de::DeserializeOwned,
{
    if s.trim_start().starts_with('{') {
        serde_json::from_str(s).map_err(|e| Failure::Config(format!("invalid spec '{s}': {e}")))
    } else {
        Ok(s.parse::<T>()?)
    }
}

fn parse_levels(s: &str) -> Result<Vec<i32>, Failure> {
    let bad = || Failure::Config(format!("cannot parse levels '{s}'; expected 'a..b' or an integer"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: i32 = a.trim().parse().map_err(|_| bad())?;
            let b: i32 = b.trim().parse().map_err(|_| bad())?;
            if b < a {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// then a sidecar `<path>.meta.json` holding the run metadata.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;

    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".meta.json");
    let meta = serde_json::json!({
        "version": VERSION,
        "written_unix_seconds": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "threads": rayon::current_num_threads(),
        "args": std::env::args().collect::<Vec<_>>(),
    });
    let meta_path = PathBuf::from(meta_path);
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(serde_json::to_string_pretty(&meta).unwrap_or_default().as_bytes()).map_err(io)?;
    tmp.persist(&meta_path).map_err(|e| io(e.error))?;
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Environment {
    version: &'static str,
    os: &'static str,
    arch: &'static str,
}

fn environment() -> Environment {
    Environment { version: VERSION, os: std::env::consts::OS, arch: std::env::consts::ARCH }
}

#[derive(Serialize)]
struct KernelReport {
    kernel: String,
    analyzer: String,
    certificate: conditions::OrderCertificate,
    tail_bound: Option<conditions::TailBound>,
    tail_bound_error: Option<String>,
}

fn check_kernel(a: CheckKernelArgs) -> CmdResult {
    let kernel = parse_kernel(&a.kernel, a.dim)?;
    let analyzer = parse_analyzer(&a.analyzer, a.dim)?;
    let certificate = conditions::certify(&kernel, &analyzer, a.max_order, a.lattice_radius, a.tol)?;
    let s = certificate.effective_order.max(1);
    let (tail_bound, tail_bound_error) =
        match conditions::tail_derivative_bound(&kernel, s, a.lattice_radius.max(4), conditions::DEFAULT_DELTA) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
    let ambiguous = certificate.ambiguous;
    let report = KernelReport { kernel: kernel.label(), analyzer: analyzer.label(), certificate, tail_bound, tail_bound_error };
    emit(a.out.as_deref(), &to_json(&report))?;
    if ambiguous {
        return Err(Failure::Numeric("order certificate is ambiguous (residual within 10x of the tolerance)".into()));
    }
    Ok(true)
}

fn approx(a: ApproxArgs) -> CmdResult {
    let m = config::parse_matrix(&a.matrix)?;
    let d = m.dim();
    let spec = OperatorSpec::new(parse_kernel(&a.kernel, d)?, parse_analyzer(&a.analyzer, d)?, m, a.level)?;
    let f = function::by_name(&a.function, d)?;
    let p = config::parse_p(&a.p)?;
    let g = a.grid.spec(d)?;
    let q = operator::apply(&spec, &f, &g)?;
    let err = operator::error(&spec, &f, p, &g)?;
    let mut csv = String::new();
    let header: Vec<String> = if d == 1 { vec!["x".into()] } else { (0..d).map(|i| format!("x{i}")).collect() };
    csv.push_str(&format!("{},f,q,q_im\n", header.join(",")));
    for (i, v) in q.values.iter().enumerate() {
        let x = g.point(i);
        let coords: Vec<String> = x.iter().map(|c| format!("{c:e}")).collect();
        csv.push_str(&format!("{},{:e},{:e},{:e}\n", coords.join(","), f.eval(&x), v.re, v.im));
    }
    emit(a.out.as_deref(), &csv)?;
    eprintln!("error_p = {:e} (p = {}, uncertainty {:e})", err.error, a.p, err.uncertainty);
    Ok(true)
}

#[derive(Serialize)]
struct RateOutput<T: Serialize> {
    environment: Environment,
    seed: u64,
    report: T,
}

fn rate(a: RateArgs) -> CmdResult {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", a.config.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = Some(seed);
    }
    let exp = cfg.build()?;
    let outputs = cfg.output.clone().unwrap_or_default();
    let out = a.out.or(outputs.report.map(PathBuf::from));
    let csv = a.csv.or(outputs.csv.map(PathBuf::from));

    let (json, csv_text, verdict) = match cfg.aniso_profiles()? {
        Some(profiles) => {
            let r = harness::aniso_run(&exp, profiles)?;
            let csv_text = r.combined.to_csv();
            let verdict = r.verdict;
            (to_json(&RateOutput { environment: environment(), seed: exp.seed, report: r }), csv_text, verdict)
        }
        None => {
            let r = harness::run(&exp)?;
            let csv_text = r.to_csv();
            let verdict = r.verdict;
            (to_json(&RateOutput { environment: environment(), seed: exp.seed, report: r }), csv_text, verdict)
        }
    };
    emit(out.as_deref(), &json)?;
    if let Some(path) = csv {
        write_atomic(&path, csv_text.as_bytes())?;
    }
    eprintln!("verdict: {verdict:?}");
    Ok(verdict != Verdict::Fail)
}

#[derive(Serialize)]
struct ModulusRow {
    j: i32,
    modulus: f64,
    best_approx: f64,
}

#[derive(Serialize)]
struct ModuliOutput {
    function: String,
    s: usize,
    #[serde(serialize_with = "config::serialize_p")]
    p: f64,
    seed: u64,
    rows: Vec<ModulusRow>,
}

fn moduli(a: ModuliArgs) -> CmdResult {
    let m: DilationMatrix = config::parse_matrix(&a.matrix)?;
    let d = m.dim();
    let f = function::by_name(&a.function, d)?;
    let p = config::parse_p(&a.p)?;
    let g = a.grid.spec(d)?;
    let levels = parse_levels(&a.levels)?;
    let seed = a.seed.unwrap_or(smoothness::DEFAULT_DIRECTION_SEED);
    let opts = ModulusOptions { directions: 32, seed };
    let mut rows = Vec::with_capacity(levels.len());
    for j in levels {
        let mj = m.power(j)?;
        rows.push(ModulusRow {
            j,
            modulus: smoothness::modulus(&f, &mj, a.s, p, &g, &opts)?,
            best_approx: smoothness::best_approx(&f, &mj, p, &g)?,
        });
    }
    emit(a.out.as_deref(), &to_json(&ModuliOutput { function: f.name().to_string(), s: a.s, p, seed, rows }))?;
    Ok(true)
}
