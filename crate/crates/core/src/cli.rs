//! Command-line front end.
//!
//! Exit codes: 0 success, 1 contract violation or failed statistical check,
//! 2 flagged non-convergence, 64 usage error.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::covariance::{composed_cov, cov_seminorms, fbm_cov, wiener_cov, CovarianceField};
use crate::fracou::{frac_ou_covariance, instantaneous_variance, solve_frac_ou_report, variance_moment, FracOUSpec, RoughVolSpec};
use crate::hilbert::{HOperator, HVector};
use crate::integrate1d::{convergence_study, volterra_integral, IntegrandSpec};
use crate::integrate2d::{cov_integral, rough_admissible, Cov2DSpec};
use crate::kernels::{
    exp_kernel, fractional_kernel, identity_kernel, kernel_seminorms, ml_kernel, rl_kernel, zero_kernel, VolterraKernel,
};
use crate::mcverify::{mc_verify, McConfig};
use crate::par;
use crate::paths::{read_samples_csv, write_samples_csv, Grid, GridPath};
use crate::sampling::{empirical_holder_exponent, Sampler, SamplerConfig, SamplerKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "volterra", version, about = "Pathwise Volterra integration against Hilbert-valued Gaussian paths")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample Q-Wiener, Q-fBm or time-changed driver paths.
    Simulate(SimulateArgs),
    /// Integrate a kernel against a driver path on the whole simplex.
    Integrate1d(Integrate1dArgs),
    /// Covariance integral of a kernel pair against a covariance field.
    Cov2d(Cov2dArgs),
    /// Solve the fractional Ornstein-Uhlenbeck equation along a driver.
    Fracou(FracouArgs),
    /// Covariance of the fractional Ornstein-Uhlenbeck solution.
    FracouCov(FracouCovArgs),
    /// Rough-volatility variance moments.
    Roughvol(RoughvolArgs),
    /// Monte Carlo check of covariance, characteristic functional and marginals.
    McVerify(McVerifyArgs),
    /// Dyadic refinement study of the pathwise integral.
    Converge(ConvergeArgs),
    /// Discrete regularity seminorms of a kernel and/or covariance field.
    Seminorms(SeminormArgs),
    /// Rough-path admissibility scan of a covariance field.
    RoughGate(RoughGateArgs),
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Number of grid intervals (a power of two).
    #[arg(long, default_value_t = 256)]
    grid_n: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
}

impl GridArgs {
    fn grid(&self) -> anyhow::Result<Grid> {
        Ok(Grid::new(self.horizon, self.grid_n)?)
    }
}

#[derive(Args, Debug, Clone)]
struct Q0Args {
    /// Driver covariance operator (JSON `{"dim", "entries"}`); identity if absent.
    #[arg(long)]
    q0: Option<PathBuf>,
    /// Hilbert dimension when no operator file is given.
    #[arg(long, default_value_t = 1)]
    dim: usize,
}

impl Q0Args {
    fn q0(&self) -> anyhow::Result<HOperator> {
        match &self.q0 {
            Some(p) => read_operator(p),
            None => Ok(HOperator::identity(self.dim)),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum DriverKind {
    Wiener,
    Fbm,
    Composed,
    SmoothLinear,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "wiener")]
    kind: DriverKind,
    /// Hurst parameter for `fbm`.
    #[arg(long)]
    h: Option<f64>,
    #[command(flatten)]
    q0: Q0Args,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, env = "VOLTERRA_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    samples: usize,
    /// Scalar time-change path (CSV) for `composed`.
    #[arg(long)]
    zpath: Option<PathBuf>,
    /// Use `|Z|` as the time change.
    #[arg(long)]
    absolute: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Integrate1dArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    driver: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Defaults to the driver's resolution.
    #[arg(long)]
    max_level: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Cov2dArgs {
    #[arg(long)]
    kernel: String,
    /// Second kernel; the first one if absent.
    #[arg(long)]
    kernel2: Option<String>,
    #[arg(long, default_value = "wiener")]
    cov: String,
    #[command(flatten)]
    q0: Q0Args,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Defaults to two levels above the output grid.
    #[arg(long)]
    max_level: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FracouArgs {
    #[arg(long)]
    alpha: f64,
    /// Drift operator (JSON); zero if absent.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Initial value (JSON array); zero if absent.
    #[arg(long)]
    y0: Option<PathBuf>,
    #[arg(long)]
    driver: PathBuf,
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    max_level: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FracouCovArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    a: Option<PathBuf>,
    #[arg(long, default_value = "wiener")]
    cov: String,
    #[command(flatten)]
    q0: Q0Args,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    max_level: Option<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RoughvolArgs {
    #[arg(long)]
    l: PathBuf,
    #[arg(long)]
    z: PathBuf,
    #[arg(long)]
    qb: PathBuf,
    /// `Q_Y(t, t)` as an operator, or a field file from `cov2d`/`fracou-cov`.
    #[arg(long)]
    qy: PathBuf,
    /// Time at which to read a field file (defaults to the last entry).
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 1)]
    k: u32,
    /// Optional state vector for the instantaneous variance.
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct McVerifyArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long, value_enum, default_value = "wiener")]
    driver_kind: DriverKind,
    #[arg(long)]
    h: Option<f64>,
    #[command(flatten)]
    q0: Q0Args,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, env = "VOLTERRA_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long, value_enum, default_value = "smooth-linear")]
    driver_kind: DriverKind,
    /// Driver file; overrides `--driver-kind`.
    #[arg(long)]
    driver: Option<PathBuf>,
    #[arg(long)]
    h: Option<f64>,
    /// Declared driver regularity; defaults to the driver kind's.
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    q0: Q0Args,
    #[arg(long, default_value_t = 4096)]
    grid_n: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 4)]
    min_level: u32,
    #[arg(long)]
    max_level: Option<u32>,
    #[arg(long, env = "VOLTERRA_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SeminormArgs {
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    cov: Option<String>,
    /// Exponent for the covariance seminorms; the field's declared one if absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    q0: Q0Args,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RoughGateArgs {
    #[arg(long)]
    cov: String,
    #[command(flatten)]
    q0: Q0Args,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = par::init_threads(n) {
            eprintln!("warning: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<i32> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Integrate1d(a) => integrate1d(a),
        Command::Cov2d(a) => cov2d(a),
        Command::Fracou(a) => fracou(a),
        Command::FracouCov(a) => fracou_cov(a),
        Command::Roughvol(a) => roughvol(a),
        Command::McVerify(a) => mcverify(a),
        Command::Converge(a) => converge(a),
        Command::Seminorms(a) => seminorms(a),
        Command::RoughGate(a) => rough_gate(a),
    }
}

fn open_out(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(path: &Option<PathBuf>, value: &T) -> anyhow::Result<()> {
    let mut w = open_out(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn read_operator(p: &Path) -> anyhow::Result<HOperator> {
    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing operator {}", p.display()))
}

fn read_vector(p: &Path) -> anyhow::Result<HVector> {
    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing vector {}", p.display()))
}

fn read_paths(p: &Path) -> anyhow::Result<Vec<GridPath>> {
    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
    read_samples_csv(BufReader::new(f)).with_context(|| format!("reading paths from {}", p.display()))
}

fn read_single_path(p: &Path) -> anyhow::Result<GridPath> {
    let mut v = read_paths(p)?;
    if v.len() != 1 {
        bail!("{} holds {} paths, expected one", p.display(), v.len());
    }
    Ok(v.remove(0))
}

/// `key=value` pairs after the `name:` prefix.
fn parse_params(spec: &str) -> (String, Vec<(String, String)>) {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let params = rest
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) => (k.trim().to_string(), v.trim().to_string()),
            None => (kv.trim().to_string(), String::new()),
        })
        .collect();
    (name.trim().to_string(), params)
}

fn param<'a>(params: &'a [(String, String)], key: &str) -> Option<&'a str> {
    params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn num(params: &[(String, String)], key: &str, spec: &str) -> anyhow::Result<f64> {
    let v = param(params, key).ok_or_else(|| anyhow!("`{spec}`: missing `{key}=`"))?;
    v.parse().with_context(|| format!("`{spec}`: bad number for `{key}`"))
}

fn check_keys(params: &[(String, String)], allowed: &[&str], spec: &str) -> anyhow::Result<()> {
    for (k, _) in params {
        if !allowed.contains(&k.as_str()) {
            bail!("`{spec}`: unknown parameter `{k}`");
        }
    }
    Ok(())
}

/// Coefficient operator from `scalar=v` or `op=path` (identity otherwise).
fn coefficient(params: &[(String, String)], dim: usize, spec: &str) -> anyhow::Result<HOperator> {
    if let Some(p) = param(params, "op") {
        let m = read_operator(Path::new(p))?;
        if m.dim() != dim {
            bail!("`{spec}`: operator has dimension {}, expected {dim}", m.dim());
        }
        return Ok(m);
    }
    let c = match param(params, "scalar") {
        Some(v) => v.parse().with_context(|| format!("`{spec}`: bad scalar"))?,
        None => 1.0,
    };
    Ok(HOperator::scalar(dim, c))
}

/// Kernels: `identity`, `zero`, `frac:eta=..`, `rl:h=..`, `exp:a=..`,
/// `ml:alpha=..,beta=..,a=..`; `frac`, `rl` and `ml` accept `scalar=` or
/// `op=` for the coefficient operator.
fn parse_kernel(spec: &str, dim: usize) -> anyhow::Result<VolterraKernel> {
    let (name, p) = parse_params(spec);
    Ok(match name.as_str() {
        "identity" => identity_kernel(dim),
        "zero" => zero_kernel(dim),
        "frac" => {
            check_keys(&p, &["eta", "scalar", "op"], spec)?;
            fractional_kernel(num(&p, "eta", spec)?, coefficient(&p, dim, spec)?)?
        }
        "rl" => {
            check_keys(&p, &["h", "scalar", "op"], spec)?;
            rl_kernel(num(&p, "h", spec)?, coefficient(&p, dim, spec)?)?
        }
        "exp" => {
            check_keys(&p, &["a"], spec)?;
            exp_kernel(num(&p, "a", spec)?, dim)
        }
        "ml" => {
            check_keys(&p, &["alpha", "beta", "a", "op"], spec)?;
            let alpha = num(&p, "alpha", spec)?;
            let beta = match param(&p, "beta") {
                Some(_) => num(&p, "beta", spec)?,
                None => alpha,
            };
            let a = match param(&p, "a") {
                Some(_) => HOperator::scalar(dim, num(&p, "a", spec)?),
                None => coefficient(&p, dim, spec)?,
            };
            ml_kernel(alpha, beta, a)?
        }
        other => bail!("unknown kernel `{other}`"),
    })
}

/// Covariances: `wiener`, `fbm:h=..`, `composed:zpath=..,base=wiener|fbm[,h=..][,zalpha=..][,absolute]`.
fn parse_cov(spec: &str, q0: HOperator) -> anyhow::Result<CovarianceField> {
    let (name, p) = parse_params(spec);
    Ok(match name.as_str() {
        "wiener" => wiener_cov(q0)?,
        "fbm" => {
            check_keys(&p, &["h"], spec)?;
            fbm_cov(num(&p, "h", spec)?, q0)?
        }
        "composed" => {
            check_keys(&p, &["zpath", "base", "h", "zalpha", "absolute"], spec)?;
            let zp = param(&p, "zpath").ok_or_else(|| anyhow!("`{spec}`: missing `zpath=`"))?;
            let mut z = read_single_path(Path::new(zp))?;
            if param(&p, "absolute").is_some() {
                let vals = z.values().iter().map(|v| HVector::new(vec![v.coords()[0].abs()])).collect::<Result<_, _>>()?;
                z = GridPath::new(*z.grid(), vals)?;
            }
            let base = match param(&p, "base").unwrap_or("wiener") {
                "wiener" => wiener_cov(q0)?,
                "fbm" => fbm_cov(num(&p, "h", spec)?, q0)?,
                other => bail!("`{spec}`: unknown base `{other}`"),
            };
            let rho = match param(&p, "zalpha") {
                Some(_) => num(&p, "zalpha", spec)?,
                None => empirical_holder_exponent(&z)?.clamp(0.02, 1.0),
            };
            composed_cov(&base, &z, (base.alpha() * rho).min(0.99))?
        }
        other => bail!("unknown covariance `{other}`"),
    })
}

fn sampler_kind(kind: DriverKind, h: Option<f64>, zpath: &Option<PathBuf>, absolute: bool) -> anyhow::Result<SamplerKind> {
    Ok(match kind {
        DriverKind::Wiener => SamplerKind::Wiener,
        DriverKind::Fbm => SamplerKind::Fbm { h: h.ok_or_else(|| anyhow!("--h is required for fbm"))? },
        DriverKind::Composed => {
            let z = zpath.as_ref().ok_or_else(|| anyhow!("--zpath is required for composed"))?;
            SamplerKind::Composed { z: read_single_path(z)?, absolute }
        }
        DriverKind::SmoothLinear => bail!("smooth-linear is a deterministic driver, not a sampler"),
    })
}

fn simulate(a: SimulateArgs) -> anyhow::Result<i32> {
    let cfg = SamplerConfig {
        seed: a.seed,
        grid: a.grid.grid()?,
        q0: a.q0.q0()?,
        kind: sampler_kind(a.kind, a.h, &a.zpath, a.absolute)?,
    };
    if a.samples == 0 {
        bail!("--samples must be positive");
    }
    let paths = Sampler::new(cfg)?.samples(a.samples)?;
    let mut w = open_out(&a.out)?;
    write_samples_csv(&paths, &mut w)?;
    w.flush()?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct Integrate1dReport {
    converged: bool,
    unconverged_pairs: usize,
    worst_difference: f64,
    max_level: u32,
    refinement: crate::integrate1d::RefinementReport,
}

fn integrate1d(a: Integrate1dArgs) -> anyhow::Result<i32> {
    let w = read_single_path(&a.driver)?;
    let kernel = parse_kernel(&a.kernel, w.dim())?;
    let spec = IntegrandSpec::new(kernel, w, a.gamma)?;
    let levels = spec.grid().levels();
    let max_level = a.max_level.unwrap_or(levels);
    let vi = volterra_integral(&spec, max_level, a.tol)?;
    {
        let mut out = csv::Writer::from_writer(open_out(&a.out)?);
        let d = spec.driver().dim();
        let mut header = vec!["tau".to_string(), "t".to_string()];
        header.extend((1..=d).map(|k| format!("c_{k}")));
        out.write_record(&header)?;
        let g = spec.grid();
        for tau in 0..=g.n() {
            for t in 0..=tau {
                let mut rec = vec![format!("{}", g.time(tau)), format!("{}", g.time(t))];
                rec.extend(vi.path.coords(tau, t).iter().map(|x| format!("{x}")));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
    }
    if a.report.is_some() {
        let h = spec.grid().horizon();
        let lo = max_level.saturating_sub(6).min(max_level.saturating_sub(2));
        let mut refinement = convergence_study(&spec, &[(h, h), (h, h / 2.0)], lo..=max_level)?;
        refinement.converged = vi.converged;
        let rep = Integrate1dReport {
            converged: vi.converged,
            unconverged_pairs: vi.unconverged_pairs,
            worst_difference: vi.worst_difference,
            max_level,
            refinement,
        };
        write_json(&a.report, &rep)?;
    }
    Ok(if vi.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cov2d(a: Cov2dArgs) -> anyhow::Result<i32> {
    let q0 = a.q0.q0()?;
    let dim = q0.dim();
    let k = parse_kernel(&a.kernel, dim)?;
    let kp = match &a.kernel2 {
        Some(s) => parse_kernel(s, dim)?,
        None => k.clone(),
    };
    let grid = a.grid.grid()?;
    let spec = Cov2DSpec::new(k, kp, parse_cov(&a.cov, q0)?, grid)?;
    let max_level = a.max_level.unwrap_or(grid.levels() + 2);
    let r = cov_integral(&spec, max_level, a.tol)?;
    let mut w = open_out(&a.out)?;
    w.write_all(r.field.to_json()?.as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    if a.report.is_some() {
        write_json(&a.report, &r.report)?;
    }
    Ok(if r.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn operator_or_zero(p: &Option<PathBuf>, dim: usize) -> anyhow::Result<HOperator> {
    match p {
        Some(p) => read_operator(p),
        None => Ok(HOperator::zeros(dim)),
    }
}

fn fracou(a: FracouArgs) -> anyhow::Result<i32> {
    let w = read_single_path(&a.driver)?;
    let dim = w.dim();
    let y0 = match &a.y0 {
        Some(p) => read_vector(p)?,
        None => HVector::zeros(dim),
    };
    let max_level = a.max_level.unwrap_or(w.grid().levels());
    let spec = FracOUSpec::new(a.alpha, operator_or_zero(&a.a, dim)?, y0, w, a.gamma)?;
    let sol = solve_frac_ou_report(&spec, a.tol, max_level)?;
    let mut out = open_out(&a.out)?;
    sol.path.write_csv(&mut out)?;
    out.flush()?;
    Ok(if sol.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn fracou_cov(a: FracouCovArgs) -> anyhow::Result<i32> {
    let q0 = a.q0.q0()?;
    let dim = q0.dim();
    let grid = a.grid.grid()?;
    let qw = parse_cov(&a.cov, q0)?;
    // the driver only fixes the grid; its values do not enter the covariance
    let spec = FracOUSpec::new(a.alpha, operator_or_zero(&a.a, dim)?, HVector::zeros(dim), GridPath::zeros(grid, dim), 1.0)?;
    let max_level = a.max_level.unwrap_or(grid.levels() + 2);
    let r = frac_ou_covariance(&spec, &qw, a.tol, max_level)?;
    let mut w = open_out(&a.out)?;
    w.write_all(r.field.to_json()?.as_bytes())?;
    writeln!(w)?;
    w.flush()?;
    if a.report.is_some() {
        write_json(&a.report, &r.report)?;
    }
    Ok(if r.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

#[derive(serde::Deserialize)]
struct FieldRecord {
    t: f64,
    #[serde(rename = "t'")]
    tp: f64,
    operator: HOperator,
}

/// A single operator, or the diagonal entry of a field file at `t`.
fn read_qy(p: &Path, t: Option<f64>) -> anyhow::Result<HOperator> {
    let text = std::fs::read_to_string(p).with_context(|| format!("opening {}", p.display()))?;
    if let Ok(m) = serde_json::from_str::<HOperator>(&text) {
        return Ok(m);
    }
    let recs: Vec<FieldRecord> =
        serde_json::from_str(&text).with_context(|| format!("{} is neither an operator nor a field", p.display()))?;
    let diag: Vec<&FieldRecord> = recs.iter().filter(|r| r.t == r.tp).collect();
    let pick = match t {
        Some(t) => diag.into_iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())),
        None => diag.into_iter().max_by(|a, b| a.t.total_cmp(&b.t)),
    };
    Ok(pick.ok_or_else(|| anyhow!("{} has no diagonal entries", p.display()))?.operator.clone())
}

#[derive(Serialize)]
struct RoughvolReport {
    c: f64,
    v: f64,
    k: u32,
    moment: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    instantaneous_variance: Option<f64>,
}

fn roughvol(a: RoughvolArgs) -> anyhow::Result<i32> {
    let spec = RoughVolSpec::new(read_vector(&a.l)?, read_vector(&a.z)?, read_operator(&a.qb)?)?;
    let qy = read_qy(&a.qy, a.t)?;
    let v = qy.apply(spec.l())?.dot(spec.l());
    let moment = variance_moment(&spec, &qy, a.k)?;
    let iv = match &a.y {
        Some(p) => Some(instantaneous_variance(&spec, &read_vector(p)?)?),
        None => None,
    };
    write_json(&a.out, &RoughvolReport { c: spec.scaling(), v, k: a.k, moment, instantaneous_variance: iv })?;
    Ok(EXIT_OK)
}

fn mcverify(a: McVerifyArgs) -> anyhow::Result<i32> {
    let q0 = a.q0.q0()?;
    let kernel = parse_kernel(&a.kernel, q0.dim())?;
    let sampler = SamplerConfig { seed: a.seed, grid: a.grid.grid()?, q0, kind: sampler_kind(a.driver_kind, a.h, &None, false)? };
    let report = mc_verify(&McConfig::with_defaults(kernel, sampler, a.samples))?;
    write_json(&a.out, &report)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILURE })
}

fn converge(a: ConvergeArgs) -> anyhow::Result<i32> {
    let q0 = a.q0.q0()?;
    let grid = Grid::new(a.horizon, a.grid_n)?;
    let (w, default_gamma) = match &a.driver {
        Some(p) => (read_single_path(p)?, None),
        None => match a.driver_kind {
            DriverKind::SmoothLinear => (GridPath::along_first_axis(grid, q0.dim(), |t| t)?, Some(1.0)),
            kind => {
                let sk = sampler_kind(kind, a.h, &None, false)?;
                let g = match &sk {
                    SamplerKind::Fbm { h } => *h,
                    _ => 0.5,
                };
                let cfg = SamplerConfig { seed: a.seed, grid, q0: q0.clone(), kind: sk };
                (Sampler::new(cfg)?.sample(0)?, Some(g))
            }
        },
    };
    let gamma = a.gamma.or(default_gamma).ok_or_else(|| anyhow!("--gamma is required with --driver"))?;
    let kernel = parse_kernel(&a.kernel, w.dim())?;
    let spec = IntegrandSpec::new(kernel, w, gamma)?;
    let max_level = a.max_level.unwrap_or(spec.grid().levels());
    let h = spec.grid().horizon();
    let probes = [(h, h), (h, h / 2.0), (0.75 * h, 0.75 * h)];
    let report = convergence_study(&spec, &probes, a.min_level..=max_level)?;
    write_json(&a.report, &report)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SeminormReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel: Option<crate::kernels::KernelSeminorms>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance: Option<crate::covariance::CovSeminorms>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

fn seminorms(a: SeminormArgs) -> anyhow::Result<i32> {
    if a.kernel.is_none() && a.cov.is_none() {
        bail!("give --kernel and/or --cov");
    }
    let q0 = a.q0.q0()?;
    let grid = a.grid.grid()?;
    let kernel = match &a.kernel {
        Some(s) => Some(kernel_seminorms(&parse_kernel(s, q0.dim())?, &grid)?),
        None => None,
    };
    let (covariance, alpha) = match &a.cov {
        Some(s) => {
            let q = parse_cov(s, q0)?;
            let alpha = a.alpha.unwrap_or(q.alpha());
            (Some(cov_seminorms(&q, alpha, &grid)?), Some(alpha))
        }
        None => (None, None),
    };
    write_json(&a.out, &SeminormReport { kernel, covariance, alpha })?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct GateSummary {
    admissible: bool,
    certified_exponent: f64,
    scan: Vec<crate::integrate2d::GateRow>,
}

fn rough_gate(a: RoughGateArgs) -> anyhow::Result<i32> {
    let q = parse_cov(&a.cov, a.q0.q0()?)?;
    let g = rough_admissible(&q, &Grid::new(a.horizon, a.grid_n)?)?;
    write_json(&a.out, &GateSummary { admissible: g.admissible, certified_exponent: g.certified_exponent, scan: g.scan })?;
    Ok(EXIT_OK)
}
