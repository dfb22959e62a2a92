//! Command-line front end for `orthant-lab`.
//!
//! Every subcommand that writes to `--out <path>` also writes
//! `<path>.manifest.json`; `replay <manifest>` reruns the recorded command and
//! reproduces its outputs byte for byte.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use orthant_lab::bounds::{eigenvalue_bounds, lambda_from_p, p_from_lambda, yamabe_lower_bound};
use orthant_lab::fpt::{
    arcsine_cdf, default_window, fit_tail_exponent, ks_distance, occupation_times,
    one_particle_survival, render_paths, survival_curve, ExponentFit, WalkConfig,
};
use orthant_lab::report::{report, Budgets, ReportRow};
use orthant_lab::spectral::{richardson_extrapolate, solve_levels, GridSpec};
use orthant_lab::volume::{estimate_fraction, recursion_bound};
use orthant_lab::{DomainSpec, Substreams};

/// Environment variable supplying the default for `--threads`.
pub const THREADS_ENV: &str = "ORTHANT_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "orthant-lab",
    version,
    about = "Exit times, eigenvalue bounds and spectra for the orthant problem"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", content = "parameters", rename_all = "kebab-case")]
pub enum Command {
    /// Simulate exit times and fit the survival tail exponent.
    Simulate(SimulateArgs),
    /// Write trajectories of surviving paths (dimension 1 to 3).
    Render(RenderArgs),
    /// Monte Carlo volume fraction of a spherical domain.
    Volume(VolumeArgs),
    /// Lower and upper bounds on the first eigenvalue by dimension.
    Bounds(BoundsArgs),
    /// Finite-volume eigenvalue on the 2-sphere with extrapolation.
    Spectral(SpectralArgs),
    /// One row per dimension across all engines.
    Report(ReportArgs),
    /// Run the closed-form oracle suite.
    Selfcheck(SelfcheckArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Common {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    #[serde(skip)]
    pub threads: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Brownian,
    Lattice,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Brownian)]
    pub model: ModelArg,
    /// Monitoring step of the Brownian model.
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Comma-separated start point; defaults to (1,...,1)/sqrt(d) for the
    /// Brownian model and (1,...,1) for the lattice.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    /// Fit window; defaults to the last decade [tmax/10, tmax].
    #[arg(long)]
    pub window_lo: Option<f64>,
    #[arg(long)]
    pub window_hi: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::Lattice)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long, default_value_t = 100.0)]
    pub tmax: f64,
    /// Paths to emit (at most 10).
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    /// Candidate paths to search for survivors.
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainArg {
    OrthantComplement,
    NegativeOrthant,
    SigmaSlab,
    VSlab,
    Hemisphere,
    Lune,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VolumeArgs {
    #[arg(long, value_enum)]
    pub domain: DomainArg,
    #[arg(long)]
    pub dim: usize,
    /// Constrained coordinates of a v-slab.
    #[arg(long)]
    pub k: Option<usize>,
    /// Slab parameter.
    #[arg(long)]
    pub a: Option<f64>,
    /// Lune angle in radians.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BoundsArgs {
    /// Inclusive range `lo..hi` or a single dimension.
    #[arg(long, default_value = "4..12")]
    pub dims: DimRange,
    /// Sphere samples per Rayleigh estimate.
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralDomain {
    U3,
    Hemisphere,
    Lune,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SpectralArgs {
    #[arg(long, value_enum, default_value_t = SpectralDomain::U3)]
    pub domain: SpectralDomain,
    /// Lune angle in radians.
    #[arg(long, default_value_t = 1.5 * std::f64::consts::PI)]
    pub beta: f64,
    /// Colatitude intervals of the coarsest grid.
    #[arg(long, default_value_t = 32)]
    pub ntheta: usize,
    /// Azimuth intervals of the coarsest grid.
    #[arg(long, default_value_t = 64)]
    pub nphi: usize,
    /// Number of grids, each refining the previous by 2.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long, default_value = "1..6")]
    pub dims: DimRange,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub rayleigh_samples: usize,
    #[arg(long, default_value_t = 32)]
    pub spectral_ntheta: usize,
    #[arg(long, default_value_t = 4)]
    pub spectral_levels: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SelfcheckArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the recorded thread count.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Inclusive dimension range, written `lo..hi` or `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DimRange {
    pub lo: usize,
    pub hi: usize,
}

impl DimRange {
    pub fn dims(&self) -> Vec<usize> {
        (self.lo..=self.hi).collect()
    }
}

impl FromStr for DimRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad dimension {t:?}: {e}"))
        };
        match s.split_once("..") {
            Some((lo, hi)) => Ok(Self {
                lo: parse(lo)?,
                hi: parse(hi.trim_start_matches('='))?,
            }),
            None => {
                let d = parse(s)?;
                Ok(Self { lo: d, hi: d })
            }
        }
    }
}

impl TryFrom<String> for DimRange {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DimRange> for String {
    fn from(r: DimRange) -> String {
        format!("{}..{}", r.lo, r.hi)
    }
}

impl std::fmt::Display for DimRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

/// Sidecar written next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: serde_json::Map<String, Value>,
    pub seed: u64,
    pub threads: usize,
    pub artifact_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    fn new(cmd: &Command) -> Result<Self, CliError> {
        let tagged = serde_json::to_value(cmd).map_err(|e| CliError::Manifest(e.to_string()))?;
        let subcommand = tagged["subcommand"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let parameters = match &tagged["parameters"] {
            Value::Object(m) => m.clone(),
            _ => serde_json::Map::new(),
        };
        let common = cmd.common().expect("replay has no manifest of its own");
        Ok(Self {
            subcommand,
            parameters,
            seed: common.seed,
            threads: common.threads,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        })
    }

    /// The recorded command, with the recorded thread count.
    pub fn command(&self) -> Result<Command, CliError> {
        let tagged = json!({ "subcommand": self.subcommand, "parameters": self.parameters });
        let mut cmd: Command =
            serde_json::from_value(tagged).map_err(|e| CliError::Manifest(e.to_string()))?;
        if let Some(c) = cmd.common_mut() {
            c.threads = self.threads;
            c.seed = self.seed;
        }
        Ok(cmd)
    }
}

/// Path of the manifest sidecar for `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] orthant_lab::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("self-check failed: {0}")]
    Selfcheck(String),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Manifest(_) => 2,
            CliError::Engine(e) if e.is_numerical() => 3,
            CliError::Engine(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Selfcheck(_) => 3,
        }
    }
}

impl Command {
    fn common(&self) -> Option<&Common> {
        match self {
            Command::Simulate(a) => Some(&a.common),
            Command::Render(a) => Some(&a.common),
            Command::Volume(a) => Some(&a.common),
            Command::Bounds(a) => Some(&a.common),
            Command::Spectral(a) => Some(&a.common),
            Command::Report(a) => Some(&a.common),
            Command::Selfcheck(a) => Some(&a.common),
            Command::Replay(_) => None,
        }
    }

    fn common_mut(&mut self) -> Option<&mut Common> {
        match self {
            Command::Simulate(a) => Some(&mut a.common),
            Command::Render(a) => Some(&mut a.common),
            Command::Volume(a) => Some(&mut a.common),
            Command::Bounds(a) => Some(&mut a.common),
            Command::Spectral(a) => Some(&mut a.common),
            Command::Report(a) => Some(&mut a.common),
            Command::Selfcheck(a) => Some(&mut a.common),
            Command::Replay(_) => None,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command inside a thread pool of the requested size.
pub fn execute(cmd: Command) -> Result<(), CliError> {
    if let Command::Replay(r) = &cmd {
        let path = r.manifest.display().to_string();
        let text =
            std::fs::read_to_string(&r.manifest).map_err(|source| CliError::Io { path, source })?;
        let manifest: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Manifest(e.to_string()))?;
        let mut replayed = manifest.command()?;
        if let Command::Replay(_) = replayed {
            return Err(CliError::Manifest(
                "a manifest cannot record a replay".into(),
            ));
        }
        let c = replayed.common_mut().expect("not a replay");
        if r.out.is_some() {
            c.out = r.out.clone();
        }
        if let Some(t) = r.threads {
            c.threads = t;
        }
        return execute(replayed);
    }

    let common = cmd.common().expect("not a replay").clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    // Outputs are written before a numerical failure is reported, so a
    // failed fit still leaves its survival curve behind.
    let result = pool.install(|| dispatch(&cmd));
    if let Some(out) = &common.out {
        let mut manifest = RunManifest::new(&cmd)?;
        manifest.threads = pool.current_num_threads();
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Manifest(e.to_string()))?;
        write_file(&manifest_path(out), &(text + "\n"))?;
    }
    result
}

fn dispatch(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Render(a) => render(a),
        Command::Volume(a) => volume(a),
        Command::Bounds(a) => bounds(a),
        Command::Spectral(a) => spectral(a),
        Command::Report(a) => run_report(a),
        Command::Selfcheck(a) => selfcheck(a),
        Command::Replay(_) => unreachable!("handled by execute"),
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the primary output to `--out` or stdout.
fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Writes a secondary output next to `--out`, or to stderr.
fn emit_side(out: &Option<PathBuf>, extension: &str, content: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(&p.with_extension(extension), content),
        None => {
            eprint!("{content}");
            Ok(())
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn pretty(v: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Manifest(e.to_string()))
}

fn walk_config(
    dim: usize,
    model: ModelArg,
    step: f64,
    tmax: f64,
    paths: usize,
    seed: u64,
    start: Option<&Vec<f64>>,
) -> Result<WalkConfig, CliError> {
    let cfg = match model {
        ModelArg::Brownian => WalkConfig::brownian(dim, step, tmax, paths, seed)?,
        ModelArg::Lattice => WalkConfig::lattice(dim, tmax, paths, seed)?,
    };
    Ok(match start {
        Some(s) => cfg.with_start(s.clone())?,
        None => cfg,
    })
}

fn fit_json(
    a: &SimulateArgs,
    fit: &ExponentFit,
    sensitivity: Option<&ExponentFit>,
    censored: f64,
) -> Value {
    let step = match a.model {
        ModelArg::Brownian => a.step,
        ModelArg::Lattice => 1.0,
    };
    json!({
        "dim": fit.dim,
        "model": a.model,
        "step": step,
        "window": [fit.window.0, fit.window.1],
        "slope": fit.slope,
        "slope_stderr": fit.stderr,
        "p_hat": fit.p_hat,
        "p_stderr": fit.p_stderr,
        "lambda_hat": fit.lambda_hat,
        "r2": fit.r_squared,
        "censored_fraction": censored,
        "sensitivity": sensitivity.map(|s| json!({
            "window": [s.window.0, s.window.1],
            "p_hat": s.p_hat,
            "p_stderr": s.p_stderr,
        })),
    })
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = walk_config(
        a.dim,
        a.model,
        a.step,
        a.tmax,
        a.paths,
        a.common.seed,
        a.start.as_ref(),
    )?;
    let curve = survival_curve(&cfg)?;
    let mut csv = String::from("t,survival,stderr,alive,total\n");
    for i in 0..curve.times.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            curve.times[i], curve.survival[i], curve.stderr[i], curve.alive[i], curve.n_paths
        );
    }
    emit(&a.common.out, &csv)?;

    let (lo, hi) = default_window(a.tmax);
    let window = (a.window_lo.unwrap_or(lo), a.window_hi.unwrap_or(hi));
    let fit = fit_tail_exponent(&curve, window)?;
    let earlier = fit_tail_exponent(&curve, (window.0 / 10.0, window.0)).ok();
    let json = fit_json(a, &fit, earlier.as_ref(), curve.censored_fraction);
    emit_side(&a.common.out, "fit.json", &pretty(&json)?)
}

fn render(a: &RenderArgs) -> Result<(), CliError> {
    let cfg = walk_config(a.dim, a.model, a.step, a.tmax, a.paths, a.common.seed, None)?;
    let rows = render_paths(&cfg, a.count)?;
    let mut csv = String::from("path,step,t");
    for i in 1..=a.dim {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for r in &rows {
        let _ = write!(csv, "{},{},{}", r.path, r.step, r.t);
        for x in &r.position {
            let _ = write!(csv, ",{x}");
        }
        csv.push('\n');
    }
    emit(&a.common.out, &csv)
}

fn volume(a: &VolumeArgs) -> Result<(), CliError> {
    let need_a = || {
        a.a.ok_or_else(|| CliError::Usage("--a is required for slab domains".into()))
    };
    let domain = match a.domain {
        DomainArg::OrthantComplement => DomainSpec::OrthantComplement { dim: a.dim },
        DomainArg::NegativeOrthant => DomainSpec::NegativeOrthant { dim: a.dim },
        DomainArg::SigmaSlab => DomainSpec::SigmaSlab {
            dim: a.dim,
            a: need_a()?,
        },
        DomainArg::VSlab => DomainSpec::VSlab {
            dim: a.dim,
            k: a.k
                .ok_or_else(|| CliError::Usage("--k is required for v-slab".into()))?,
            a: need_a()?,
        },
        DomainArg::Hemisphere => DomainSpec::Hemisphere { dim: a.dim },
        DomainArg::Lune => DomainSpec::Lune {
            dim: a.dim,
            beta: a
                .beta
                .ok_or_else(|| CliError::Usage("--beta is required for lune".into()))?,
        },
    };
    let est = estimate_fraction(&domain, a.samples, &Substreams::new(a.common.seed))?;
    let bound = match (domain.slab_k(), domain.slab_a()) {
        (Some(k), Some(sa)) => Some(recursion_bound(k, a.dim, sa)?.bound_fraction),
        _ => None,
    };
    let csv = format!(
        "domain,dim,k,a,n,fraction,stderr,ci_lo,ci_hi,bound_fraction\n{},{},{},{},{},{},{},{},{},{}\n",
        domain.name(),
        domain.dim(),
        domain.slab_k().map_or_else(String::new, |k| k.to_string()),
        opt(domain.slab_a()),
        est.n,
        est.fraction,
        est.stderr,
        est.ci95.0,
        est.ci95.1,
        opt(bound),
    );
    emit(&a.common.out, &csv)
}

fn bounds(a: &BoundsArgs) -> Result<(), CliError> {
    let streams = Substreams::new(a.common.seed).fork("rayleigh");
    let mut csv = String::from("dim,lower,upper,upper_stderr,a_star,lower_ratio,upper_ratio\n");
    for d in a.dims.dims() {
        let b = eigenvalue_bounds(d, a.samples, &streams)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            b.dim,
            opt(b.lower),
            b.upper,
            b.upper_stderr,
            b.a_star,
            opt(b.lower_ratio),
            b.upper_ratio
        );
    }
    emit(&a.common.out, &csv)
}

fn spectral(a: &SpectralArgs) -> Result<(), CliError> {
    let domain = match a.domain {
        SpectralDomain::U3 => DomainSpec::OrthantComplement { dim: 3 },
        SpectralDomain::Hemisphere => DomainSpec::Hemisphere { dim: 3 },
        SpectralDomain::Lune => DomainSpec::Lune {
            dim: 3,
            beta: a.beta,
        },
    };
    if a.levels == 0 {
        return Err(CliError::Usage("--levels must be at least 1".into()));
    }
    let grid = GridSpec::new(a.ntheta, a.nphi, domain)?;
    let results = solve_levels(&grid, a.levels, a.tol)?;
    let ex = if results.len() >= 3 {
        Some(richardson_extrapolate(&results)?)
    } else {
        None
    };
    let json = json!({
        "domain": a.domain,
        "beta": matches!(a.domain, SpectralDomain::Lune).then_some(a.beta),
        "grids": results.iter().map(|r| json!({"n_theta": r.grid.n_theta, "n_phi": r.grid.n_phi})).collect::<Vec<_>>(),
        "lambdas": results.iter().map(|r| r.lambda).collect::<Vec<_>>(),
        "iterations": results.iter().map(|r| r.iterations).collect::<Vec<_>>(),
        "residuals": results.iter().map(|r| r.residual).collect::<Vec<_>>(),
        "extrapolated": ex.as_ref().map(|e| e.value),
        "q": ex.as_ref().map(|e| e.order).filter(|q| q.is_finite()),
        "warning": ex.as_ref().and_then(|e| e.warning.clone()),
    });
    emit(&a.common.out, &pretty(&json)?)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV rendering of report rows.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut csv = String::from(
        "dim,p_mc,p_mc_stderr,lambda_mc,lambda_mc_stderr,lambda_spectral,yamabe_lower,rayleigh_upper,rayleigh_stderr,lower_ratio,upper_ratio,sandwich_violation,notes\n",
    );
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dim,
            opt(r.p_mc),
            opt(r.p_mc_stderr),
            opt(r.lambda_mc),
            opt(r.lambda_mc_stderr),
            opt(r.lambda_spectral),
            opt(r.yamabe_lower),
            opt(r.rayleigh_upper),
            opt(r.rayleigh_stderr),
            opt(r.lower_ratio),
            opt(r.upper_ratio),
            r.sandwich_violation,
            csv_field(&r.notes.join("; ")),
        );
    }
    csv
}

fn run_report(a: &ReportArgs) -> Result<(), CliError> {
    let budgets = Budgets {
        paths: a.paths,
        step: a.step,
        t_max: a.tmax,
        rayleigh_samples: a.rayleigh_samples,
        spectral_n_theta: a.spectral_ntheta,
        spectral_levels: a.spectral_levels,
        ..Budgets::default()
    };
    let rows = report(&a.dims.dims(), &budgets, a.common.seed)?;
    emit(&a.common.out, &report_csv(&rows))?;
    emit_side(&a.common.out, "json", &pretty(&rows)?)
}

/// One closed-form oracle comparison.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The closed-form oracle suite behind `selfcheck`.
pub fn oracle_checks(seed: u64) -> Result<Vec<Check>, CliError> {
    let mut checks = Vec::new();
    let mut push = |name, passed, detail: String| {
        checks.push(Check {
            name,
            passed,
            detail,
        })
    };

    // One particle: P(tau > t) = erf(1 / sqrt(2t)), shifted by the monitoring
    // correction 0.5826 sqrt(h) for a discretely observed path.
    let h = 1e-3;
    let cfg = WalkConfig::brownian(1, h, 1.0, 20_000, seed)?.with_start(vec![1.0])?;
    let curve = survival_curve(&cfg)?;
    let (mut worst, mut worst_t) = (0.0f64, 0.0);
    let mut within = true;
    for (i, &t) in curve.times.iter().enumerate() {
        let exact = one_particle_survival(1.0, t);
        let allowance = one_particle_survival(1.0 + 0.5826 * h.sqrt(), t) - exact;
        let se = (exact * (1.0 - exact) / curve.n_paths as f64).sqrt();
        // One path of slack: far in the tail a single early exit is already
        // several normal-approximation standard errors.
        let gap = (curve.survival[i] - exact).abs() - 1.0 / curve.n_paths as f64;
        within &= gap <= 4.0 * se + allowance;
        if se > 0.0 && (gap - allowance) / se > worst {
            (worst, worst_t) = ((gap - allowance) / se, t);
        }
    }
    push(
        "erf",
        within,
        format!("max excess over allowance {worst:.3} sigma at t={worst_t:.4}"),
    );

    let n = 5_000;
    let sample = occupation_times(1, 1e-2, n, seed)?;
    let ks = ks_distance(&sample, arcsine_cdf);
    let crit = 1.63 / (n as f64).sqrt() + 0.005;
    push(
        "arcsine",
        ks <= crit,
        format!("KS {ks:.4} (limit {crit:.4})"),
    );

    let hemi = GridSpec::new(32, 64, DomainSpec::Hemisphere { dim: 3 })?;
    let e = richardson_extrapolate(&solve_levels(&hemi, 3, 1e-8)?)?;
    push(
        "hemisphere",
        (e.value - 2.0).abs() <= 1e-3,
        format!("lambda {:.6} (exact 2)", e.value),
    );

    let lune = GridSpec::new(
        32,
        64,
        DomainSpec::Lune {
            dim: 3,
            beta: 1.5 * std::f64::consts::PI,
        },
    )?;
    let e = richardson_extrapolate(&solve_levels(&lune, 3, 1e-8)?)?;
    push(
        "lune",
        (e.value - 10.0 / 9.0).abs() <= 0.02 * 10.0 / 9.0,
        format!("lambda {:.6} (exact 10/9)", e.value),
    );

    let p2 = p_from_lambda(4.0 / 9.0, 2)?;
    let l3 = lambda_from_p(0.4542, 3)?;
    let round = p_from_lambda(lambda_from_p(0.3, 7)?, 7)?;
    push(
        "conversions",
        (p2 - 2.0 / 3.0).abs() < 1e-12
            && (l3 - 0.4542 * 1.4542).abs() < 1e-12
            && (round - 0.3).abs() < 1e-12,
        format!("p(4/9, 2) = {p2}, lambda(0.4542, 3) = {l3}"),
    );

    let x = (7.0f64 / 8.0).powf(2.0 / 3.0);
    let y = yamabe_lower_bound(4)?;
    push(
        "yamabe",
        (y - 3.0 * (1.0 - x) / (4.0 * x)).abs() < 1e-12,
        format!("lower(4) = {y}"),
    );

    let est = estimate_fraction(
        &DomainSpec::NegativeOrthant { dim: 3 },
        200_000,
        &Substreams::new(seed),
    )?;
    push(
        "octant",
        (est.fraction - 0.125).abs() <= 4.0 * est.stderr,
        format!("fraction {} vs 1/8", est.fraction),
    );
    Ok(checks)
}

fn selfcheck(a: &SelfcheckArgs) -> Result<(), CliError> {
    let checks = oracle_checks(a.common.seed)?;
    for c in &checks {
        eprintln!(
            "{} {:<12} {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    emit(&a.common.out, &pretty(&checks)?)?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Selfcheck(failed.join(", ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dim_ranges() {
        assert_eq!(
            "1..6".parse::<DimRange>().unwrap().dims(),
            vec![1, 2, 3, 4, 5, 6]
        );
        assert_eq!("4..=5".parse::<DimRange>().unwrap().dims(), vec![4, 5]);
        assert_eq!("3".parse::<DimRange>().unwrap().dims(), vec![3]);
        assert!("2..1".parse::<DimRange>().unwrap().dims().is_empty());
        assert!("a..3".parse::<DimRange>().is_err());
        assert_eq!(String::from("2..9".parse::<DimRange>().unwrap()), "2..9");
    }

    #[test]
    fn manifest_round_trips_the_command() {
        let cli = Cli::try_parse_from([
            "orthant-lab",
            "volume",
            "--domain",
            "sigma-slab",
            "--dim",
            "5",
            "--a",
            "0.1",
            "--seed",
            "9",
        ])
        .unwrap();
        let m = RunManifest::new(&cli.command).unwrap();
        assert_eq!(m.subcommand, "volume");
        assert_eq!(m.seed, 9);
        let back = m.command().unwrap();
        assert_eq!(
            serde_json::to_value(&back).unwrap(),
            serde_json::to_value(&cli.command).unwrap()
        );
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            CliError::Engine(orthant_lab::Error::InvalidDimension(0)).exit_code(),
            2
        );
        assert_eq!(
            CliError::Engine(orthant_lab::Error::FitWindow("x".into())).exit_code(),
            3
        );
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a, b"), "\"a, b\"");
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
    }

    #[test]
    fn manifest_sidecar_name() {
        assert_eq!(
            manifest_path(Path::new("/tmp/a.csv")),
            PathBuf::from("/tmp/a.csv.manifest.json")
        );
    }
}
