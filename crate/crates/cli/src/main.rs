use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use stable_cz::density::{eval_density_fourier, eval_density_subordination, ProfileOptions, RadialProfile};
use stable_cz::kernel::{kernel_full, size_constant, smoothness_constant, Route};
use stable_cz::montecarlo::{self, PathConfig};
use stable_cz::multiplier::{compute_multiplier, tabulate};
use stable_cz::operator::{self, EpsilonSchedule};
use stable_cz::subordinator::{self, SubordinatorSpec};
use stable_cz::symbol::MatrixFile;
use stable_cz::verify::{self, CzOptions, StrongWeakOptions};
use stable_cz::{Geometry, MatrixSymbol, SampledField, StableSpec};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug, Serialize)]
#[command(name = "stablecz", version, about = "Stable-process singular integrals: kernels, multipliers, Monte Carlo and checks")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Serialize)]
struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override of the relative tolerance used by a suite or comparison.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Stable densities.
    #[command(subcommand)]
    Density(DensityCmd),
    /// Subordinator densities and hypothesis checks.
    #[command(subcommand)]
    Subordinator(SubordinatorCmd),
    /// Kernel values and homogeneity constants.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Fourier multipliers.
    #[command(subcommand)]
    Multiplier(MultiplierCmd),
    /// Apply T_A to a sampled field.
    Apply(ApplyArgs),
    /// Monte Carlo martingale transforms.
    #[command(subcommand)]
    Mc(McCmd),
    /// Verification suites.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// Norm ratios and weak-type profiles of a field pair.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Write a test field.
    Field(FieldArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct SpecArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    dim: usize,
    /// Relativistic mass (omit for the pure stable law).
    #[arg(long)]
    mass: Option<f64>,
}

impl SpecArgs {
    fn spec(&self) -> Result<StableSpec> {
        Ok(match self.mass {
            Some(m) => StableSpec::relativistic(self.alpha, self.dim, m)?,
            None => StableSpec::pure(self.alpha, self.dim)?,
        })
    }
}

#[derive(Subcommand, Debug, Serialize)]
enum DensityCmd {
    Eval {
        #[command(flatten)]
        spec: SpecArgs,
        /// Comma-separated point.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, value_enum, default_value_t = DensityRoute::Fourier)]
        route: DensityRoute,
        /// Decimal places printed.
        #[arg(long, default_value_t = 7)]
        precision: usize,
    },
    Profile {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long, default_value_t = 1e3)]
        r_max: f64,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum DensityRoute {
    Fourier,
    Subordination,
}

#[derive(Subcommand, Debug, Serialize)]
enum SubordinatorCmd {
    Eta {
        #[arg(long)]
        index: f64,
        #[arg(long, default_value_t = 0.0)]
        mass: f64,
        #[arg(long)]
        s: f64,
    },
    Check {
        #[arg(long)]
        index: f64,
        #[arg(long, default_value_t = 0.0)]
        mass: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug, Serialize)]
enum KernelCmd {
    Eval {
        #[command(flatten)]
        spec: SpecArgs,
        /// Catalog name or matrix JSON file.
        #[arg(long)]
        matrix: String,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        xt: String,
    },
    Constants {
        #[command(flatten)]
        spec: SpecArgs,
        /// One-based `i,j` or `i,j,k`; index n+1 is the vertical direction.
        #[arg(long)]
        entry: String,
        #[arg(long, value_enum, default_value_t = RouteArg::Semigroup)]
        route: RouteArg,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum RouteArg {
    Semigroup,
    General,
}

#[derive(Subcommand, Debug, Serialize)]
enum MultiplierCmd {
    Eval {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        matrix: String,
        #[arg(long, allow_hyphen_values = true)]
        xi: String,
    },
    Table {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        matrix: String,
        /// `L,N`.
        #[arg(long)]
        geometry: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum ApplyRoute {
    Multiplier,
    Pv,
}

#[derive(Args, Debug, Serialize)]
struct ApplyArgs {
    #[arg(long, value_enum, default_value_t = ApplyRoute::Multiplier)]
    route: ApplyRoute,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    matrix: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum ModeArg {
    Br,
    St,
}

#[derive(Args, Debug, Clone, Serialize)]
struct PathArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Br)]
    mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long)]
    matrix: String,
    #[arg(long)]
    f: PathBuf,
    /// Start height (br) or horizon (st).
    #[arg(long, default_value_t = 16.0)]
    height: f64,
    /// Largest time step (default depends on the mode).
    #[arg(long)]
    step: Option<f64>,
    /// Near-boundary step factor.
    #[arg(long)]
    relative_step: Option<f64>,
}

impl PathArgs {
    fn config(&self, field: &SampledField, seed: u64) -> Result<PathConfig> {
        let half = 0.5 * field.geometry.length;
        let mut c = match self.mode {
            ModeArg::Br => PathConfig::background_radiation(self.height, half, self.paths, seed),
            ModeArg::St => PathConfig::spacetime(self.height, half, self.paths, seed),
        };
        if let Some(s) = self.step {
            c.step = s;
        }
        if let Some(r) = self.relative_step {
            c.relative_step = r;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand, Debug, Serialize)]
enum McCmd {
    Run {
        #[command(flatten)]
        paths: PathArgs,
        #[arg(long)]
        out: PathBuf,
    },
    Duality {
        #[command(flatten)]
        paths: PathArgs,
        #[arg(long)]
        g: PathBuf,
        /// Exponent of the norm-preservation check.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Project {
        #[arg(long)]
        ensemble: PathBuf,
        #[arg(long)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug, Serialize)]
enum VerifyCmd {
    All(VerifyArgs),
    Cz(VerifyArgs),
    L2(VerifyArgs),
    StrongWeak(VerifyArgs),
    Corollaries {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    matrix: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Serialize)]
enum ReportCmd {
    Lp {
        #[arg(long)]
        p: f64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tf: PathBuf,
    },
    Weak {
        /// Comma-separated λ values (default: 60 points from 0.05 to 100).
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tf: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum FieldKind {
    Bump,
    Battery,
}

#[derive(Args, Debug, Serialize)]
struct FieldArgs {
    #[arg(long, value_enum, default_value_t = FieldKind::Bump)]
    kind: FieldKind,
    #[arg(long)]
    dim: usize,
    /// `L,N` (default depends on the dimension).
    #[arg(long)]
    geometry: Option<String>,
    /// Bump width (twice the Gaussian σ).
    #[arg(long, default_value_t = 2.0)]
    width: f64,
    /// Bump centre, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    center: Option<String>,
    /// Battery member by name (with --kind battery).
    #[arg(long)]
    member: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// A run whose checks failed; maps to exit code 1.
#[derive(Debug)]
struct Failed(String);

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for Failed {}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("not a number: {t:?}")))
        .collect()
}

fn parse_geometry(dim: usize, s: Option<&str>) -> Result<Geometry> {
    match s {
        None => Ok(Geometry::default_for(dim)?),
        Some(s) => {
            let v = parse_list(s)?;
            if v.len() != 2 || v[1].fract() != 0.0 || v[1] < 1.0 {
                bail!("geometry must be `L,N` with integer N");
            }
            Ok(Geometry::new(dim, v[0], v[1] as usize)?)
        }
    }
}

fn load_symbol(arg: &str, dim: usize) -> Result<MatrixSymbol> {
    let path = Path::new(arg);
    if path.extension().is_some_and(|e| e == "json") || path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading matrix file {arg}"))?;
        let file: MatrixFile = serde_json::from_str(&text).with_context(|| format!("parsing matrix file {arg}"))?;
        let sym = MatrixSymbol::from_file(&file)?;
        if sym.dim() != dim {
            bail!("matrix file {arg} has dimension {}, expected {dim}", sym.dim());
        }
        return Ok(sym);
    }
    Ok(MatrixSymbol::by_name(arg, dim)?)
}

fn load_field(path: &Path) -> Result<SampledField> {
    SampledField::from_file(path).with_context(|| format!("reading field {}", path.display()))
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(text.as_bytes())?;
    tmp.write_all(b"\n")?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn print_line(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

struct Ctx {
    config: Value,
    command: String,
}

impl Ctx {
    fn artifact(&self, result: impl Serialize) -> Result<Value> {
        Ok(json!({
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "result": serde_json::to_value(result)?,
        }))
    }

    fn emit(&self, out: Option<&Path>, result: impl Serialize) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.artifact(result)?)?;
        match out {
            Some(p) => write_atomic(p, &text),
            None => print_line(&text),
        }
    }

    /// Field files keep the loadable layout with the configuration alongside.
    fn emit_field(&self, out: &Path, field: &SampledField) -> Result<()> {
        let mut v: Value = serde_json::from_str(&field.to_json()?)?;
        v["config"] = self.config.clone();
        v["command"] = json!(self.command);
        write_atomic(out, &serde_json::to_string(&v)?)
    }
}

fn command_name(c: &Command) -> String {
    let v = serde_json::to_value(c).unwrap_or(Value::Null);
    let mut parts = Vec::new();
    let mut cur = &v;
    while let Value::Object(m) = cur {
        match m.iter().next() {
            Some((k, inner)) if m.len() == 1 && k.chars().next().is_some_and(|c| c.is_uppercase()) => {
                parts.push(k.to_lowercase());
                cur = inner;
            }
            _ => break,
        }
    }
    parts.join(" ")
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.global.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring the thread pool")?;
    }
    let ctx = Ctx { config: serde_json::to_value(&cli)?, command: command_name(&cli.command) };
    let seed = cli.global.seed;
    let tolerance = cli.global.tolerance;
    match &cli.command {
        Command::Density(DensityCmd::Eval { spec, x, route, precision }) => {
            let s = spec.spec()?;
            let x = parse_list(x)?;
            let v = match route {
                DensityRoute::Fourier => eval_density_fourier(&s, &x)?,
                DensityRoute::Subordination => eval_density_subordination(&s, &x)?,
            };
            println!("{v:.precision$}");
        }
        Command::Density(DensityCmd::Profile { spec, r_max, points, out }) => {
            let s = spec.spec()?;
            let opts = ProfileOptions { r_max: *r_max, points: *points, ..ProfileOptions::default() };
            let profile = RadialProfile::build_with(&s, opts)?;
            ctx.emit(Some(out), &profile)?;
        }
        Command::Subordinator(SubordinatorCmd::Eta { index, mass, s }) => {
            let sub = SubordinatorSpec::new(*index, *mass)?;
            println!("{:e}", subordinator::eval_eta(&sub, *s)?);
        }
        Command::Subordinator(SubordinatorCmd::Check { index, mass, out }) => {
            let sub = SubordinatorSpec::new(*index, *mass)?;
            ctx.emit(out.as_deref(), subordinator::check(&sub)?)?;
        }
        Command::Kernel(KernelCmd::Eval { spec, matrix, x, xt }) => {
            let s = spec.spec()?;
            let sym = load_symbol(matrix, s.dim)?;
            let k = kernel_full(&s, &sym, &parse_list(x)?, &parse_list(xt)?)?;
            println!("{:.12e} ± {:.1e}", k.value, k.quadrature_error);
        }
        Command::Kernel(KernelCmd::Constants { spec, entry, route }) => {
            let s = spec.spec()?;
            let idx: Vec<usize> = entry
                .split(',')
                .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad index {t:?}")))
                .collect::<Result<_>>()?;
            if !(idx.len() == 2 || idx.len() == 3) || idx.contains(&0) {
                bail!("--entry takes one-based `i,j` or `i,j,k`");
            }
            let route = match route {
                RouteArg::Semigroup => Route::Semigroup,
                RouteArg::General => Route::General,
            };
            let mut dir = vec![0.0; s.dim];
            dir[0] = 1.0;
            let size = size_constant(&s, idx[0] - 1, idx[1] - 1, &dir, route)?;
            let mut result = json!({ "entry": idx, "size": size });
            if idx.len() == 3 {
                result["smoothness"] = json!(smoothness_constant(&s, idx[0] - 1, idx[1] - 1, idx[2] - 1, &dir, route)?);
            }
            ctx.emit(None, result)?;
        }
        Command::Multiplier(MultiplierCmd::Eval { spec, matrix, xi }) => {
            let s = spec.spec()?;
            let sym = load_symbol(matrix, s.dim)?;
            let m = compute_multiplier(&s, &sym, &parse_list(xi)?)?;
            println!("{:.12e} {:.12e}", m.re, m.im);
        }
        Command::Multiplier(MultiplierCmd::Table { spec, matrix, geometry, out }) => {
            let s = spec.spec()?;
            let sym = load_symbol(matrix, s.dim)?;
            let g = parse_geometry(s.dim, Some(geometry))?;
            let table = tabulate(&s, &sym, &g)?;
            ctx.emit(Some(out), &*table)?;
        }
        Command::Apply(a) => {
            let s = a.spec.spec()?;
            let sym = load_symbol(&a.matrix, s.dim)?;
            let f = load_field(&a.input)?;
            let tf = match a.route {
                ApplyRoute::Multiplier => operator::apply_symbol(&f, &s, &sym)?,
                ApplyRoute::Pv => operator::apply_kernel_pv(&f, &s, &sym, &EpsilonSchedule::default())?.field,
            };
            ctx.emit_field(&a.out, &tf)?;
        }
        Command::Mc(McCmd::Run { paths, out }) => {
            let f = load_field(&paths.f)?;
            let spec = StableSpec::pure(paths.alpha, f.geometry.dim)?;
            let sym = load_symbol(&paths.matrix, f.geometry.dim)?;
            let cfg = paths.config(&f, seed)?;
            let e = montecarlo::run_paths(&cfg, &spec, &sym, &f)?;
            ctx.emit(Some(out), &e)?;
        }
        Command::Mc(McCmd::Duality { paths, g, p, out }) => {
            let f = load_field(&paths.f)?;
            let g = load_field(g)?;
            let spec = StableSpec::pure(paths.alpha, f.geometry.dim)?;
            let sym = load_symbol(&paths.matrix, f.geometry.dim)?;
            let cfg = paths.config(&f, seed)?;
            let e = montecarlo::run_paths(&cfg, &spec, &sym, &f)?;
            let d = montecarlo::check_duality(&e, &f, &g, &spec, &sym)?;
            let n = montecarlo::check_norm_preservation(&e, &f, *p)?;
            let pass = d.pass && n.pass;
            ctx.emit(out.as_deref(), json!({ "duality": d, "norm": n, "excluded": e.excluded, "pass": pass }))?;
            if !pass {
                return Err(Failed("Monte Carlo estimate outside 3 standard errors".into()).into());
            }
        }
        Command::Mc(McCmd::Project { ensemble, bins, out }) => {
            let text = std::fs::read_to_string(ensemble).with_context(|| format!("reading {}", ensemble.display()))?;
            let v: Value = serde_json::from_str(&text)?;
            let body = v.get("result").cloned().unwrap_or(v);
            let e: montecarlo::Ensemble = serde_json::from_value(body).context("parsing ensemble")?;
            ctx.emit(out.as_deref(), montecarlo::project(&e, *bins)?)?;
        }
        Command::Verify(cmd) => {
            let reports = match cmd {
                VerifyCmd::Corollaries { spec, .. } => vec![verify::suite_corollaries(&spec.spec()?)?],
                VerifyCmd::All(a) | VerifyCmd::Cz(a) | VerifyCmd::L2(a) | VerifyCmd::StrongWeak(a) => {
                    let s = a.spec.spec()?;
                    let sym = load_symbol(&a.matrix, s.dim)?;
                    let mut cz = CzOptions::default();
                    let mut sw = StrongWeakOptions::for_dim(s.dim)?;
                    if let Some(t) = tolerance {
                        cz.stability = t;
                        sw.slack = t;
                    }
                    let fields = || operator::battery(&Geometry::default_for(s.dim)?, seed);
                    match cmd {
                        VerifyCmd::All(_) => verify::verify_all(&s, &sym, seed)?,
                        VerifyCmd::Cz(_) => vec![verify::suite_cz_bounds(&s, &sym, &cz)?],
                        VerifyCmd::L2(_) => vec![verify::suite_l2(&s, &sym, &fields()?)?],
                        _ => vec![verify::suite_strong_weak(&s, &sym, &fields()?, &sw)?],
                    }
                }
            };
            let out = match cmd {
                VerifyCmd::Corollaries { out, .. } => out.as_deref(),
                VerifyCmd::All(a) | VerifyCmd::Cz(a) | VerifyCmd::L2(a) | VerifyCmd::StrongWeak(a) => a.out.as_deref(),
            };
            ctx.emit(out, &reports)?;
            let failed: Vec<String> =
                reports.iter().filter(|r| !r.pass).map(|r| {
                    let names: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
                    format!("{} ({})", r.suite, names.join(", "))
                }).collect();
            if !failed.is_empty() {
                return Err(Failed(failed.join("; ")).into());
            }
        }
        Command::Report(ReportCmd::Lp { p, input, tf }) => {
            let f = load_field(input)?;
            let t = load_field(tf)?;
            println!("{:.10}", operator::lp_ratio(&t, &f, *p)?);
        }
        Command::Report(ReportCmd::Weak { lambdas, input, tf, out }) => {
            let f = load_field(input)?;
            let t = load_field(tf)?;
            let lambdas = match lambdas {
                Some(l) => parse_list(l)?,
                None => stable_cz::quad::geomspace(0.05, 100.0, 60),
            };
            let profile = operator::weak_profile(&t, &f, &lambdas)?;
            let sup = profile.iter().cloned().fold(0.0, f64::max);
            ctx.emit(out.as_deref(), json!({ "lambdas": lambdas, "profile": profile, "sup": sup }))?;
        }
        Command::Field(a) => {
            let g = parse_geometry(a.dim, a.geometry.as_deref())?;
            let field = match a.kind {
                FieldKind::Bump => {
                    let c = match &a.center {
                        Some(c) => parse_list(c)?,
                        None => vec![0.0; a.dim],
                    };
                    if c.len() != a.dim {
                        bail!("--center needs {} coordinates", a.dim);
                    }
                    let s = a.width / 2.0;
                    SampledField::from_fn(g, "bump", |x| {
                        let r2: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                        (-r2 / (2.0 * s * s)).exp()
                    })?
                }
                FieldKind::Battery => {
                    let all = operator::battery(&g, seed)?;
                    let names: Vec<String> = all.iter().map(|f| f.name.clone()).collect();
                    let want = a.member.as_deref().unwrap_or("bump_w1");
                    all.into_iter()
                        .find(|f| f.name == want)
                        .with_context(|| format!("no battery member {want:?}; have {}", names.join(", ")))?
                }
            };
            ctx.emit_field(&a.out, &field)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Failed>().is_some() {
                return ExitCode::from(1);
            }
            match e.downcast_ref::<stable_cz::Error>() {
                Some(stable_cz::Error::InvalidParameter(_) | stable_cz::Error::Geometry(_) | stable_cz::Error::Unsupported(_)) => {
                    ExitCode::from(2)
                }
                Some(_) => ExitCode::from(1),
                // Input files and argument parsing.
                None => ExitCode::from(2),
            }
        }
    }
}
