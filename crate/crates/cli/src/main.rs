//! `fredholm` command-line front end.

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use fredholm_core::adaptive::{algorithm1, DiscrepancyConfig, ErrSysVariant, LadderConfig, SolverPath};
use fredholm_core::checks::{self, CheckReport, ErrorBoundSetup};
use fredholm_core::experiments::{emit_table, run_experiment, ExperimentConfig, TableFormat};
use fredholm_core::kernels::Kernel;
use fredholm_core::quadrature_svd::{build_collocation, grid_estimate};
use fredholm_core::rng::NoiseDistribution;
use fredholm_core::sampling::{delta_from_snr, read_csv, write_csv, ForwardModel, GridScheme, GridSpec, NoisySample};
use fredholm_core::spectral_deriv2::{self, Deriv2Spectral};
use fredholm_core::{linalg, Error};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "fredholm", version, about = "Spectral cut-off solver for first-kind Fredholm equations with data averaging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the built-in test problems.
    List,
    /// Write a noisy sample of a test problem as CSV (index,xi,exact,noisy).
    Simulate(SimulateArgs),
    /// Spectral cut-off estimate with a fixed truncation index.
    Solve(SolveArgs),
    /// Discrepancy principle with adaptive choice of the averaging level.
    Adapt(AdaptArgs),
    /// Monte Carlo error tables.
    Table(TableArgs),
    /// Check a bound numerically; exit status 2 if it is violated.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Distribution {
    Gaussian,
    HeavyTailed,
}

impl From<Distribution> for NoiseDistribution {
    fn from(d: Distribution) -> Self {
        match d {
            Distribution::Gaussian => NoiseDistribution::Gaussian,
            Distribution::HeavyTailed => NoiseDistribution::HeavyTailed,
        }
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("noise").required(true).args(["snr", "delta"])))]
struct NoiseArgs {
    /// Signal-to-noise ratio ||g|| / (sqrt(m) delta).
    #[arg(long)]
    snr: Option<f64>,
    /// Noise standard deviation of each sample.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    distribution: Distribution,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    m: usize,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    m: usize,
    /// Truncation index.
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Read data written by `simulate` instead of sampling.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output CSV of (x, value); standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the (j, sigma_j) pairs of the discretized operator.
    #[arg(long)]
    dump_spectrum: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("errsys").required(true).args(["gprime_norm", "gpp_inf"])))]
struct AdaptArgs {
    #[arg(long)]
    kernel: String,
    /// Number of raw samples, a power of `a`.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 4)]
    a: usize,
    /// The coarsest level is a^n0.
    #[arg(long, default_value_t = 1)]
    n0: u32,
    #[arg(long, default_value_t = 1.5)]
    tau: f64,
    /// Noise standard deviation of each raw sample.
    #[arg(long)]
    delta: f64,
    /// ||g'|| for the systematic error ||g'||^2 / m_o.
    #[arg(long)]
    gprime_norm: Option<f64>,
    /// ||g''||_inf for the systematic error ||g''||_inf^2 / (576 m_o^3).
    #[arg(long)]
    gpp_inf: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    distribution: Distribution,
    /// Read data written by `simulate` instead of sampling.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Output JSON file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Markdown,
    Csv,
    Json,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Markdown => TableFormat::Markdown,
            Format::Csv => TableFormat::Csv,
            Format::Json => TableFormat::Json,
        }
    }
}

#[derive(Args, Debug)]
struct TableArgs {
    /// Problem names, comma separated.
    #[arg(long, value_delimiter = ',')]
    problem: Vec<String>,
    /// Smoothness indices for deriv2, comma separated.
    #[arg(long, value_delimiter = ',')]
    s: Vec<f64>,
    /// SNR values, comma separated.
    #[arg(long, value_delimiter = ',')]
    snr: Vec<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Averaging levels m_o, comma separated.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<usize>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Results directory, one file per table; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of key=value lines; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Check {
    /// Singular value perturbation.
    Lem00,
    /// Near-orthonormality of the reconstructed singular functions.
    Lem002,
    /// Sandwich of the deriv2 variance sum.
    VarianceSum,
    /// Averaging bias of sin(2 pi x).
    AveragingBias,
    /// Monte Carlo RMS error against the error bound.
    Thm4,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    check: Check,
    #[arg(long, default_value = "deriv2")]
    kernel: String,
    #[arg(long)]
    m: usize,
    /// Averaging factors for averaging-bias.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16])]
    factors: Vec<usize>,
    /// Monte Carlo runs for thm4.
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// SNR for thm4.
    #[arg(long, default_value_t = 64.0)]
    snr: f64,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::Io(_) | Error::Serde(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 2, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::List => {
            print!("{}", list_text());
            Ok(())
        }
        Command::Simulate(a) => simulate(a),
        Command::Solve(a) => solve(a),
        Command::Adapt(a) => adapt(a),
        Command::Table(a) => table(a),
        Command::Bounds(a) => bounds(a),
    }
}

fn list_text() -> String {
    let mut s = Kernel::builtin_names().join(" ");
    s.push('\n');
    s.push_str("  deriv2   kappa(x,y) = min(x(1-y), y(1-x)); nodes l/(m+1); closed-form spectrum; --s for tables\n");
    s.push_str("  gravity  kappa(x,y) = d (d^2 + (x-y)^2)^(-3/2), d = 0.25; midpoint rule\n");
    s.push_str("  heat     kappa(x,y) = heat kernel of t = x - y, kappa = 1 (Volterra); right-endpoint rule\n");
    s
}

/// Write to a temporary file beside `path`, then rename.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| usage(format!("invalid output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(p) => write_atomic(p, contents.as_bytes()),
        None => {
            std::io::stdout().write_all(contents.as_bytes())?;
            Ok(())
        }
    }
}

fn scheme_for(kernel: &Kernel) -> GridScheme {
    if kernel.name == "deriv2" {
        GridScheme::UniformInterior
    } else {
        GridScheme::Midpoint
    }
}

fn simulated(kernel: &Kernel, m: usize, noise: &NoiseArgs) -> Result<NoisySample, Failure> {
    if m == 0 {
        return Err(usage("--m must be positive"));
    }
    let model = ForwardModel::new(kernel.clone(), kernel.default_solution());
    let grid = GridSpec { m, scheme: scheme_for(kernel) };
    let delta = match (noise.snr, noise.delta) {
        (Some(snr), _) => delta_from_snr(linalg::norm(&model.exact_data(&grid)), m, snr)?,
        (None, Some(d)) if d >= 0.0 => d,
        _ => return Err(usage("--delta must be nonnegative")),
    };
    Ok(model.sample(grid, delta, noise.seed, 0, noise.distribution.into()))
}

fn read_input(path: &Path, delta: f64) -> Result<NoisySample, Failure> {
    let f = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(read_csv(BufReader::new(f), delta)?)
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let kernel = Kernel::by_name(&a.kernel)?;
    let sample = simulated(&kernel, a.m, &a.noise)?;
    let mut buf = Vec::new();
    write_csv(&sample, &mut buf)?;
    emit(a.out.as_deref(), &String::from_utf8(buf).expect("ascii csv"))
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let kernel = Kernel::by_name(&a.kernel)?;
    let sample = match &a.input {
        Some(p) => read_input(p, a.noise.delta.unwrap_or(0.0))?,
        None => simulated(&kernel, a.m, &a.noise)?,
    };
    if sample.grid.m != a.m {
        return Err(usage(format!("input has {} points, --m is {}", sample.grid.m, a.m)));
    }
    let points = sample.grid.points();
    let (values, sigma) = if kernel.name == "deriv2" {
        let spec = Deriv2Spectral::new(a.m)?;
        let est = spectral_deriv2::estimate(&spec, &sample, a.k)?;
        (points.iter().map(|&x| est.eval(x)).collect::<Vec<_>>(), spec.sigma.clone())
    } else {
        let sys = build_collocation(&kernel, a.m)?;
        let est = grid_estimate(&sys, &sample, a.k)?;
        (est.values, sys.sigma().to_vec())
    };
    let mut csv = String::from("x,value\n");
    for (x, v) in points.iter().zip(&values) {
        writeln!(csv, "{x},{v}").expect("write to string");
    }
    if let Some(p) = &a.dump_spectrum {
        let mut s = String::from("j,sigma\n");
        for (j, v) in sigma.iter().enumerate() {
            writeln!(s, "{},{v}", j + 1).expect("write to string");
        }
        write_atomic(p, s.as_bytes())?;
    }
    emit(a.out.as_deref(), &csv)
}

fn adapt(a: AdaptArgs) -> Result<(), Failure> {
    let kernel = Kernel::by_name(&a.kernel)?;
    let (err_sys_variant, g_prime_norm, g_pp_inf) = match (a.gprime_norm, a.gpp_inf) {
        (Some(n), _) => (ErrSysVariant::Gprime, n, 0.0),
        (None, Some(n)) => (ErrSysVariant::Gpp, 0.0, n),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    let cfg = DiscrepancyConfig { tau: a.tau, err_sys_variant, g_prime_norm, g_pp_inf, delta: a.delta };
    let ladder = LadderConfig::for_data(a.m, a.a, a.n0)?;
    let data = match &a.input {
        Some(p) => read_input(p, a.delta)?,
        None => {
            let noise = NoiseArgs { snr: None, delta: Some(a.delta), seed: a.seed, distribution: a.distribution };
            simulated(&kernel, a.m, &noise)?
        }
    };
    if data.grid.m != a.m || data.grid.scheme != scheme_for(&kernel) {
        return Err(usage(format!("input grid does not match kernel {} with m = {}", kernel.name, a.m)));
    }
    let path = if kernel.name == "deriv2" { SolverPath::Deriv2 } else { SolverPath::Quadrature };
    let result = algorithm1(&data, &cfg, &ladder, path, &kernel)?;
    let json = serde_json::json!({
        "kernel": kernel.name,
        "m": a.m,
        "delta": a.delta,
        "tau": a.tau,
        "err_sys": err_sys_variant,
        "levels": ladder.levels(),
        "trajectory": result.trajectory.iter().map(|&(m_o, k)| serde_json::json!({"m_o": m_o, "k_dp": k})).collect::<Vec<_>>(),
        "chosen_level": result.chosen_level,
        "chosen_k": result.chosen_k,
    });
    let text = serde_json::to_string_pretty(&json).map_err(Error::from)? + "\n";
    emit(a.out.as_deref(), &text)
}

/// Parsed `key=value` configuration.
#[derive(Debug, Default)]
struct TableConfig {
    problem: Vec<String>,
    s: Vec<f64>,
    snr: Vec<f64>,
    levels: Vec<usize>,
    runs: Option<usize>,
    seed: Option<u64>,
    tau: Option<f64>,
    m: Option<usize>,
    a: Option<usize>,
    d_ref: Option<usize>,
    format: Option<Format>,
    distribution: Option<Distribution>,
    err_sys: Option<ErrSysVariant>,
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, Failure> {
    v.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| usage(format!("config: bad value '{x}' for {key}"))))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, Failure> {
    v.trim().parse::<T>().map_err(|_| usage(format!("config: bad value '{v}' for {key}")))
}

fn parse_config(text: &str) -> Result<TableConfig, Failure> {
    let mut c = TableConfig::default();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, v) = line.split_once('=').ok_or_else(|| usage(format!("config line {}: expected key=value", n + 1)))?;
        let key = key.trim();
        match key {
            "problem" => c.problem = v.split(',').map(|s| s.trim().to_string()).collect(),
            "s" => c.s = parse_list(key, v)?,
            "snr" => c.snr = parse_list(key, v)?,
            "levels" => c.levels = parse_list(key, v)?,
            "runs" => c.runs = Some(parse_one(key, v)?),
            "seed" => c.seed = Some(parse_one(key, v)?),
            "tau" => c.tau = Some(parse_one(key, v)?),
            "m" => c.m = Some(parse_one(key, v)?),
            "a" => c.a = Some(parse_one(key, v)?),
            "d_ref" => c.d_ref = Some(parse_one(key, v)?),
            "format" => c.format = Some(Format::from_str(v.trim(), true).map_err(usage)?),
            "distribution" => c.distribution = Some(Distribution::from_str(v.trim(), true).map_err(usage)?),
            "err_sys" => {
                c.err_sys = Some(match v.trim() {
                    "gprime" => ErrSysVariant::Gprime,
                    "gpp" => ErrSysVariant::Gpp,
                    other => return Err(usage(format!("config: unknown err_sys '{other}'"))),
                })
            }
            other => return Err(usage(format!("config line {}: unknown key '{other}'", n + 1))),
        }
    }
    Ok(c)
}

fn table(a: TableArgs) -> Result<(), Failure> {
    let file = match &a.config {
        Some(p) => parse_config(&fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?)?,
        None => TableConfig::default(),
    };
    let pick = |cli: Vec<f64>, cfg: Vec<f64>| if cli.is_empty() { cfg } else { cli };
    let problems = if !a.problem.is_empty() {
        a.problem.clone()
    } else if !file.problem.is_empty() {
        file.problem.clone()
    } else {
        vec!["deriv2".to_string()]
    };
    let s_list = pick(a.s.clone(), file.s.clone());
    let s_list = if s_list.is_empty() { vec![0.375] } else { s_list };
    let format: TableFormat = a.format.or(file.format).unwrap_or(Format::Markdown).into();

    let mut jobs = Vec::new();
    for p in &problems {
        let ss: Vec<Option<f64>> = if p == "deriv2" { s_list.iter().copied().map(Some).collect() } else { vec![None] };
        for s in ss {
            let mut cfg = ExperimentConfig::for_problem(p, s.unwrap_or(0.0))?;
            let snr = pick(a.snr.clone(), file.snr.clone());
            if !snr.is_empty() {
                cfg.snr_list = snr;
            }
            let levels = if a.levels.is_empty() { file.levels.clone() } else { a.levels.clone() };
            if !levels.is_empty() {
                cfg.levels = levels;
            }
            if let Some(v) = a.m.or(file.m) {
                cfg.m = v;
                cfg.d_ref = cfg.d_ref.max(2 * v);
            }
            if let Some(v) = a.runs.or(file.runs) {
                cfg.runs = v;
            }
            if let Some(v) = a.seed.or(file.seed) {
                cfg.seed = v;
            }
            if let Some(v) = a.tau.or(file.tau) {
                cfg.tau = v;
            }
            if let Some(v) = file.a {
                cfg.a = v;
            }
            if let Some(v) = file.d_ref {
                cfg.d_ref = v;
            }
            if let Some(v) = file.distribution {
                cfg.distribution = v.into();
            }
            if let Some(v) = file.err_sys {
                cfg.err_sys = v;
            }
            cfg.validate()?;
            let name = match s {
                Some(s) => format!("table_{p}_s{s}"),
                None => format!("table_{p}"),
            };
            jobs.push((name, cfg));
        }
    }
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
    }
    for (name, cfg) in jobs {
        let report = run_experiment(&cfg)?;
        let text = emit_table(&report, format)?;
        match &a.out {
            Some(dir) => {
                let path = dir.join(format!("{name}.{}", format.extension()));
                write_atomic(&path, text.as_bytes())?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{text}"),
        }
    }
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<(), Failure> {
    let kernel = Kernel::by_name(&a.kernel)?;
    let report: CheckReport = match a.check {
        Check::Lem00 => checks::singular_value_perturbation(&kernel, a.m)?,
        Check::Lem002 => checks::near_orthonormality(&kernel, a.m)?,
        Check::VarianceSum => {
            if kernel.name != "deriv2" {
                return Err(usage("variance-sum applies to deriv2 only"));
            }
            checks::variance_sum(a.m)?
        }
        Check::AveragingBias => checks::averaging_bias(a.m, &a.factors)?,
        Check::Thm4 => checks::error_bound(&ErrorBoundSetup {
            solution: kernel.default_solution(),
            kernel,
            m: a.m,
            snr: a.snr,
            runs: a.runs,
            seed: a.seed,
            rel_slack: 1e-12,
            extra_k: 5,
        })?,
    };
    println!("{}", report.summary());
    for n in &report.notes {
        println!("  {n}");
    }
    if report.satisfied {
        Ok(())
    } else {
        Err(Failure { code: 2, message: format!("{} bound violated", report.name) })
    }
}
