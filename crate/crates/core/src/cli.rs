//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage and
//! configuration errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::QError;
use crate::qcalc::jackson_integral;
use crate::qcore::{QParam, SeriesPolicy};
use crate::qestim::{default_bandwidth, default_floor, estimate_regression, linear_grid, EstimatorConfig, Sample};
use crate::qkernels::{kernel_moment, make_kernel, KernelKind, QKernel};
use crate::qsim::{run_experiment, ExperimentConfig};
use crate::qtheory::{theory_report, ModelSpec, TargetModel, TheoryInputs};

const DEFAULT_Q: f64 = 0.9;
const DEFAULT_TOL: f64 = 1e-12;
const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "qkernel", version, about = "q-calculus kernel estimation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Jackson integral of a built-in function over [a, b].
    #[command(allow_negative_numbers = true)]
    Integrate {
        /// Integrand.
        expr: Expr,
        /// Lower limit.
        a: f64,
        /// Upper limit.
        b: f64,
        /// Deformation parameter in (0, 1); same as --q.
        #[arg(conflicts_with = "q")]
        q_value: Option<f64>,
        /// Deformation parameter in (0, 1) [default: 0.9].
        #[arg(long)]
        q: Option<f64>,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Build a kernel and print its constants and identity checks.
    KernelCheck {
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        series: SeriesArgs,
    },
    /// Estimate f, g and r from a CSV sample with header `x,y`.
    Estimate {
        /// Input CSV file.
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Bandwidth [default: n^(-1/5)].
        #[arg(long)]
        h: Option<f64>,
        /// Density floor [default: max(0.001, n^(-1/10))].
        #[arg(long)]
        b: Option<f64>,
        /// Evaluation grid `lo:hi:count` [default: 512 points over the data range].
        #[arg(long, allow_hyphen_values = true, value_parser = parse_grid)]
        grid: Option<GridArg>,
        /// Output CSV file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the theoretical predictions on a synthetic model as JSON.
    Theory {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Model JSON file [default: bell density on [-3, 3], r(x) = 2x + sin x, uniform noise].
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sample size.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Bandwidth [default: n^(-1/5)].
        #[arg(long)]
        h: Option<f64>,
        /// Power k of the rate and Bernstein terms (0 or 1).
        #[arg(long, default_value_t = 0)]
        k: u32,
        /// Constant c0 of the rate.
        #[arg(long, default_value_t = 1.0)]
        c0: f64,
        /// Constant L of the rate; must exceed sqrt(2 [2]_q).
        #[arg(long = "L", default_value_t = 2.0)]
        l: f64,
        /// Evaluation grid `lo:hi:count`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_grid, default_value = "-1:1:5")]
        grid: GridArg,
        /// Points on the Bernstein curve.
        #[arg(long, default_value_t = 20)]
        t_points: usize,
        /// Output JSON file [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment from a JSON config and write its reports.
    Experiment {
        /// Experiment config JSON.
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expr {
    X,
    X2,
    X3,
    Sin,
    Const1,
}

impl Expr {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Expr::X => x,
            Expr::X2 => x * x,
            Expr::X3 => x * x * x,
            Expr::Sin => x.sin(),
            Expr::Const1 => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Gaussian,
    Poly,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel family.
    #[arg(long, value_enum, default_value_t = KernelName::Poly)]
    pub kernel: KernelName,
    /// Exponent p of the polynomial kernel.
    #[arg(long, default_value_t = 1)]
    pub p: u32,
    /// Deformation parameter in (0, 1).
    #[arg(long, default_value_t = DEFAULT_Q)]
    pub q: f64,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Series truncation tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Maximum number of series terms [default: enough for q].
    #[arg(long)]
    pub max_terms: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridArg {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

fn parse_grid(s: &str) -> Result<GridArg, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(format!("expected lo:hi:count, got `{s}`"));
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    let count: usize = count.parse().map_err(|_| format!("bad count `{count}`"))?;
    if !(lo <= hi) || count == 0 || (count > 1 && lo == hi) {
        return Err(format!("grid needs lo < hi and count >= 1, got `{s}`"));
    }
    Ok(GridArg { lo, hi, count })
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<QError> for CliError {
    fn from(e: QError) -> Self {
        match e {
            QError::Config(_) | QError::InvalidParameter(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn qparam(q: f64) -> Result<QParam, CliError> {
    QParam::new(q).map_err(|e| CliError::Usage(e.to_string()))
}

fn policy(q: QParam, series: &SeriesArgs) -> Result<SeriesPolicy, CliError> {
    let p = match series.max_terms {
        Some(m) => SeriesPolicy::new(series.tol, m),
        None => SeriesPolicy::scaled_for(q, series.tol),
    };
    p.map_err(|e| CliError::Usage(e.to_string()))
}

fn build_kernel(args: &KernelArgs, series: &SeriesArgs) -> Result<QKernel, CliError> {
    let q = qparam(args.q)?;
    let kind = match args.kernel {
        KernelName::Gaussian => KernelKind::Gaussian,
        KernelName::Poly => KernelKind::Polynomial { p: args.p },
    };
    Ok(make_kernel(kind, q, &policy(q, series)?)?)
}

fn default_series() -> SeriesArgs {
    SeriesArgs { tol: 1e-14, max_terms: None }
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

/// Executes a parsed command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Integrate { expr, a, b, q_value, q, series } => {
            let q = qparam(q_value.or(q).unwrap_or(DEFAULT_Q))?;
            let res = jackson_integral(|x| expr.eval(x), a, b, q, &policy(q, &series)?)?;
            writeln!(out, "value: {}", res.value)?;
            writeln!(out, "terms_used: {}", res.terms_used)?;
            writeln!(out, "truncation_complete: {}", res.truncation_complete)?;
            writeln!(out, "tail_bound_estimate: {:e}", res.tail_bound_estimate)?;
        }
        Command::KernelCheck { kernel, series } => {
            let k = build_kernel(&kernel, &series)?;
            let p = policy(k.q(), &series)?;
            writeln!(out, "kernel: {}", k.kind())?;
            writeln!(out, "q: {}", k.q().value())?;
            writeln!(out, "support_halfwidth: {}", k.support_halfwidth())?;
            writeln!(out, "norm_const: {}", k.norm_const())?;
            writeln!(out, "sup_bound: {}", k.sup_bound())?;
            writeln!(out, "integral: {}", kernel_moment(&k, 0, 1, &p)?)?;
            for m in 1..=3 {
                writeln!(out, "odd_moment_k{m}: {:e}", kernel_moment(&k, 1, m, &p)?)?;
            }
            writeln!(out, "moment2: {}", k.moment2())?;
            writeln!(out, "square_integral: {}", k.square_integral())?;
            writeln!(out, "cube_integral: {}", k.cube_integral())?;
        }
        Command::Estimate { input, kernel, h, b, grid, out: out_path } => {
            let sample = Sample::from_csv_path(&input).map_err(|e| CliError::Runtime(format!("{}: {e}", input.display())))?;
            let n = sample.n();
            let k = build_kernel(&kernel, &default_series())?;
            let grid = match grid {
                Some(g) => linear_grid(g.lo, g.hi, g.count),
                None => {
                    let lo = sample.xs().iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = sample.xs().iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if lo == hi { vec![lo] } else { linear_grid(lo, hi, DEFAULT_GRID_POINTS) }
                }
            };
            let cfg = EstimatorConfig::new(k, h.unwrap_or_else(|| default_bandwidth(n)), b.unwrap_or_else(|| default_floor(n)), grid)?;
            let est = estimate_regression(&sample, &cfg);
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| CliError::Runtime(e.to_string());
            w.write_record(["x", "f_hat", "g_hat", "r_hat", "floored"]).map_err(io)?;
            for i in 0..cfg.grid.len() {
                w.write_record([
                    cfg.grid[i].to_string(),
                    est.f_hat[i].to_string(),
                    est.g_hat[i].to_string(),
                    est.r_hat[i].to_string(),
                    est.floored_mask[i].to_string(),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
            emit(out, out_path.as_ref(), &String::from_utf8_lossy(&bytes))?;
        }
        Command::Theory { kernel, model, n, h, k, c0, l, grid, t_points, out: out_path } => {
            let spec = match model {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<ModelSpec>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
                }
                None => ModelSpec::default(),
            };
            let model = TargetModel::from_spec(&spec)?;
            let kern = build_kernel(&kernel, &default_series())?;
            let inputs = TheoryInputs {
                n,
                h: h.unwrap_or_else(|| default_bandwidth(n)),
                k,
                c0,
                l,
                grid: linear_grid(grid.lo, grid.hi, grid.count),
                t_points,
            };
            let report = theory_report(&model, &kern, &inputs).map_err(|e| match e {
                QError::Parameter(m) => CliError::Usage(m),
                other => other.into(),
            })?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
            emit(out, out_path.as_ref(), &(json + "\n"))?;
        }
        Command::Experiment { config, out: out_dir, seed } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = run_experiment(&cfg)?;
            report.write(&out_dir)?;
            for c in report.checks() {
                writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.check, c.detail)?;
            }
            writeln!(out, "reports: {}/{}-{}-*", out_dir.display(), cfg.name, report.hash)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
