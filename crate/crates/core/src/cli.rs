//! Command-line interface.
//!
//! Data goes to standard output (JSON by default, CSV with `--format csv`),
//! diagnostics go to standard error as a single line. Exit codes: 0 success,
//! 1 verification failure, 2 usage or domain error.

use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::deviations::{bahadur_rao_log, normal_tail, rate_lambda, tilt_tau, PrefactorMode};
use crate::diagnostics::{
    berry_esseen_sup, convergence_sweep, cramer_envelope_fit, mdp_sweep, pn_sweep, to_csv, verification_battery,
    GridSpec, BE_GRID_POINTS, ENVELOPE_T_POINTS,
};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::exact_oracle::{exact_tail_with, r_scale, Boundary, QuantileProblem, Side};
use crate::montecarlo::{empirical_tail, EmpiricalTail, SimConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "QDEV_THREADS";

#[derive(Debug, Parser)]
#[command(name = "qdev", version, about = "Exact, asymptotic and simulated tail probabilities of sample quantiles")]
pub struct Cli {
    /// Output format for data written to standard output.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SideArg {
    Upper,
    Lower,
    Both,
}

impl SideArg {
    fn sides(self) -> Vec<Side> {
        match self {
            SideArg::Upper => vec![Side::Upper],
            SideArg::Lower => vec![Side::Lower],
            SideArg::Both => Side::BOTH.to_vec(),
        }
    }

    fn single(self) -> Result<Side> {
        match self {
            SideArg::Upper => Ok(Side::Upper),
            SideArg::Lower => Ok(Side::Lower),
            SideArg::Both => Err(Error::Domain("this command needs --side upper or --side lower".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundaryArg {
    Inclusive,
    Strict,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Inclusive => Boundary::Inclusive,
            BoundaryArg::Strict => Boundary::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproxMode {
    BrPaper,
    BrLattice,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    Convergence,
    Cramer,
    BerryEsseen,
    Mdp,
    Pn,
}

#[derive(Debug, Args)]
pub struct Population {
    /// Distribution as `family:params`, e.g. `uniform:0,1`, `normal:0,1`, `exponential:1`.
    #[arg(long)]
    pub dist: DistributionSpec,
    /// Quantile level in (0, 1).
    #[arg(long)]
    pub p: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate, tilt and sigma_p of the deviation x_{n,p} - x_p at offset t.
    Rate {
        #[command(flatten)]
        pop: Population,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Upper)]
        side: SideArg,
    },
    /// Exact tail probability via the binomial reduction.
    Exact {
        #[command(flatten)]
        pop: Population,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Upper)]
        side: SideArg,
        #[arg(long, value_enum, default_value_t = BoundaryArg::Inclusive)]
        boundary: BoundaryArg,
    },
    /// Asymptotic approximation of the tail probability.
    Approx {
        #[command(flatten)]
        pop: Population,
        #[arg(long)]
        n: u64,
        /// Offset on the raw scale.
        #[arg(long, conflicts_with = "t_r", required_unless_present = "t_r")]
        t: Option<f64>,
        /// Offset on the normalized scale of R_n.
        #[arg(long = "t-r")]
        t_r: Option<f64>,
        #[arg(long, value_enum, default_value_t = SideArg::Upper)]
        side: SideArg,
        #[arg(long, value_enum, default_value_t = ApproxMode::BrPaper)]
        mode: ApproxMode,
    },
    /// Monte Carlo frequency of the deviation event.
    Mc {
        #[command(flatten)]
        pop: Population,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = SideArg::Upper)]
        side: SideArg,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Diagnostic tables over a grid of sample sizes.
    Sweep(SweepArgs),
    /// Legendre-duality and rate-identity checks over the builtin families.
    Verify {
        /// Relative perturbation applied to the closed-form rate (negative control).
        #[arg(long, hide = true, default_value_t = 0.0)]
        corrupt_rate: f64,
    },
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub kind: SweepKind,
    #[arg(long)]
    pub dist: DistributionSpec,
    /// Quantile level; for `pn` the base level p0 of p_n = p0 n^-beta.
    #[arg(long)]
    pub p: Option<f64>,
    /// Sample sizes as `start:end:geo|lin:count`.
    #[arg(long = "n-grid")]
    pub n_grid: GridSpec,
    /// Raw offset (convergence).
    #[arg(long)]
    pub t: Option<f64>,
    /// Defaults to upper, or both for `cramer` and `pn`.
    #[arg(long, value_enum)]
    pub side: Option<SideArg>,
    /// Normalized offset multiplier (mdp).
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Speed exponent a_n = n^alpha (mdp).
    #[arg(long, default_value_t = 0.25)]
    pub alpha: f64,
    /// Decay exponent of p_n (pn).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Points on each t grid (cramer, pn).
    #[arg(long = "t-points", default_value_t = ENVELOPE_T_POINTS)]
    pub t_points: usize,
    /// Grid density on [-8, 8] (berry-esseen).
    #[arg(long = "grid-points", default_value_t = BE_GRID_POINTS)]
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateOutput {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub lambda: f64,
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub tau: f64,
    pub sigma_p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOutput {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub log_prob: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxOutput {
    #[serde(with = "crate::serde_ext::extended_f64")]
    pub log_approx: f64,
    pub prob_approx: f64,
}

fn rate(pop: &Population, t: f64, side: Side) -> Result<RateOutput> {
    let problem = QuantileProblem::new(pop.dist, pop.p, 1, t, side)?;
    let lambda = rate_lambda(&problem);
    let (tau, warning) = match tilt_tau(&problem) {
        Ok(tau) if t == 0.0 => (tau, Some("t = 0: zero tilt, the sharp expansion is undefined".into())),
        Ok(tau) => (tau, None),
        Err(Error::InfiniteTilt { .. }) => (f64::INFINITY, Some("t exits the support: infinite rate and tilt".into())),
        Err(e) => return Err(e),
    };
    Ok(RateOutput { lambda, tau, sigma_p: problem.sigma_p(), warning })
}

fn approx(pop: &Population, n: u64, t: Option<f64>, t_r: Option<f64>, side: Side, mode: ApproxMode) -> Result<ApproxOutput> {
    let (t, t_r) = match (t, t_r) {
        (Some(t), _) => (t, t / r_scale(&pop.dist, pop.p, n)?),
        (None, Some(t_r)) => (t_r * r_scale(&pop.dist, pop.p, n)?, t_r),
        (None, None) => return Err(Error::Domain("one of --t or --t-r is required".into())),
    };
    let problem = QuantileProblem::new(pop.dist, pop.p, n, t, side)?;
    let log_approx = match mode {
        ApproxMode::BrPaper => bahadur_rao_log(&problem, PrefactorMode::Paper)?.log_approx,
        ApproxMode::BrLattice => bahadur_rao_log(&problem, PrefactorMode::Lattice)?.log_approx,
        ApproxMode::Normal => normal_tail(t_r).log_value(),
    };
    Ok(ApproxOutput { log_approx, prob_approx: log_approx.exp() })
}

fn emit<T: Serialize>(value: &T, format: Format, out: &mut dyn Write) -> Result<()> {
    let text = match format {
        Format::Json => {
            let mut s = serde_json::to_string(value).map_err(|e| Error::Output(e.to_string()))?;
            s.push('\n');
            s
        }
        Format::Csv => to_csv(std::slice::from_ref(value))?,
    };
    write_all(out, &text)
}

fn emit_rows<T: Serialize>(whole: &impl Serialize, rows: &[T], format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Json => emit(whole, format, out),
        Format::Csv => write_all(out, &to_csv(rows)?),
    }
}

fn write_all(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::Output(e.to_string()))
}

fn sweep(args: &SweepArgs, format: Format, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let sizes = args.n_grid.sample_sizes()?;
    let p = || args.p.ok_or_else(|| Error::Domain("--p is required for this sweep".into()));
    let side = |default: SideArg| args.side.unwrap_or(default);
    match args.kind {
        SweepKind::Convergence => {
            let t = args.t.ok_or_else(|| Error::Domain("--t is required for a convergence sweep".into()))?;
            let template = QuantileProblem::new(args.dist, p()?, 1, t, side(SideArg::Upper).single()?)?;
            let table = convergence_sweep(&template, &sizes)?;
            match format {
                Format::Json => emit(&table, format, out),
                Format::Csv => write_all(out, &table.to_csv()?),
            }
        }
        SweepKind::Cramer => {
            let env = cramer_envelope_fit(&args.dist, p()?, &sizes, args.t_points, &side(SideArg::Both).sides())?;
            emit_rows(&env, &env.points, format, out)
        }
        SweepKind::BerryEsseen => {
            let p = p()?;
            let rows = sizes
                .iter()
                .map(|&n| berry_esseen_sup(&args.dist, p, n, args.grid_points))
                .collect::<Result<Vec<_>>>()?;
            emit_rows(&rows, &rows, format, out)
        }
        SweepKind::Mdp => {
            let rows = mdp_sweep(&args.dist, p()?, args.r, args.alpha, &sizes, side(SideArg::Upper).single()?)?;
            emit_rows(&rows, &rows, format, out)
        }
        SweepKind::Pn => {
            let beta = args.beta.ok_or_else(|| Error::Domain("--beta is required for a pn sweep".into()))?;
            let sweep = pn_sweep(&args.dist, args.p.unwrap_or(1.0), beta, &sizes, args.t_points, &side(SideArg::Both).sides())?;
            if let Some(w) = &sweep.warning {
                let _ = writeln!(err, "warning: {w}");
            }
            emit_rows(&sweep, &sweep.points, format, out)
        }
    }
}

/// Runs one command; returns the exit code, or the error to report.
fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8> {
    let format = cli.format;
    match &cli.command {
        Command::Rate { pop, t, side } => emit(&rate(pop, *t, side.single()?)?, format, out)?,
        Command::Exact { pop, n, t, side, boundary } => {
            let problem = QuantileProblem::new(pop.dist, pop.p, *n, *t, side.single()?)?;
            let lp = exact_tail_with(&problem, (*boundary).into());
            emit(&ExactOutput { log_prob: lp.log_value(), prob: lp.value() }, format, out)?
        }
        Command::Approx { pop, n, t, t_r, side, mode } => {
            emit(&approx(pop, *n, *t, *t_r, side.single()?, *mode)?, format, out)?
        }
        Command::Mc { pop, n, t, side, replicates, seed } => {
            let config = SimConfig::new(pop.dist, pop.p, *n, *replicates, *seed)?;
            let tail: EmpiricalTail = empirical_tail(&config, *t, side.single()?)?;
            emit(&tail, format, out)?
        }
        Command::Sweep(args) => sweep(args, format, out, err)?,
        Command::Verify { corrupt_rate } => {
            let checks = verification_battery(*corrupt_rate)?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            let mut text = String::new();
            for check in &checks {
                text.push_str(&format!("{check}\n"));
            }
            text.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
            write_all(out, &text)?;
            if failed > 0 {
                return Ok(EXIT_VERIFY_FAILED);
            }
        }
    }
    Ok(EXIT_OK)
}

fn thread_pool() -> Result<Option<rayon::ThreadPool>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Parse(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::Output(e.to_string()))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            let _ = writeln!(err, "{}", line.trim());
            return EXIT_USAGE;
        }
    };
    // Buffered so the command can run inside a worker pool.
    let (mut out_buf, mut err_buf) = (Vec::new(), Vec::new());
    let result = thread_pool().and_then(|pool| match pool {
        Some(pool) => pool.install(|| dispatch(&cli, &mut out_buf, &mut err_buf)),
        None => dispatch(&cli, &mut out_buf, &mut err_buf),
    });
    let _ = out.write_all(&out_buf);
    let _ = err.write_all(&err_buf);
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}
