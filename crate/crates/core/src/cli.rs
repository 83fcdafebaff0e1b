//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::brownian::{
    autocorrelation, gaussian_sq_tail, gaussian_sq_tail_bound, projection_sequence_covariance, smax_exceedance,
    smax_refined_bound, variance_at,
};
use crate::exec::{init_threads, Execution};
use crate::harness::{
    compare_lasso_omp, emit_report, estimate_event_probs, oracle_mu_grid, run_dynamic_range, run_sweep, SweepConfig,
    ThresholdMode,
};
use crate::lasso::PenaltyRule;
use crate::model::{generate_instance, PowerSpacing, SignalSpec};
use crate::omp::{default_max_iter, omp_trace, run_omp};
use crate::threshold::{m_theory, make_plan, make_plan_forced};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "OMP_RECOVERY_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "omp-recovery",
    version,
    about = "Sparse support recovery with threshold-stopped orthogonal matching pursuit"
)]
pub struct Cli {
    /// Worker threads for Monte Carlo loops (0 = all cores)
    #[arg(long, global = true, env = THREADS_ENV, hide_env_values = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run OMP on one seeded instance and print its trace
    Run(RunArgs),
    /// Monte Carlo error probability over a (k, m) grid
    Sweep(SweepArgs),
    /// Recovery versus m for several signal dynamic ranges (noiseless)
    Dynrange(DynrangeArgs),
    /// Missed-detection and false-alarm rates of the genie analysis
    Genie(GenieArgs),
    /// Monte Carlo checks for normalized Brownian motion
    Brownian(BrownianArgs),
    /// Exact-support success of lasso versus OMP
    LassoCompare(LassoCompareArgs),
    /// Print the threshold plan (delta, epsilon, mu)
    Plan(PlanArgs),
}

/// A threshold: `auto` or a positive number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MuArg {
    Auto,
    Value(f64),
}

fn parse_mu(s: &str) -> Result<MuArg, String> {
    if s == "auto" {
        return Ok(MuArg::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(MuArg::Value(v)),
        _ => Err(format!("expected `auto` or a positive number, got `{s}`")),
    }
}

/// `lo:hi:step` (inclusive of `hi` when reachable), `a,b,c`, or a single value.
pub fn parse_range(s: &str) -> Result<Vec<usize>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad integer `{t}` in `{s}`"))
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let (lo, hi, step) = match parts.as_slice() {
            [lo, hi] => (num(lo)?, num(hi)?, 1),
            [lo, hi, step] => (num(lo)?, num(hi)?, num(step)?),
            _ => return Err(format!("range `{s}` must be lo:hi or lo:hi:step")),
        };
        if step == 0 || hi < lo {
            return Err(format!("range `{s}` needs step > 0 and lo <= hi"));
        }
        Ok((lo..=hi).step_by(step).collect())
    } else {
        s.split(',').map(num).collect()
    }
}

fn parse_reals(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number `{t}`")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spacing {
    Linear,
    Decibel,
}

impl From<Spacing> for PowerSpacing {
    fn from(s: Spacing) -> Self {
        match s {
            Spacing::Linear => PowerSpacing::Linear,
            Spacing::Decibel => PowerSpacing::Decibel,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Signal dimension
    #[arg(long)]
    pub n: usize,
    /// Sparsity
    #[arg(long)]
    pub k: usize,
    /// Measurements
    #[arg(long)]
    pub m: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SNR in dB; omit for noiseless
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Threshold: `auto` or a positive number
    #[arg(long, default_value = "auto", value_parser = parse_mu)]
    pub mu: MuArg,
    /// Smallest sparsity for the auto plan
    #[arg(long)]
    pub kmin: Option<usize>,
    /// Largest sparsity for the auto plan
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Iteration cap (default: min(m, n))
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Write the instance in text form to this file
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

// Range flags spell out `std::vec::Vec` so that clap treats the parsed list
// as one value instead of collecting repeated flags.
#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Signal dimension
    #[arg(long)]
    pub n: usize,
    /// Sparsity values (lo:hi:step or a,b,c)
    #[arg(long, value_parser = parse_range)]
    pub k: std::vec::Vec<usize>,
    /// Measurement counts (lo:hi:step or a,b,c)
    #[arg(long, value_parser = parse_range)]
    pub m: std::vec::Vec<usize>,
    /// Monte Carlo trials
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SNR in dB; omit for noiseless
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Dynamic range of entry powers in dB
    #[arg(long, default_value_t = 0.0)]
    pub dr: f64,
    /// How entry powers spread over the range
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    pub spacing: Spacing,
    /// Threshold: `auto` (plan when --kmin/--kmax given, else oracle grid) or a number
    #[arg(long, default_value = "auto", value_parser = parse_mu)]
    pub mu: MuArg,
    /// Smallest sparsity for the auto plan
    #[arg(long)]
    pub kmin: Option<usize>,
    /// Largest sparsity for the auto plan
    #[arg(long)]
    pub kmax: Option<usize>,
    /// Output CSV path; a .meta sidecar is written next to it
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DynrangeArgs {
    /// Signal dimension
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Sparsity
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Measurement counts (lo:hi:step or a,b,c)
    #[arg(long, value_parser = parse_range, default_value = "40:200:5")]
    pub m: std::vec::Vec<usize>,
    /// Comma-separated dynamic ranges in dB
    #[arg(long, default_value = "0,10,20")]
    pub dr: String,
    /// How entry powers spread over the range
    #[arg(long, value_enum, default_value_t = Spacing::Linear)]
    pub spacing: Spacing,
    /// Monte Carlo trials
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Error level used to report the smallest sufficient m
    #[arg(long, default_value_t = 0.05)]
    pub target: f64,
    /// Output CSV base path; one file per range is written as <stem>_dr<D>.csv
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenieArgs {
    /// Signal dimension
    #[arg(long)]
    pub n: usize,
    /// Sparsity
    #[arg(long)]
    pub k: usize,
    /// Measurements
    #[arg(long)]
    pub m: usize,
    /// Monte Carlo trials
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SNR in dB; omit for noiseless
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Threshold: `auto` (plan when --kmin/--kmax given, else oracle grid) or a number
    #[arg(long, default_value = "auto", value_parser = parse_mu)]
    pub mu: MuArg,
    /// Smallest sparsity for the auto plan
    #[arg(long)]
    pub kmin: Option<usize>,
    /// Largest sparsity for the auto plan
    #[arg(long)]
    pub kmax: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    /// E[S(1)S(4)] against 0.5
    Autocorr,
    /// Var S(1) against 1
    Variance,
    /// Gaussian square tail bound against the exact tail
    Tail,
    /// Supremum exceedance on [a, b] against its bound
    Smax,
    /// Nested projection covariance against sqrt(t_i / t_j)
    Projseq,
}

#[derive(Debug, Args)]
pub struct BrownianArgs {
    /// Which law to check
    #[arg(long, value_enum)]
    pub check: Check,
    /// Sample paths (or projection samples)
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Left end of the supremum interval
    #[arg(long, default_value_t = 1.0)]
    pub a: f64,
    /// Right end of the supremum interval
    #[arg(long, default_value_t = 10.0)]
    pub b: f64,
    /// Level for the supremum exceedance
    #[arg(long, default_value_t = 16.0)]
    pub mu: f64,
    /// Geometric grid points on [a, b]
    #[arg(long, default_value_t = 512)]
    pub grid_points: usize,
    /// Free parameter of the refined supremum bound
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct LassoCompareArgs {
    /// Signal dimension
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Sparsity
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Measurement counts (lo:hi:step or a,b,c)
    #[arg(long, value_parser = parse_range, default_value = "20:100:5")]
    pub m: std::vec::Vec<usize>,
    /// Monte Carlo trials
    #[arg(long, default_value_t = 300)]
    pub trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Success level used to report the smallest sufficient m
    #[arg(long, default_value_t = 0.9)]
    pub target: f64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Signal dimension
    #[arg(long)]
    pub n: usize,
    /// Measurements
    #[arg(long)]
    pub m: usize,
    /// Smallest sparsity for the auto plan
    #[arg(long)]
    pub kmin: usize,
    /// Largest sparsity for the auto plan
    #[arg(long)]
    pub kmax: usize,
    /// Produce a plan even below the scaling law (marked unreliable)
    #[arg(long)]
    pub force: bool,
}

/// Parses `argv` (including the program name).
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

fn threshold_mode(mu: MuArg, kmin: Option<usize>, kmax: Option<usize>) -> Result<ThresholdMode, String> {
    match (mu, kmin, kmax) {
        (MuArg::Value(v), _, _) => Ok(ThresholdMode::Fixed(v)),
        (MuArg::Auto, Some(k_min), Some(k_max)) => Ok(ThresholdMode::Plan { k_min, k_max }),
        (MuArg::Auto, None, None) => Ok(ThresholdMode::OracleGrid),
        _ => Err("--kmin and --kmax must be given together".into()),
    }
}

type CmdResult = Result<(), Box<dyn std::error::Error>>;

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> CmdResult {
    let spec = match a.snr_db {
        Some(db) => SignalSpec::equal_power(a.n, a.k, 10f64.powf(db / 10.0), crate::model::Noise::Gaussian),
        None => SignalSpec::equal_power(a.n, a.k, a.k as f64, crate::model::Noise::Noiseless),
    };
    let inst = generate_instance(&spec, a.m, a.seed)?;
    if let Some(p) = &a.dump {
        inst.write_text(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    let max_iter = a.max_iter.unwrap_or_else(|| default_max_iter(&inst));
    let mu = match threshold_mode(a.mu, a.kmin, a.kmax)? {
        ThresholdMode::Fixed(v) => v,
        ThresholdMode::Plan { k_min, k_max } => make_plan_forced(a.m, a.n, k_min, k_max)?.mu,
        ThresholdMode::OracleGrid => {
            let grid = oracle_mu_grid(a.n, a.m);
            let trace = omp_trace(&inst.a, &inst.y, grid[0], max_iter);
            grid.iter()
                .copied()
                .find(|&mu| trace.support_at(mu) == inst.signal.support)
                .unwrap_or(grid[0])
        }
    };
    let r = run_omp(&inst, mu, max_iter)?;
    writeln!(out, "mu = {mu:.6e}")?;
    writeln!(
        out,
        "{:>4} {:>6} {:>14} {:>14}",
        "t", "index", "rho_star", "residual_sq"
    )?;
    for it in &r.trace.iterations {
        writeln!(
            out,
            "{:>4} {:>6} {:>14.6e} {:>14.6e}",
            it.t, it.index, it.rho_star, it.residual_norm_sq
        )?;
    }
    writeln!(out, "stop = {:?}", r.trace.stop_reason)?;
    writeln!(out, "support      = {:?}", r.support_estimate)?;
    writeln!(out, "true support = {:?}", inst.signal.support)?;
    writeln!(out, "exact = {}", r.support_estimate == inst.signal.support)?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = SweepConfig::new(a.n, a.k.clone(), a.m.clone(), a.trials, a.seed);
    cfg.snr_db = a.snr_db;
    cfg.dynamic_range_db = a.dr;
    cfg.power_spacing = a.spacing.into();
    cfg.threshold_mode = threshold_mode(a.mu, a.kmin, a.kmax)?;
    let report = run_sweep(&cfg)?;
    emit_report(&report, &a.out)?;
    writeln!(out, "wrote {} cells to {}", report.cells.len(), a.out.display())?;
    Ok(())
}

fn with_suffix(base: &Path, db: f64) -> PathBuf {
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    base.with_file_name(format!("{stem}_dr{db}.csv"))
}

fn cmd_dynrange(a: &DynrangeArgs, out: &mut dyn Write) -> CmdResult {
    let ranges = parse_reals(&a.dr)?;
    writeln!(out, "{:>8} {:>10}", "dr_db", "min_m")?;
    for db in ranges {
        let mut cfg = SweepConfig::new(a.n, vec![a.k], a.m.clone(), a.trials, a.seed);
        cfg.dynamic_range_db = db;
        cfg.power_spacing = a.spacing.into();
        let report = run_dynamic_range(&cfg)?;
        if let Some(base) = &a.out {
            emit_report(&report, &with_suffix(base, db))?;
        }
        match report.smallest_m_with_error_at_most(a.k, a.target) {
            Some(m) => writeln!(out, "{db:>8} {m:>10}")?,
            None => writeln!(out, "{db:>8} {:>10}", "none")?,
        }
    }
    Ok(())
}

fn cmd_genie(a: &GenieArgs, out: &mut dyn Write) -> CmdResult {
    let mut cfg = SweepConfig::new(a.n, vec![a.k], vec![a.m], a.trials, a.seed);
    cfg.snr_db = a.snr_db;
    cfg.threshold_mode = threshold_mode(a.mu, a.kmin, a.kmax)?;
    let (mu, md, fa, err) = match cfg.threshold_mode {
        ThresholdMode::Fixed(mu) => {
            let r = estimate_event_probs(&cfg, a.k, a.m, mu, Execution::default())?;
            (mu, r.md_rate, r.fa_rate, r.error_rate)
        }
        _ => {
            let report = run_sweep(&cfg)?;
            let c = &report.cells[0];
            (c.mu, c.md_rate, c.fa_rate, c.error_prob)
        }
    };
    writeln!(out, "mu = {mu:.6e}")?;
    writeln!(out, "md_rate = {md:.4}")?;
    writeln!(out, "fa_rate = {fa:.4}")?;
    writeln!(out, "error_prob = {err:.4}")?;
    Ok(())
}

fn cmd_brownian(a: &BrownianArgs, out: &mut dyn Write) -> CmdResult {
    let exec = Execution::default();
    match a.check {
        Check::Autocorr => {
            let est = autocorrelation(&[1.0, 4.0], a.paths, a.seed, exec)?;
            let e = est[0];
            writeln!(out, "mean = {:.6}", e.mean)?;
            writeln!(out, "expected = {:.6}", e.expected)?;
            writeln!(out, "abs_error = {:.6}", (e.mean - e.expected).abs())?;
            writeln!(out, "std_err = {:.6}", e.std_err)?;
        }
        Check::Variance => {
            let v = variance_at(1.0, a.paths, a.seed, exec)?;
            writeln!(out, "variance = {v:.6}")?;
        }
        Check::Tail => {
            writeln!(out, "{:>4} {:>14} {:>14}", "mu", "exact", "bound")?;
            for mu in 1..=40 {
                let mu = mu as f64;
                writeln!(
                    out,
                    "{mu:>4} {:>14.6e} {:>14.6e}",
                    gaussian_sq_tail(mu),
                    gaussian_sq_tail_bound(mu)
                )?;
            }
        }
        Check::Smax => {
            let r = smax_exceedance(a.a, a.b, a.mu, a.paths, a.grid_points, a.seed, exec)?;
            writeln!(out, "empirical_prob = {:.6e}", r.empirical_prob)?;
            writeln!(out, "bound_value = {:.6e}", r.bound_value)?;
            writeln!(out, "bound_holds = {}", r.bound_holds(3.09))?;
            if a.b > a.a && a.delta > 0.0 {
                let rb = smax_refined_bound(a.a, a.b, a.mu, a.delta);
                writeln!(out, "refined: C1 = {:.6} C2 = {:.6} C3 = {:.6}", rb.c1, rb.c2, rb.c3)?;
                if let Some(v) = rb.value {
                    writeln!(out, "refined_bound = {v:.6e}")?;
                }
            }
        }
        Check::Projseq => {
            let spec = SignalSpec::equal_power(60, 6, 6.0, crate::model::Noise::Gaussian);
            let inst = generate_instance(&spec, 40, a.seed)?;
            let r = run_omp(&inst, 1e-3, 6)?;
            let cols: Vec<Vec<f64>> = r.trace.order().iter().map(|&j| inst.a.column(j)).collect();
            let c = projection_sequence_covariance(&inst.y, &cols, a.paths, a.seed, exec)?;
            writeln!(out, "chain_length = {}", c.norms_sq.len())?;
            writeln!(out, "max_abs_deviation = {:.6}", c.max_abs_deviation())?;
        }
    }
    Ok(())
}

fn cmd_lasso(a: &LassoCompareArgs, out: &mut dyn Write) -> CmdResult {
    let rows = compare_lasso_omp(
        a.n,
        a.k,
        &a.m,
        a.trials,
        a.seed,
        PenaltyRule::default(),
        Execution::default(),
    )?;
    writeln!(out, "{:>6} {:>10} {:>10}", "m", "omp", "lasso")?;
    for r in &rows {
        writeln!(out, "{:>6} {:>10.4} {:>10.4}", r.m, r.omp_success, r.lasso_success)?;
    }
    let first = |f: fn(&crate::harness::LassoComparisonRow) -> f64| rows.iter().find(|r| f(r) >= a.target).map(|r| r.m);
    writeln!(out, "omp_min_m = {:?}", first(|r| r.omp_success))?;
    writeln!(out, "lasso_min_m = {:?}", first(|r| r.lasso_success))?;
    Ok(())
}

fn cmd_plan(a: &PlanArgs, out: &mut dyn Write) -> CmdResult {
    let plan = if a.force {
        make_plan_forced(a.m, a.n, a.kmin, a.kmax)?
    } else {
        make_plan(a.m, a.n, a.kmin, a.kmax)?
    };
    writeln!(out, "delta = {:.10}", plan.delta)?;
    writeln!(out, "epsilon = {:.10}", plan.epsilon)?;
    writeln!(out, "mu = {:.10}", plan.mu)?;
    writeln!(out, "reliable = {}", plan.reliable)?;
    writeln!(out, "m_theory(k_max) = {:.6}", m_theory(a.kmax, a.n))?;
    Ok(())
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> i32 {
    init_threads((cli.threads > 0).then_some(cli.threads));
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Dynrange(a) => cmd_dynrange(a, out),
        Command::Genie(a) => cmd_genie(a, out),
        Command::Brownian(a) => cmd_brownian(a, out),
        Command::LassoCompare(a) => cmd_lasso(a, out),
        Command::Plan(a) => cmd_plan(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Parses and dispatches; usage errors print help text and return 1.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match parse_args(argv) {
        Ok(cli) => dispatch(&cli, out),
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = e.print();
                    EXIT_USAGE
                }
            }
        }
    }
}
