//! Monte Carlo sweeps over `(k, m)` cells.
//!
//! Each trial draws a fresh instance from a seed derived from
//! `(master_seed, k, m, trial)`, runs thresholded OMP and the genie, and
//! records for every candidate threshold whether OMP missed the support and
//! which genie events fired. OMP is run once per trial at the smallest
//! threshold; the support at any larger threshold is a prefix of that run.
//!
//! Trials are independent and merged in index order, so a report depends on
//! the configuration alone, not on the worker count.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::exec::Execution;
use crate::lasso::{lasso_recovers, PenaltyRule};
use crate::model::{
    derive_seed, generate_instance, Amplitude, ModelError, Noise, PowerSpacing, ProblemInstance, SignMode, SignalSpec,
};
use crate::omp::{omp_trace, run_genie, GenieSummary, OmpError};
use crate::threshold::{m_theory, m_tropp_gilbert, make_plan_forced, ThresholdError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Omp(#[from] OmpError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("report I/O: {0}")]
    Io(#[from] io::Error),
    #[error("report CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Number of thresholds scanned per cell in oracle mode.
pub const ORACLE_GRID_POINTS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    Plan {
        k_min: usize,
        k_max: usize,
    },
    /// The same explicit threshold in every cell.
    Fixed(f64),
    /// Best of [`oracle_mu_grid`] per cell, the same threshold for every trial.
    OracleGrid,
}

impl std::fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThresholdMode::Plan { k_min, k_max } => write!(f, "plan(k_min={k_min},k_max={k_max})"),
            ThresholdMode::Fixed(mu) => write!(f, "fixed({mu})"),
            ThresholdMode::OracleGrid => write!(f, "oracle_grid"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n: usize,
    pub k_values: Vec<usize>,
    pub m_values: Vec<usize>,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub dynamic_range_db: f64,
    pub power_spacing: PowerSpacing,
    pub signs: SignMode,
    pub trials: usize,
    pub master_seed: u64,
    pub threshold_mode: ThresholdMode,
}

impl SweepConfig {
    pub fn new(n: usize, k_values: Vec<usize>, m_values: Vec<usize>, trials: usize, master_seed: u64) -> Self {
        Self {
            n,
            k_values,
            m_values,
            snr_db: None,
            dynamic_range_db: 0.0,
            power_spacing: PowerSpacing::Linear,
            signs: SignMode::Random,
            trials,
            master_seed,
            threshold_mode: ThresholdMode::OracleGrid,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |s: String| Err(HarnessError::ConfigInvalid(s));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(&k) = self.k_values.iter().find(|&&k| k == 0 || k >= self.n) {
            return bad(format!("k={k} must satisfy 1 <= k < n={}", self.n));
        }
        if self.m_values.contains(&0) {
            return bad("m must be at least 1".into());
        }
        if let Some(s) = self.snr_db {
            if !s.is_finite() {
                return bad("snr_db must be finite (omit it for noiseless)".into());
            }
        }
        if !(self.dynamic_range_db >= 0.0 && self.dynamic_range_db.is_finite()) {
            return bad("dynamic_range_db must be finite and >= 0".into());
        }
        if let ThresholdMode::Fixed(mu) = self.threshold_mode {
            if !(mu > 0.0 && mu.is_finite()) {
                return bad(format!("fixed threshold must be positive, got {mu}"));
            }
        }
        if let ThresholdMode::Plan { k_min, k_max } = self.threshold_mode {
            if k_min == 0 || k_min > k_max || 2 * k_max >= self.n {
                return bad(format!("plan needs 1 <= k_min <= k_max < n/2, got {k_min}..{k_max}"));
            }
            if let Some(&k) = self.k_values.iter().find(|&&k| 2 * k >= self.n) {
                return bad(format!("plan mode needs k < n/2, got k={k}"));
            }
        }
        Ok(())
    }

    /// Signal model for sparsity `k`. Noiseless runs use `‖x‖² = k`; the
    /// scale does not affect noiseless recovery.
    pub fn signal_spec(&self, k: usize) -> SignalSpec {
        let (total, noise) = match self.snr_db {
            Some(db) => (10f64.powf(db / 10.0), Noise::Gaussian),
            None => (k as f64, Noise::Noiseless),
        };
        let amplitude = if self.dynamic_range_db == 0.0 {
            Amplitude::Equal((total / k as f64).sqrt())
        } else {
            Amplitude::DynamicRange {
                db: self.dynamic_range_db,
                total_power: total,
                spacing: self.power_spacing,
            }
        };
        SignalSpec {
            n: self.n,
            k,
            amplitude,
            noise,
            signs: self.signs,
        }
    }

    pub fn cell_seed(&self, k: usize, m: usize) -> u64 {
        derive_seed(self.master_seed, &[k as u64, m as u64])
    }

    fn thresholds(&self, m: usize) -> Result<(Vec<f64>, bool), HarnessError> {
        Ok(match self.threshold_mode {
            ThresholdMode::OracleGrid => (oracle_mu_grid(self.n, m), true),
            ThresholdMode::Fixed(mu) => (vec![mu], true),
            ThresholdMode::Plan { k_min, k_max } => {
                let plan = make_plan_forced(m, self.n, k_min, k_max)?;
                (vec![plan.mu], plan.reliable)
            }
        })
    }
}

/// 25 geometric points spanning `[0.1/m, 20 ln(n)/m]`.
pub fn oracle_mu_grid(n: usize, m: usize) -> Vec<f64> {
    let lo = 0.1 / m as f64;
    let hi = 20.0 * (n as f64).ln() / m as f64;
    let p = ORACLE_GRID_POINTS;
    (0..p).map(|i| lo * (hi / lo).powf(i as f64 / (p - 1) as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub k: usize,
    pub m: usize,
    pub mu: f64,
    pub error_prob: f64,
    pub stderr: f64,
    pub md_rate: f64,
    pub fa_rate: f64,
    pub trials: usize,
    pub seed: u64,
    /// False when a plan threshold had to be forced below the scaling law.
    pub plan_reliable: bool,
    /// Trials where OMP failed while neither genie event fired, over every
    /// threshold evaluated. Zero unless something is broken.
    pub union_violations: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlay {
    pub k: usize,
    pub m_theory: f64,
    pub m_tropp_gilbert: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<CellRecord>,
    pub overlays: Vec<Overlay>,
}

impl SweepReport {
    pub fn cell(&self, k: usize, m: usize) -> Option<&CellRecord> {
        self.cells.iter().find(|c| c.k == k && c.m == m)
    }

    /// Smallest `m` (in sweep order) whose error probability is at most `target`.
    pub fn smallest_m_with_error_at_most(&self, k: usize, target: f64) -> Option<usize> {
        self.cells
            .iter()
            .filter(|c| c.k == k && c.error_prob <= target)
            .map(|c| c.m)
            .min()
    }
}

/// Outcome of one trial at each candidate threshold.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub error: Vec<bool>,
    pub missed_detection: Vec<bool>,
    pub false_alarm: Vec<bool>,
}

/// Runs OMP and the genie on one instance for a sorted list of thresholds.
pub fn evaluate_trial(instance: &ProblemInstance, mus: &[f64]) -> Result<TrialOutcome, HarnessError> {
    let max_iter = instance.m().min(instance.n());
    let trace = omp_trace(&instance.a, &instance.y, mus[0], max_iter);
    let truth = &instance.signal.support;
    let summary = match run_genie(instance) {
        Ok(g) => Some(GenieSummary::new(&g.rho_table, truth)),
        // fewer measurements than the support can resolve
        Err(OmpError::Linalg(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let mut out = TrialOutcome {
        error: Vec::with_capacity(mus.len()),
        missed_detection: Vec::with_capacity(mus.len()),
        false_alarm: Vec::with_capacity(mus.len()),
    };
    for &mu in mus {
        out.error.push(trace.support_at(mu) != *truth);
        let (md, fa) = match &summary {
            Some(s) => {
                let e = s.events(mu);
                (e.missed_detection, e.false_alarm)
            }
            None => (true, false),
        };
        out.missed_detection.push(md);
        out.false_alarm.push(fa);
    }
    Ok(out)
}

fn trial_seed(cell_seed: u64, trial: usize) -> u64 {
    derive_seed(cell_seed, &[trial as u64])
}

fn run_cell(config: &SweepConfig, k: usize, m: usize, exec: Execution) -> Result<CellRecord, HarnessError> {
    let start = Instant::now();
    let spec = config.signal_spec(k);
    let seed = config.cell_seed(k, m);
    let (mus, plan_reliable) = config.thresholds(m)?;
    let outcomes = exec.map_indexed(config.trials, |t| {
        let inst = generate_instance(&spec, m, trial_seed(seed, t))?;
        evaluate_trial(&inst, &mus)
    });
    let p = mus.len();
    let (mut errors, mut md, mut fa) = (vec![0usize; p], vec![0usize; p], vec![0usize; p]);
    let mut union_violations = 0;
    for o in outcomes {
        let o = o?;
        for i in 0..p {
            errors[i] += usize::from(o.error[i]);
            md[i] += usize::from(o.missed_detection[i]);
            fa[i] += usize::from(o.false_alarm[i]);
            if o.error[i] && !o.missed_detection[i] && !o.false_alarm[i] {
                union_violations += 1;
            }
        }
    }
    // lowest error, smallest threshold on ties
    let best = (0..p).min_by_key(|&i| (errors[i], i)).unwrap();
    let trials = config.trials as f64;
    let error_prob = errors[best] as f64 / trials;
    Ok(CellRecord {
        k,
        m,
        mu: mus[best],
        error_prob,
        stderr: (error_prob * (1.0 - error_prob) / trials).sqrt(),
        md_rate: md[best] as f64 / trials,
        fa_rate: fa[best] as f64 / trials,
        trials: config.trials,
        seed,
        plan_reliable,
        union_violations,
        wall_time: start.elapsed(),
    })
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport, HarnessError> {
    run_sweep_with(config, Execution::default())
}

pub fn run_sweep_with(config: &SweepConfig, exec: Execution) -> Result<SweepReport, HarnessError> {
    config.validate()?;
    let mut cells = Vec::with_capacity(config.k_values.len() * config.m_values.len());
    for &k in &config.k_values {
        for &m in &config.m_values {
            cells.push(run_cell(config, k, m, exec)?);
        }
    }
    let overlays = config
        .k_values
        .iter()
        .map(|&k| Overlay {
            k,
            m_theory: m_theory(k, config.n),
            m_tropp_gilbert: m_tropp_gilbert(k, config.n),
        })
        .collect();
    Ok(SweepReport {
        config: config.clone(),
        cells,
        overlays,
    })
}

/// Noiseless sweep at the configured dynamic range.
pub fn run_dynamic_range(config: &SweepConfig) -> Result<SweepReport, HarnessError> {
    run_dynamic_range_with(config, Execution::default())
}

pub fn run_dynamic_range_with(config: &SweepConfig, exec: Execution) -> Result<SweepReport, HarnessError> {
    if config.snr_db.is_some() {
        return Err(HarnessError::ConfigInvalid("dynamic-range runs are noiseless".into()));
    }
    run_sweep_with(config, exec)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRates {
    pub md_rate: f64,
    pub fa_rate: f64,
    /// OMP error rate at the same threshold on the same trials.
    pub error_rate: f64,
}

/// Genie event rates at a fixed threshold on the trials of cell `(k, m)`.
pub fn estimate_event_probs(
    config: &SweepConfig,
    k: usize,
    m: usize,
    mu: f64,
    exec: Execution,
) -> Result<EventRates, HarnessError> {
    config.validate()?;
    if !(mu > 0.0) {
        return Err(HarnessError::ConfigInvalid(format!(
            "threshold must be positive, got {mu}"
        )));
    }
    let spec = config.signal_spec(k);
    let seed = config.cell_seed(k, m);
    let outcomes = exec.map_indexed(config.trials, |t| {
        let inst = generate_instance(&spec, m, trial_seed(seed, t))?;
        evaluate_trial(&inst, &[mu])
    });
    let (mut md, mut fa, mut err) = (0usize, 0usize, 0usize);
    for o in outcomes {
        let o = o?;
        md += usize::from(o.missed_detection[0]);
        fa += usize::from(o.false_alarm[0]);
        err += usize::from(o.error[0]);
    }
    let n = config.trials as f64;
    Ok(EventRates {
        md_rate: md as f64 / n,
        fa_rate: fa as f64 / n,
        error_rate: err as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoComparisonRow {
    pub m: usize,
    pub omp_success: f64,
    pub lasso_success: f64,
}

/// Exact-support success rates of oracle-threshold OMP and oracle-penalty
/// lasso on the same noiseless instances.
pub fn compare_lasso_omp(
    n: usize,
    k: usize,
    m_values: &[usize],
    trials: usize,
    master_seed: u64,
    rule: PenaltyRule,
    exec: Execution,
) -> Result<Vec<LassoComparisonRow>, HarnessError> {
    let config = SweepConfig::new(n, vec![k], m_values.to_vec(), trials, master_seed);
    config.validate()?;
    let spec = config.signal_spec(k);
    m_values
        .iter()
        .map(|&m| {
            let seed = config.cell_seed(k, m);
            let mus = oracle_mu_grid(n, m);
            let results = exec.map_indexed(trials, |t| {
                let inst = generate_instance(&spec, m, trial_seed(seed, t))?;
                let trace = omp_trace(&inst.a, &inst.y, mus[0], m.min(n));
                let omp_ok: Vec<bool> = mus
                    .iter()
                    .map(|&mu| trace.support_at(mu) == inst.signal.support)
                    .collect();
                Ok::<_, HarnessError>((omp_ok, lasso_recovers(&inst, rule)))
            });
            let mut omp_hits = vec![0usize; mus.len()];
            let mut lasso_hits = 0usize;
            for r in results {
                let (o, l) = r?;
                omp_hits.iter_mut().zip(o).for_each(|(h, ok)| *h += usize::from(ok));
                lasso_hits += usize::from(l);
            }
            let best = omp_hits.iter().copied().max().unwrap_or(0);
            Ok(LassoComparisonRow {
                m,
                omp_success: best as f64 / trials as f64,
                lasso_success: lasso_hits as f64 / trials as f64,
            })
        })
        .collect()
}

pub const CSV_HEADER: [&str; 9] = [
    "k",
    "m",
    "mu",
    "error_prob",
    "stderr",
    "md_rate",
    "fa_rate",
    "trials",
    "seed",
];

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: Write>(report: &SweepReport, out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(CSV_HEADER)?;
    for c in &report.cells {
        w.write_record([
            c.k.to_string(),
            c.m.to_string(),
            fmt_real(c.mu),
            fmt_real(c.error_prob),
            fmt_real(c.stderr),
            fmt_real(c.md_rate),
            fmt_real(c.fa_rate),
            c.trials.to_string(),
            c.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_meta<W: Write>(report: &SweepReport, mut out: W) -> io::Result<()> {
    let c = &report.config;
    writeln!(out, "n = {}", c.n)?;
    match c.snr_db {
        Some(db) => writeln!(out, "snr_db = {db}")?,
        None => writeln!(out, "snr_db = inf")?,
    }
    writeln!(out, "dynamic_range_db = {}", c.dynamic_range_db)?;
    let spacing = match c.power_spacing {
        PowerSpacing::Linear => "linear",
        PowerSpacing::Decibel => "decibel",
    };
    writeln!(out, "power_spacing = {spacing}")?;
    writeln!(out, "threshold_mode = {}", c.threshold_mode)?;
    writeln!(out, "master_seed = {}", c.master_seed)?;
    writeln!(out, "trials = {}", c.trials)?;
    writeln!(out, "tool_version = {}", env!("CARGO_PKG_VERSION"))?;
    for o in &report.overlays {
        writeln!(out, "m_theory.k{} = {}", o.k, fmt_real(o.m_theory))?;
        writeln!(out, "m_tropp_gilbert.k{} = {}", o.k, fmt_real(o.m_tropp_gilbert))?;
    }
    Ok(())
}

pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta")
}

/// Writes the CSV to `path` and the metadata sidecar next to it.
pub fn emit_report(report: &SweepReport, path: &Path) -> Result<(), HarnessError> {
    write_csv(report, BufWriter::new(File::create(path)?))?;
    let mut meta = BufWriter::new(File::create(meta_path(path))?);
    write_meta(report, &mut meta)?;
    meta.flush()?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub m: usize,
    pub mu: f64,
    pub error_prob: f64,
    pub stderr: f64,
    pub md_rate: f64,
    pub fa_rate: f64,
    pub trials: usize,
    pub seed: u64,
}

impl From<&CellRecord> for CsvRow {
    fn from(c: &CellRecord) -> Self {
        Self {
            k: c.k,
            m: c.m,
            mu: c.mu,
            error_prob: c.error_prob,
            stderr: c.stderr,
            md_rate: c.md_rate,
            fa_rate: c.fa_rate,
            trials: c.trials,
            seed: c.seed,
        }
    }
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(HarnessError::ConfigInvalid("unexpected CSV header".into()));
    }
    let bad = |f: &str| HarnessError::ConfigInvalid(format!("bad CSV field {f}"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let real = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(CSV_HEADER[i]));
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(CSV_HEADER[i]));
        rows.push(CsvRow {
            k: int(0)? as usize,
            m: int(1)? as usize,
            mu: real(2)?,
            error_prob: real(3)?,
            stderr: real(4)?,
            md_rate: real(5)?,
            fa_rate: real(6)?,
            trials: int(7)? as usize,
            seed: int(8)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_requested_range() {
        let g = oracle_mu_grid(100, 50);
        assert_eq!(g.len(), 25);
        assert!((g[0] - 0.1 / 50.0).abs() < 1e-15);
        assert!((g[24] - 20.0 * 100f64.ln() / 50.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invalid_configs() {
        let mut c = SweepConfig::new(100, vec![5], vec![40], 0, 1);
        assert!(matches!(run_sweep(&c), Err(HarnessError::ConfigInvalid(_))));
        c.trials = 1;
        c.k_values = vec![100];
        assert!(run_sweep(&c).is_err());
        c.k_values = vec![60];
        c.threshold_mode = ThresholdMode::Plan { k_min: 5, k_max: 10 };
        assert!(run_sweep(&c).is_err());
        c.k_values = vec![5];
        c.m_values = vec![0];
        assert!(run_sweep(&c).is_err());
        c.m_values = vec![40];
        c.snr_db = Some(20.0);
        assert!(run_dynamic_range(&c).is_err());
    }

    #[test]
    fn empty_sweep_gives_header_only() {
        let c = SweepConfig::new(50, vec![], vec![], 1, 0);
        let r = run_sweep(&c).unwrap();
        let mut buf = Vec::new();
        write_csv(&r, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,m,mu,error_prob,stderr,md_rate,fa_rate,trials,seed\n"
        );
    }

    #[test]
    fn single_trial_is_deterministic() {
        let c = SweepConfig::new(40, vec![3], vec![30], 1, 99);
        let a = run_sweep(&c).unwrap();
        let b = run_sweep(&c).unwrap();
        let (x, y) = (&a.cells[0], &b.cells[0]);
        assert!(x.error_prob == 0.0 || x.error_prob == 1.0);
        assert_eq!(CsvRow::from(x), CsvRow::from(y));
    }

    #[test]
    fn threshold_near_zero_always_false_alarms() {
        let mut c = SweepConfig::new(60, vec![4], vec![30], 50, 5);
        c.snr_db = Some(20.0);
        let r = estimate_event_probs(&c, 4, 30, 1e-9, Execution::default()).unwrap();
        assert_eq!(r.fa_rate, 1.0);
        assert!(estimate_event_probs(&c, 4, 30, 0.0, Execution::default()).is_err());
    }

    #[test]
    fn meta_lists_required_keys() {
        let c = SweepConfig::new(50, vec![5], vec![], 1, 3);
        let r = run_sweep(&c).unwrap();
        let mut buf = Vec::new();
        write_meta(&r, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        for key in [
            "n",
            "snr_db",
            "dynamic_range_db",
            "threshold_mode",
            "master_seed",
            "tool_version",
        ] {
            assert!(s.lines().any(|l| l.starts_with(&format!("{key} = "))), "missing {key}");
        }
    }
}
