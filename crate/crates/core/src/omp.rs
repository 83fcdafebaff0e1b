//! Threshold-stopped orthogonal matching pursuit and its genie counterpart.
//!
//! At step `t` every column is scored by
//! `ρ(t, j) = |a_j' P(t) y|² / ‖P(t) y‖²`, where `P(t)` projects onto the
//! orthogonal complement of the columns selected so far. The best column is
//! added while its score exceeds the threshold `μ`.
//!
//! The genie variant knows the true support, only ever selects from it and
//! runs exactly `k` steps while recording the full score table. Its two
//! events (a true column falling to the threshold, or a wrong column reaching
//! it) cover every way the thresholded algorithm can fail, which is what the
//! harness checks trial by trial.

use thiserror::Error;

use crate::linalg::{self, selection_ratios, DenseMatrix, LinalgError, ProjectionState};
use crate::model::ProblemInstance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OmpError {
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("max_iter must be at least 1")]
    InvalidMaxIter,
    #[error("genie selected index {0} outside the true support")]
    GenieFailure(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `ρ*(t) ≤ μ`.
    Threshold,
    /// The projected measurement vanished.
    ZeroResidual,
    MaxIterations,
    /// The best column was numerically inside the selected span.
    DegenerateColumn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub t: usize,
    pub index: usize,
    pub rho_star: f64,
    /// `‖P(t) y‖²` before the selection at step `t`.
    pub residual_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpTrace {
    pub iterations: Vec<IterationRecord>,
    /// `ρ*` at the step where the threshold stopped the run.
    pub final_rho: Option<f64>,
    pub stop_reason: StopReason,
}

impl OmpTrace {
    /// Selected indices in selection order.
    pub fn order(&self) -> Vec<usize> {
        self.iterations.iter().map(|r| r.index).collect()
    }

    /// Number of selections a run with threshold `mu` would make.
    ///
    /// Valid for any `mu` at or above the threshold this trace was produced
    /// with, since the selection sequence does not depend on the threshold.
    pub fn steps_at(&self, mu: f64) -> usize {
        self.iterations
            .iter()
            .position(|r| !(r.rho_star > mu))
            .unwrap_or(self.iterations.len())
    }

    /// Sorted support estimate at threshold `mu` (see [`OmpTrace::steps_at`]).
    pub fn support_at(&self, mu: f64) -> Vec<usize> {
        let mut s: Vec<usize> = self.iterations[..self.steps_at(mu)].iter().map(|r| r.index).collect();
        s.sort_unstable();
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// Sorted ascending.
    pub support_estimate: Vec<usize>,
    pub trace: OmpTrace,
    pub x_hat: Option<Vec<f64>>,
}

/// Largest score among columns not yet selected; ties go to the lowest index.
fn best_unselected(scores: &[f64], selected: &[usize], allowed: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if !allowed(j) || selected.contains(&j) {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best
}

/// Runs the greedy selection on `(a, y)` with threshold `mu`.
pub fn omp_trace(a: &DenseMatrix, y: &[f64], mu: f64, max_iter: usize) -> OmpTrace {
    let mut state = ProjectionState::new(y);
    let mut iterations = Vec::new();
    let mut final_rho = None;
    let stop_reason = loop {
        if state.is_exhausted() {
            break StopReason::ZeroResidual;
        }
        if iterations.len() >= max_iter {
            break StopReason::MaxIterations;
        }
        let scores = selection_ratios(a, &state).expect("residual checked above");
        let Some((index, rho_star)) = best_unselected(&scores, state.selected(), |_| true) else {
            break StopReason::MaxIterations;
        };
        if !(rho_star > mu) {
            final_rho = Some(rho_star);
            break StopReason::Threshold;
        }
        let residual_norm_sq = state.residual_norm_sq();
        if state.append(index, &a.column(index)).is_err() {
            break StopReason::DegenerateColumn;
        }
        iterations.push(IterationRecord {
            t: iterations.len(),
            index,
            rho_star,
            residual_norm_sq,
        });
    };
    OmpTrace {
        iterations,
        final_rho,
        stop_reason,
    }
}

/// Thresholded OMP on an instance, followed by least-squares debiasing of
/// the estimated support.
pub fn run_omp(instance: &ProblemInstance, mu: f64, max_iter: usize) -> Result<RecoveryResult, OmpError> {
    if !(mu > 0.0) {
        return Err(OmpError::InvalidThreshold(mu));
    }
    if max_iter == 0 {
        return Err(OmpError::InvalidMaxIter);
    }
    let trace = omp_trace(&instance.a, &instance.y, mu, max_iter);
    let mut support_estimate = trace.order();
    support_estimate.sort_unstable();
    let x_hat = debias(instance, &support_estimate).ok();
    Ok(RecoveryResult {
        support_estimate,
        trace,
        x_hat,
    })
}

/// Default iteration cap: the projection basis cannot exceed `m` vectors.
pub fn default_max_iter(instance: &ProblemInstance) -> usize {
    instance.m().min(instance.n())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenieRun {
    pub trace: OmpTrace,
    /// `rho_table[t][j]` for `t = 0..=k`; rows with an exhausted residual
    /// are all zero.
    pub rho_table: Vec<Vec<f64>>,
}

/// Runs exactly `k` steps restricted to the true support, recording every
/// column's score at every step.
pub fn run_genie(instance: &ProblemInstance) -> Result<GenieRun, OmpError> {
    let a = &instance.a;
    let support = &instance.signal.support;
    let k = support.len();
    let mut state = ProjectionState::new(&instance.y);
    let mut rho_table = Vec::with_capacity(k + 1);
    let mut iterations = Vec::with_capacity(k);
    for t in 0..=k {
        let row = if state.is_exhausted() {
            vec![0.0; a.cols()]
        } else {
            selection_ratios(a, &state)?
        };
        if t < k {
            let (index, rho_star) = best_unselected(&row, state.selected(), |j| support.binary_search(&j).is_ok())
                .expect("unselected true index remains");
            if support.binary_search(&index).is_err() {
                return Err(OmpError::GenieFailure(index));
            }
            let residual_norm_sq = state.residual_norm_sq();
            state.append(index, &a.column(index))?;
            iterations.push(IterationRecord {
                t,
                index,
                rho_star,
                residual_norm_sq,
            });
        }
        rho_table.push(row);
    }
    Ok(GenieRun {
        trace: OmpTrace {
            iterations,
            final_rho: None,
            stop_reason: StopReason::MaxIterations,
        },
        rho_table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenieEvents {
    /// Some step `t < k` has every true score at or below `μ`.
    pub missed_detection: bool,
    /// Some step `t ≤ k` has a wrong column scoring at or above `μ`.
    pub false_alarm: bool,
}

impl GenieEvents {
    pub fn any(&self) -> bool {
        self.missed_detection || self.false_alarm
    }
}

/// Per-step summary of a genie table, enough to evaluate the events at any
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct GenieSummary {
    /// `min over t < k of max over true j`.
    pub min_true_max: f64,
    /// `max over t ≤ k of max over wrong j`.
    pub max_false: f64,
}

impl GenieSummary {
    pub fn new(rho_table: &[Vec<f64>], support: &[usize]) -> Self {
        let k = support.len();
        let mut min_true_max = f64::INFINITY;
        let mut max_false = f64::NEG_INFINITY;
        for (t, row) in rho_table.iter().enumerate() {
            let mut true_max = f64::NEG_INFINITY;
            for (j, &r) in row.iter().enumerate() {
                if support.binary_search(&j).is_ok() {
                    true_max = true_max.max(r);
                } else {
                    max_false = max_false.max(r);
                }
            }
            if t < k {
                min_true_max = min_true_max.min(true_max);
            }
        }
        Self {
            min_true_max,
            max_false,
        }
    }

    pub fn events(&self, mu: f64) -> GenieEvents {
        GenieEvents {
            missed_detection: self.min_true_max <= mu,
            false_alarm: self.max_false >= mu,
        }
    }
}

pub fn check_events(rho_table: &[Vec<f64>], support: &[usize], mu: f64) -> GenieEvents {
    GenieSummary::new(rho_table, support).events(mu)
}

/// Least-squares fit of `y` on the columns in `support`, zero elsewhere.
pub fn debias(instance: &ProblemInstance, support: &[usize]) -> Result<Vec<f64>, OmpError> {
    let mut x = vec![0.0; instance.n()];
    if support.is_empty() {
        return Ok(x);
    }
    let phi = instance.a.select_columns(support);
    let coef = linalg::least_squares(&phi, &instance.y)?;
    for (&j, c) in support.iter().zip(coef) {
        x[j] = c;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, Noise, SignalSpec, SparseSignal};

    fn identity_instance(x: Vec<f64>) -> ProblemInstance {
        let n = x.len();
        let (support, values): (Vec<usize>, Vec<f64>) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, v)| (j, *v))
            .unzip();
        let signal = SparseSignal::new(n + 1, support, values).unwrap();
        // pad to n+1 columns so that k < n holds for the handcrafted cases
        let mut a = DenseMatrix::zeros(n, n + 1);
        for i in 0..n {
            a.set(i, i, 1.0);
        }
        ProblemInstance::from_parts(signal, a, vec![0.0; n], 0)
    }

    #[test]
    fn identity_measurement_selects_support() {
        let inst = identity_instance(vec![1.0, 0.0]);
        let r = run_omp(&inst, 0.5, 2).unwrap();
        assert_eq!(r.support_estimate, vec![0]);
        assert_eq!(r.trace.stop_reason, StopReason::ZeroResidual);
        assert_eq!(r.trace.iterations[0].rho_star, 1.0);
        assert_eq!(r.x_hat.unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn threshold_above_best_score_stops_immediately() {
        let inst = identity_instance(vec![1.0, 0.0]);
        let r = run_omp(&inst, 1.5, 2).unwrap();
        assert!(r.support_estimate.is_empty());
        assert_eq!(r.trace.stop_reason, StopReason::Threshold);
        assert_eq!(r.trace.final_rho, Some(1.0));
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let inst = identity_instance(vec![1.0, 1.0]);
        let r = run_omp(&inst, 0.1, 2).unwrap();
        assert_eq!(r.trace.order(), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let inst = identity_instance(vec![1.0, 0.0]);
        assert_eq!(run_omp(&inst, 0.0, 2), Err(OmpError::InvalidThreshold(0.0)));
        assert_eq!(run_omp(&inst, 0.1, 0), Err(OmpError::InvalidMaxIter));
    }

    #[test]
    fn max_iter_caps_selection() {
        let inst = identity_instance(vec![1.0, 2.0, 3.0]);
        let r = run_omp(&inst, 1e-6, 2).unwrap();
        assert_eq!(r.trace.stop_reason, StopReason::MaxIterations);
        assert_eq!(r.trace.iterations.len(), 2);
    }

    #[test]
    fn debias_on_identity() {
        let signal = SparseSignal::new(3, vec![0], vec![3.0]).unwrap();
        let mut a = DenseMatrix::zeros(2, 3);
        a.set(0, 0, 1.0);
        a.set(1, 1, 1.0);
        let inst = ProblemInstance::from_parts(signal, a, vec![0.0, 7.0], 0);
        assert_eq!(inst.y, vec![3.0, 7.0]);
        assert_eq!(debias(&inst, &[0]).unwrap(), vec![3.0, 0.0, 0.0]);
        assert_eq!(debias(&inst, &[]).unwrap(), vec![0.0; 3]);
        assert!(matches!(
            debias(&inst, &[0, 2]),
            Err(OmpError::Linalg(LinalgError::RankDeficient { .. }))
        ));
    }

    #[test]
    fn debias_with_correct_support_is_exact_when_noiseless() {
        let spec = SignalSpec::equal_power(50, 5, 5.0, Noise::Noiseless);
        let inst = generate_instance(&spec, 30, 3).unwrap();
        let x_hat = debias(&inst, &inst.signal.support).unwrap();
        let x = inst.signal.dense();
        let err: f64 = x_hat.iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-8 * linalg::norm_sq(&x).sqrt());
    }

    #[test]
    fn genie_single_step() {
        let spec = SignalSpec::equal_power(40, 1, 1.0, Noise::Gaussian);
        let inst = generate_instance(&spec, 20, 8).unwrap();
        let g = run_genie(&inst).unwrap();
        assert_eq!(g.trace.order(), inst.signal.support);
        assert_eq!(g.rho_table.len(), 2);
    }

    #[test]
    fn genie_recovers_true_support() {
        let spec = SignalSpec::equal_power(60, 6, 1.0, Noise::Noiseless);
        let inst = generate_instance(&spec, 25, 2).unwrap();
        let g = run_genie(&inst).unwrap();
        let mut order = g.trace.order();
        order.sort_unstable();
        assert_eq!(order, inst.signal.support);
        // noiseless: the last row sees an exhausted residual
        assert!(g.rho_table[6].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_thresholds() {
        let spec = SignalSpec::equal_power(60, 6, 1.0, Noise::Gaussian);
        let inst = generate_instance(&spec, 25, 2).unwrap();
        let g = run_genie(&inst).unwrap();
        let s = &inst.signal.support;
        let e = check_events(&g.rho_table, s, 0.0);
        assert!(!e.missed_detection && e.false_alarm);
        let e = check_events(&g.rho_table, s, 1e300);
        assert!(e.missed_detection && !e.false_alarm);
    }

    #[test]
    fn trace_prefix_matches_direct_runs() {
        let spec = SignalSpec::equal_power(80, 8, 100.0, Noise::Gaussian);
        let inst = generate_instance(&spec, 40, 17).unwrap();
        let full = omp_trace(&inst.a, &inst.y, 1e-4, 40);
        for mu in [1e-3, 0.01, 0.05, 0.1, 0.3] {
            let direct = run_omp(&inst, mu, 40).unwrap();
            assert_eq!(full.support_at(mu), direct.support_estimate, "mu={mu}");
        }
    }
}
