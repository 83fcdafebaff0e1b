//! Cyclic coordinate descent for `‖y − A v‖² + λ ‖v‖₁`.
//!
//! The objective carries no 1/2 factor, so each coordinate update
//! soft-thresholds at `λ / 2` before dividing by the squared column norm.

use thiserror::Error;

use crate::exec::Execution;
use crate::linalg::{dot, norm_sq, DenseMatrix};
use crate::model::{derive_seed, generate_instance, ModelError, ProblemInstance, SignalSpec};

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("invalid lasso config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub penalty: f64,
    pub max_sweeps: usize,
    /// Convergence when the largest coordinate change in a sweep drops below this.
    pub tol: f64,
}

impl LassoConfig {
    pub fn new(penalty: f64) -> Self {
        Self {
            penalty,
            max_sweeps: 10_000,
            tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<(), LassoError> {
        if !(self.penalty > 0.0) || !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(LassoError::InvalidConfig(format!(
                "penalty and tol must be positive and max_sweeps >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub x_hat: Vec<f64>,
    /// Indices with `x_hat[j] != 0`.
    pub support: Vec<usize>,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out first; `x_hat` is then the last iterate.
    pub converged: bool,
}

pub fn objective(a: &DenseMatrix, y: &[f64], v: &[f64], penalty: f64) -> f64 {
    let r: Vec<f64> = a.mul_vec(v).iter().zip(y).map(|(p, q)| q - p).collect();
    norm_sq(&r) + penalty * v.iter().map(|x| x.abs()).sum::<f64>()
}

#[inline]
fn soft_threshold(z: f64, level: f64) -> f64 {
    if z > level {
        z - level
    } else if z < -level {
        z + level
    } else {
        0.0
    }
}

/// Column-major copy of `A` so that coordinate updates touch contiguous memory.
struct Columns {
    cols: Vec<Vec<f64>>,
    norms_sq: Vec<f64>,
}

impl Columns {
    fn new(a: &DenseMatrix) -> Self {
        let cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.column(j)).collect();
        let norms_sq = cols.iter().map(|c| norm_sq(c)).collect();
        Self { cols, norms_sq }
    }
}

fn coordinate_descent(cols: &Columns, y: &[f64], start: Vec<f64>, config: &LassoConfig) -> LassoFit {
    let mut x = start;
    let mut residual = y.to_vec();
    for (c, &xj) in cols.cols.iter().zip(&x) {
        if xj != 0.0 {
            residual.iter_mut().zip(c).for_each(|(r, a)| *r -= a * xj);
        }
    }
    let half = 0.5 * config.penalty;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for (j, c) in cols.cols.iter().enumerate() {
            let nsq = cols.norms_sq[j];
            if nsq == 0.0 {
                continue;
            }
            let old = x[j];
            let z = dot(c, &residual) + nsq * old;
            let new = soft_threshold(z, half) / nsq;
            if new != old {
                let d = new - old;
                residual.iter_mut().zip(c).for_each(|(r, a)| *r -= a * d);
                x[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    let support = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, _)| j)
        .collect();
    LassoFit {
        x_hat: x,
        support,
        sweeps,
        converged,
    }
}

pub fn fit_lasso(instance: &ProblemInstance, config: &LassoConfig) -> Result<LassoFit, LassoError> {
    fit_lasso_raw(&instance.a, &instance.y, config)
}

pub fn fit_lasso_raw(a: &DenseMatrix, y: &[f64], config: &LassoConfig) -> Result<LassoFit, LassoError> {
    config.validate()?;
    if y.len() != a.rows() {
        return Err(LassoError::InvalidConfig("y length must equal rows of A".into()));
    }
    let cols = Columns::new(a);
    Ok(coordinate_descent(&cols, y, vec![0.0; a.cols()], config))
}

/// Smallest penalty for which the all-zero vector is optimal: `2 ‖A' y‖_∞`.
pub fn penalty_max(a: &DenseMatrix, y: &[f64]) -> f64 {
    2.0 * a.tr_mul_vec(y).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Support after dropping coordinates below `1e-8 · max |x_hat|`.
pub fn thresholded_support(x_hat: &[f64]) -> Vec<usize> {
    let peak = x_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Vec::new();
    }
    x_hat
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > 1e-8 * peak)
        .map(|(j, _)| j)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyRule {
    Fixed(f64),
    /// Geometric grid from `penalty_max` down to `penalty_max · min_ratio`,
    /// scored by the best point per instance.
    OracleGrid {
        points: usize,
        min_ratio: f64,
    },
}

impl Default for PenaltyRule {
    fn default() -> Self {
        PenaltyRule::OracleGrid {
            points: 20,
            min_ratio: 1e-4,
        }
    }
}

/// Whether the rule recovers the exact support of one instance. Grid points
/// are visited from the largest penalty down with warm starts.
pub fn lasso_recovers(instance: &ProblemInstance, rule: PenaltyRule) -> bool {
    let cols = Columns::new(&instance.a);
    let truth = &instance.signal.support;
    let base = LassoConfig::new(1.0);
    match rule {
        PenaltyRule::Fixed(p) => {
            let fit = coordinate_descent(
                &cols,
                &instance.y,
                vec![0.0; instance.n()],
                &LassoConfig { penalty: p, ..base },
            );
            thresholded_support(&fit.x_hat) == *truth
        }
        PenaltyRule::OracleGrid { points, min_ratio } => {
            let top = penalty_max(&instance.a, &instance.y);
            if top == 0.0 {
                return false;
            }
            let mut warm = vec![0.0; instance.n()];
            for i in 0..points.max(1) {
                let frac = if points > 1 {
                    i as f64 / (points - 1) as f64
                } else {
                    0.0
                };
                let penalty = top * min_ratio.powf(frac);
                let fit = coordinate_descent(&cols, &instance.y, warm, &LassoConfig { penalty, ..base });
                if thresholded_support(&fit.x_hat) == *truth {
                    return true;
                }
                warm = fit.x_hat;
            }
            false
        }
    }
}

/// Fraction of `trials` seeded instances whose support the lasso recovers.
pub fn lasso_support_recovery_rate(
    spec: &SignalSpec,
    m: usize,
    rule: PenaltyRule,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64, LassoError> {
    spec.validate()?;
    if trials == 0 {
        return Err(LassoError::InvalidConfig("trials must be at least 1".into()));
    }
    let hits = exec.map_indexed(trials, |t| {
        generate_instance(spec, m, derive_seed(seed, &[m as u64, t as u64])).map(|inst| lasso_recovers(&inst, rule))
    });
    let mut count = 0usize;
    for h in hits {
        count += usize::from(h?);
    }
    Ok(count as f64 / trials as f64)
}
