//! Measurement scaling laws and the threshold plan used to stop OMP.
//!
//! All logarithms are natural.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("m = {m} is at or below the sufficient scaling 2 k_max ln(n - k_min) = {required:.4}")]
    BelowScaling { m: usize, required: f64 },
    #[error("invalid plan parameters: {0}")]
    InvalidParameters(String),
    #[error("fixed-point iteration did not converge")]
    NoFixedPoint,
}

/// `2 k ln(n - k)`: the measurement count at which threshold-stopped OMP
/// recovers the support (the `δ = 0` boundary).
pub fn m_theory(k: usize, n: usize) -> f64 {
    assert!(k >= 1 && k < n, "m_theory needs 1 <= k < n");
    2.0 * k as f64 * ((n - k) as f64).ln()
}

/// `4 k ln n`, the earlier sufficient condition for OMP.
pub fn m_tropp_gilbert(k: usize, n: usize) -> f64 {
    assert!(k >= 1 && n >= 2, "m_tropp_gilbert needs k >= 1 and n >= 2");
    4.0 * k as f64 * (n as f64).ln()
}

/// `2 k ln(n / m)` evaluated at a given `m`. Reference curve only.
pub fn m_donoho_tanner(k: usize, m_current: f64, n: usize) -> f64 {
    assert!(m_current >= 1.0 && m_current <= n as f64, "need 1 <= m <= n");
    2.0 * k as f64 * (n as f64 / m_current).ln()
}

/// Solves `m = 2 k ln(n / m)` on `(0, n)`.
///
/// Newton steps on `f(m) = m - 2k ln(n/m)` (increasing and concave), kept
/// inside a shrinking bracket with a bisection fallback.
pub fn donoho_tanner_fixed_point(k: usize, n: usize) -> Result<f64, ThresholdError> {
    if k == 0 || n < 2 {
        return Err(ThresholdError::InvalidParameters("need k >= 1 and n >= 2".into()));
    }
    let two_k = 2.0 * k as f64;
    let nf = n as f64;
    let f = |m: f64| m - two_k * (nf / m).ln();
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, nf);
    let mut m = (two_k * nf.ln()).min(nf);
    for _ in 0..200 {
        let fm = f(m);
        if fm.abs() <= 1e-9 {
            return Ok(m);
        }
        if fm > 0.0 {
            hi = m;
        } else {
            lo = m;
        }
        let newton = m - fm / (1.0 + two_k / m);
        m = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(ThresholdError::NoFixedPoint)
}

/// `(δ, ε, μ)` for a measurement count and sparsity range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdPlan {
    pub m: usize,
    pub n: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub mu: f64,
    /// False when the plan was forced below the sufficient scaling.
    pub reliable: bool,
}

/// `ε` used when a plan is forced below the scaling boundary.
pub const FORCED_EPSILON: f64 = 0.01;

fn check_plan_args(m: usize, n: usize, k_min: usize, k_max: usize) -> Result<(), ThresholdError> {
    if m == 0 || k_min == 0 || k_min > k_max || 2 * k_max >= n {
        return Err(ThresholdError::InvalidParameters(format!(
            "need m >= 1 and 1 <= k_min <= k_max < n/2 (m={m}, n={n}, k_min={k_min}, k_max={k_max})"
        )));
    }
    Ok(())
}

/// Builds the plan, taking the largest admissible `ε = √(1+δ) − 1`.
pub fn make_plan(m: usize, n: usize, k_min: usize, k_max: usize) -> Result<ThresholdPlan, ThresholdError> {
    check_plan_args(m, n, k_min, k_max)?;
    plan_for_measurements(m as f64, n, k_min, k_max).map(|(delta, epsilon, mu)| ThresholdPlan {
        m,
        n,
        k_min,
        k_max,
        delta,
        epsilon,
        mu,
        reliable: true,
    })
}

/// `(δ, ε, μ)` for a real-valued measurement budget.
fn plan_for_measurements(m: f64, n: usize, k_min: usize, k_max: usize) -> Result<(f64, f64, f64), ThresholdError> {
    let log_term = ((n - k_min) as f64).ln();
    let required = 2.0 * k_max as f64 * log_term;
    let delta = m / required - 1.0;
    if delta <= 0.0 {
        return Err(ThresholdError::BelowScaling {
            m: m as usize,
            required,
        });
    }
    let epsilon = (1.0 + delta).sqrt() - 1.0;
    Ok((delta, epsilon, 2.0 * (1.0 + epsilon) / m * log_term))
}

/// Like [`make_plan`], but below the scaling boundary clamps `ε` to
/// [`FORCED_EPSILON`] and marks the plan unreliable.
pub fn make_plan_forced(m: usize, n: usize, k_min: usize, k_max: usize) -> Result<ThresholdPlan, ThresholdError> {
    match make_plan(m, n, k_min, k_max) {
        Err(ThresholdError::BelowScaling { required, .. }) => {
            let log_term = ((n - k_min) as f64).ln();
            let epsilon = FORCED_EPSILON;
            Ok(ThresholdPlan {
                m,
                n,
                k_min,
                k_max,
                delta: m as f64 / required - 1.0,
                epsilon,
                mu: 2.0 * (1.0 + epsilon) / m as f64 * log_term,
                reliable: false,
            })
        }
        other => other,
    }
}

impl ThresholdPlan {
    /// Lower bound `2(1+ε) ln(n−k) / m` that `μ` must dominate for `k ≥ k_min`.
    pub fn lower_bound(&self, k: usize) -> f64 {
        2.0 * (1.0 + self.epsilon) / self.m as f64 * ((self.n - k) as f64).ln()
    }

    /// Upper bound `1 / ((1+ε) k)` that `μ` must respect for `k ≤ k_max`.
    pub fn upper_bound(&self, k: usize) -> f64 {
        1.0 / ((1.0 + self.epsilon) * k as f64)
    }
}
