//! Normalized Brownian motion `S(t) = B(t) / √t` and Monte Carlo checks of
//! the tail bounds built on it.
//!
//! `S` has unit variance at every time and autocorrelation
//! `E[S(s) S(t)] = √(s/t)` for `s < t`. The same covariance appears for the
//! normalized projections `z_i = y' P(i) a / ‖P(i) y‖` of a white Gaussian
//! vector `a` onto a nested sequence of projections, which is how the false
//! alarm scores of OMP reduce to samples of `S`.

use std::f64::consts::PI;

use libm::erfc;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::exec::Execution;
use crate::linalg::{dot, LinalgError, ProjectionState};
use crate::model::{derive_seed, rng_from_seed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BrownianError {
    #[error("sample times must be positive and strictly increasing")]
    InvalidTimes,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBmPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn check_times(times: &[f64]) -> Result<(), BrownianError> {
    let ok =
        !times.is_empty() && times.iter().all(|t| t.is_finite() && *t > 0.0) && times.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(BrownianError::InvalidTimes)
    }
}

/// Exact finite-dimensional sample: independent `N(0, Δt)` increments.
fn fill_path<R: Rng>(times: &[f64], rng: &mut R, out: &mut [f64]) {
    let mut b = 0.0;
    let mut prev = 0.0;
    for (o, &t) in out.iter_mut().zip(times) {
        b += (t - prev).sqrt() * rng.sample::<f64, _>(StandardNormal);
        prev = t;
        *o = b / t.sqrt();
    }
}

pub fn sample_path(times: &[f64], seed: u64) -> Result<NormalizedBmPath, BrownianError> {
    check_times(times)?;
    let mut values = vec![0.0; times.len()];
    fill_path(times, &mut rng_from_seed(seed), &mut values);
    Ok(NormalizedBmPath {
        times: times.to_vec(),
        values,
    })
}

/// Mean and standard error of `S(s) S(t)` for one pair of times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEstimate {
    pub s: f64,
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub expected: f64,
}

impl CorrelationEstimate {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.expected) / self.std_err
    }
}

/// Estimates `E[S(s) S(t)]` for every pair of the given times, all pairs
/// read off the same paths.
pub fn autocorrelation(
    times: &[f64],
    paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<CorrelationEstimate>, BrownianError> {
    check_times(times)?;
    if paths < 2 {
        return Err(BrownianError::InvalidParameters("need at least 2 paths".into()));
    }
    let p = times.len();
    let samples = exec.map_indexed(paths, |i| {
        let mut v = vec![0.0; p];
        fill_path(times, &mut rng_from_seed(derive_seed(seed, &[i as u64])), &mut v);
        v
    });
    let mut out = Vec::new();
    for a in 0..p {
        for b in (a + 1)..p {
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for v in &samples {
                let prod = v[a] * v[b];
                sum += prod;
                sum_sq += prod * prod;
            }
            let n = paths as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
            out.push(CorrelationEstimate {
                s: times[a],
                t: times[b],
                mean,
                std_err: (var / n).sqrt(),
                expected: (times[a] / times[b]).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Sample variance of `S(t)` at a single time.
pub fn variance_at(t: f64, paths: usize, seed: u64, exec: Execution) -> Result<f64, BrownianError> {
    check_times(&[t])?;
    let v = exec.map_indexed(paths, |i| {
        let mut s = [0.0];
        fill_path(&[t], &mut rng_from_seed(derive_seed(seed, &[i as u64])), &mut s);
        s[0]
    });
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    Ok(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// `Pr(X² > μ)` for standard normal `X`.
pub fn gaussian_sq_tail(mu: f64) -> f64 {
    erfc((mu / 2.0).sqrt())
}

/// Upper bound `√(2 / (π μ)) e^{−μ/2}` on `Pr(X² > μ)`.
pub fn gaussian_sq_tail_bound(mu: f64) -> f64 {
    assert!(mu > 0.0, "tail bound needs mu > 0");
    (2.0 / (PI * mu)).sqrt() * (-mu / 2.0).exp()
}

/// `e^{−μ/2} / (√π μ)`, a variant with a smaller constant. It undercuts the
/// exact tail for small `μ` and is kept only for comparison.
pub fn gaussian_sq_tail_bound_uncorrected(mu: f64) -> f64 {
    (-mu / 2.0).exp() / (PI.sqrt() * mu)
}

/// Bound on `Pr(sup_{[a,b]} S² > μ)` from the reflection principle:
/// twice the Gaussian square tail bound evaluated at `a μ / b`.
pub fn smax_bound(a: f64, b: f64, mu: f64) -> f64 {
    2.0 * gaussian_sq_tail_bound(a * mu / b)
}

/// `(2b / (a μ √π)) e^{−a μ / (2b)}`, the same chain of inequalities with the
/// uncorrected Gaussian constant.
pub fn smax_bound_uncorrected(a: f64, b: f64, mu: f64) -> f64 {
    2.0 * b / (a * mu * PI.sqrt()) * (-a * mu / (2.0 * b)).exp()
}

/// Constants of the refined bound `(C₁ + C₂ ln(b/a)) e^{−μ/2}`, valid for `μ > C₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinedBound {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `None` when `μ ≤ C₃`.
    pub value: Option<f64>,
}

pub fn smax_refined_bound(a: f64, b: f64, mu: f64, delta: f64) -> RefinedBound {
    assert!(delta > 0.0 && a > 0.0 && b > a, "need delta > 0 and 0 < a < b");
    let scale = (delta / 2.0).exp() / (PI.sqrt() * delta);
    let (c1, c2, c3) = (scale, 2.0 * scale, 2.0 * delta);
    let value = (mu > c3).then(|| (c1 + c2 * (b / a).ln()) * (-mu / 2.0).exp());
    RefinedBound {
        delta,
        c1,
        c2,
        c3,
        value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBoundReport {
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub exceedances: usize,
    pub paths: usize,
    pub empirical_prob: f64,
    /// [`smax_bound`] at `(a, b, μ)`.
    pub bound_value: f64,
}

impl TailBoundReport {
    /// One-sided binomial check that the exceedance rate does not
    /// significantly exceed the bound at the given normal quantile
    /// (3.09 for 0.999 confidence).
    pub fn bound_holds(&self, z: f64) -> bool {
        let p = self.bound_value;
        if p >= 1.0 {
            return true;
        }
        let sd = (p * (1.0 - p) / self.paths as f64).sqrt();
        self.empirical_prob <= p + z * sd
    }
}

/// Geometric grid `a (b/a)^{i/(g-1)}`, `i = 0..g`.
pub fn geometric_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    let r = b / a;
    (0..points)
        .map(|i| {
            if i + 1 == points {
                b
            } else {
                a * r.powf(i as f64 / (points - 1) as f64)
            }
        })
        .collect()
}

/// Estimates `Pr(max over a geometric grid of S² > μ)` on `[a, b]`.
///
/// The grid maximum never exceeds the supremum, so the estimate errs low,
/// which is the safe direction when checking an upper bound.
pub fn smax_exceedance(
    a: f64,
    b: f64,
    mu: f64,
    paths: usize,
    grid_points: usize,
    seed: u64,
    exec: Execution,
) -> Result<TailBoundReport, BrownianError> {
    if !(a > 0.0 && b > a && mu > 0.0) || grid_points < 2 || paths == 0 {
        return Err(BrownianError::InvalidParameters(format!(
            "need 0 < a < b, mu > 0, grid_points >= 2, paths >= 1 (a={a}, b={b}, mu={mu})"
        )));
    }
    let grid = geometric_grid(a, b, grid_points);
    let hits = exec.map_indexed(paths, |i| {
        let mut v = vec![0.0; grid.len()];
        fill_path(&grid, &mut rng_from_seed(derive_seed(seed, &[i as u64])), &mut v);
        v.iter().any(|s| s * s > mu)
    });
    let exceedances = hits.into_iter().filter(|h| *h).count();
    Ok(TailBoundReport {
        a,
        b,
        mu,
        exceedances,
        paths,
        empirical_prob: exceedances as f64 / paths as f64,
        bound_value: smax_bound(a, b, mu),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionCovariance {
    /// `t_i = ‖P(i) y‖²`, `i = 0..=L` with `P(0) = I`.
    pub norms_sq: Vec<f64>,
    /// Sample `E[z_i z_j]`.
    pub covariance: Vec<Vec<f64>>,
    /// `√(min(t_i, t_j) / max(t_i, t_j))`.
    pub predicted: Vec<Vec<f64>>,
}

impl ProjectionCovariance {
    pub fn max_abs_deviation(&self) -> f64 {
        self.covariance
            .iter()
            .flatten()
            .zip(self.predicted.iter().flatten())
            .map(|(c, p)| (c - p).abs())
            .fold(0.0, f64::max)
    }
}

/// Sample covariance of `z_i = y' P(i) a / ‖P(i) y‖` for white Gaussian `a`,
/// where `P(i)` projects onto the complement of the first `i` columns.
pub fn projection_sequence_covariance(
    y: &[f64],
    columns: &[Vec<f64>],
    samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<ProjectionCovariance, BrownianError> {
    if samples == 0 {
        return Err(BrownianError::InvalidParameters("samples must be positive".into()));
    }
    let mut state = ProjectionState::new(y);
    let mut directions = Vec::with_capacity(columns.len() + 1);
    let mut norms_sq = Vec::with_capacity(columns.len() + 1);
    for i in 0..=columns.len() {
        if state.is_exhausted() {
            return Err(LinalgError::ZeroResidual.into());
        }
        let t = state.residual_norm_sq();
        let u: Vec<f64> = state.residual().iter().map(|r| r / t.sqrt()).collect();
        directions.push(u);
        norms_sq.push(t);
        if i < columns.len() {
            state.append(i, &columns[i])?;
        }
    }
    let m = y.len();
    let l = directions.len();
    let products = exec.map_indexed(samples, |s| {
        let mut rng = rng_from_seed(derive_seed(seed, &[s as u64]));
        let a: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let z: Vec<f64> = directions.iter().map(|u| dot(u, &a)).collect();
        let mut p = Vec::with_capacity(l * l);
        for zi in &z {
            for zj in &z {
                p.push(zi * zj);
            }
        }
        p
    });
    let mut sum = vec![0.0; l * l];
    for p in &products {
        sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }
    let covariance = (0..l)
        .map(|i| (0..l).map(|j| sum[i * l + j] / samples as f64).collect())
        .collect();
    let predicted = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| {
                    let (lo, hi) = if norms_sq[i] <= norms_sq[j] {
                        (norms_sq[i], norms_sq[j])
                    } else {
                        (norms_sq[j], norms_sq[i])
                    };
                    (lo / hi).sqrt()
                })
                .collect()
        })
        .collect();
    debug_assert!(norms_sq.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    Ok(ProjectionCovariance {
        norms_sq,
        covariance,
        predicted,
    })
}
