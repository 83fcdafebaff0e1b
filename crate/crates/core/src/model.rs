//! Sparse signals and Gaussian measurement instances.
//!
//! Every random object is a pure function of a 64-bit seed. Sweeps derive
//! per-trial seeds with [`derive_seed`], so results do not depend on the
//! order in which trials are executed.

use std::io::{self, BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::{norm_sq, DenseMatrix};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid signal spec: {0}")]
    InvalidSpec(String),
    #[error("instance format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a path of integers (cell coordinates, trial index).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// How per-entry powers are spread across a dynamic range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerSpacing {
    /// Uniform in linear power.
    #[default]
    Linear,
    /// Uniform in decibels.
    Decibel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    /// Every nonzero entry has magnitude `C`.
    Equal(f64),
    /// Entry powers spread over `db` decibels, rescaled so that `‖x‖²`
    /// equals `total_power`.
    DynamicRange {
        db: f64,
        total_power: f64,
        spacing: PowerSpacing,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Noiseless,
    /// i.i.d. `N(0, 1/m)` entries.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignMode {
    #[default]
    Random,
    Positive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub n: usize,
    pub k: usize,
    pub amplitude: Amplitude,
    pub noise: Noise,
    pub signs: SignMode,
}

impl SignalSpec {
    /// Equal magnitudes with `‖x‖² = snr`.
    pub fn equal_power(n: usize, k: usize, snr: f64, noise: Noise) -> Self {
        Self {
            n,
            k,
            amplitude: Amplitude::Equal((snr / k as f64).sqrt()),
            noise,
            signs: SignMode::Random,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k == 0 || self.k >= self.n {
            return Err(ModelError::InvalidSpec(format!(
                "need 1 <= k < n, got k={} n={}",
                self.k, self.n
            )));
        }
        match self.amplitude {
            Amplitude::Equal(c) if !(c > 0.0 && c.is_finite()) => {
                Err(ModelError::InvalidSpec(format!("magnitude must be positive, got {c}")))
            }
            Amplitude::DynamicRange { db, total_power, .. }
                if !(db >= 0.0 && db.is_finite() && total_power > 0.0 && total_power.is_finite()) =>
            {
                Err(ModelError::InvalidSpec(format!(
                    "dynamic range needs db >= 0 and positive power, got db={db} power={total_power}"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub n: usize,
    /// Sorted ascending.
    pub support: Vec<usize>,
    /// `values[i]` sits at `support[i]`.
    pub values: Vec<f64>,
}

impl SparseSignal {
    pub fn new(n: usize, support: Vec<usize>, values: Vec<f64>) -> Result<Self, ModelError> {
        if support.len() != values.len() || support.is_empty() || support.len() >= n {
            return Err(ModelError::InvalidSpec(
                "support and values must have equal length k with 1 <= k < n".into(),
            ));
        }
        if values.iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return Err(ModelError::InvalidSpec("values must be finite and nonzero".into()));
        }
        let mut pairs: Vec<(usize, f64)> = support.into_iter().zip(values).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) || pairs.last().unwrap().0 >= n {
            return Err(ModelError::InvalidSpec(
                "support indices must be distinct and < n".into(),
            ));
        }
        let (support, values) = pairs.into_iter().unzip();
        Ok(Self { n, support, values })
    }

    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (&j, &v) in self.support.iter().zip(&self.values) {
            x[j] = v;
        }
        x
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.values)
    }

    pub fn min_magnitude(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, j: usize) -> bool {
        self.support.binary_search(&j).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub signal: SparseSignal,
    pub a: DenseMatrix,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Builds `y = A x + w`.
    pub fn from_parts(signal: SparseSignal, a: DenseMatrix, w: Vec<f64>, seed: u64) -> Self {
        assert_eq!(a.cols(), signal.n, "A must have n columns");
        assert_eq!(w.len(), a.rows(), "noise must have m entries");
        let ax = a.mul_vec(&signal.dense());
        let y = ax.iter().zip(&w).map(|(p, q)| p + q).collect();
        Self { signal, a, w, y, seed }
    }

    /// Writes the plain-text debugging format described in the README.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (m, n) = (self.m(), self.n());
        writeln!(out, "omp-instance v1")?;
        writeln!(out, "m {m} n {n} k {} seed {}", self.signal.k(), self.seed)?;
        for (j, v) in self.signal.support.iter().zip(&self.signal.values) {
            writeln!(out, "x {j} {v:e}")?;
        }
        for i in 0..m {
            let row: Vec<String> = self.a.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "a {}", row.join(" "))?;
        }
        let w: Vec<String> = self.w.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "w {}", w.join(" "))?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, ModelError> {
        let bad = |s: &str| ModelError::Format(s.to_string());
        let mut lines = input.lines();
        let mut next = || -> Result<String, ModelError> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of input"))?
                .map_err(ModelError::from)
        };
        if next()?.trim() != "omp-instance v1" {
            return Err(bad("missing header"));
        }
        let dims = next()?;
        let f: Vec<&str> = dims.split_whitespace().collect();
        if f.len() != 8 || f[0] != "m" || f[2] != "n" || f[4] != "k" || f[6] != "seed" {
            return Err(bad("malformed dimension line"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let (m, n, k) = (parse_usize(f[1])?, parse_usize(f[3])?, parse_usize(f[5])?);
        let seed = f[7].parse::<u64>().map_err(|_| bad("bad seed"))?;
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        let mut support = Vec::with_capacity(k);
        let mut values = Vec::with_capacity(k);
        for _ in 0..k {
            let line = next()?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 || f[0] != "x" {
                return Err(bad("malformed signal line"));
            }
            support.push(parse_usize(f[1])?);
            values.push(parse_f(f[2])?);
        }
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            let line = next()?;
            let mut f = line.split_whitespace();
            if f.next() != Some("a") {
                return Err(bad("malformed matrix row"));
            }
            let row = f.map(parse_f).collect::<Result<Vec<_>, _>>()?;
            if row.len() != n {
                return Err(bad("matrix row has wrong length"));
            }
            data.extend(row);
        }
        let line = next()?;
        let mut f = line.split_whitespace();
        if f.next() != Some("w") {
            return Err(bad("malformed noise line"));
        }
        let w = f.map(parse_f).collect::<Result<Vec<_>, _>>()?;
        if w.len() != m {
            return Err(bad("noise has wrong length"));
        }
        let signal = SparseSignal::new(n, support, values)?;
        let a = DenseMatrix::from_row_major(m, n, data).map_err(|e| bad(&e.to_string()))?;
        Ok(Self::from_parts(signal, a, w, seed))
    }
}

fn random_sign<R: Rng>(rng: &mut R, mode: SignMode) -> f64 {
    match mode {
        SignMode::Positive => 1.0,
        SignMode::Random => {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        }
    }
}

pub fn generate_signal_with<R: Rng>(spec: &SignalSpec, rng: &mut R) -> SparseSignal {
    let mut support = index::sample(rng, spec.n, spec.k).into_vec();
    support.sort_unstable();
    let values = match spec.amplitude {
        Amplitude::Equal(c) => (0..spec.k).map(|_| c * random_sign(rng, spec.signs)).collect(),
        Amplitude::DynamicRange {
            db,
            total_power,
            spacing,
        } => {
            let floor = 10f64.powf(-db / 10.0);
            let powers: Vec<f64> = (0..spec.k)
                .map(|_| match spacing {
                    PowerSpacing::Linear => rng.random_range(floor..=1.0),
                    PowerSpacing::Decibel => 10f64.powf(-db * rng.random::<f64>() / 10.0),
                })
                .collect();
            let scale = total_power / powers.iter().sum::<f64>();
            powers
                .iter()
                .map(|p| (p * scale).sqrt() * random_sign(rng, spec.signs))
                .collect()
        }
    };
    SparseSignal {
        n: spec.n,
        support,
        values,
    }
}

pub fn generate_signal(spec: &SignalSpec, seed: u64) -> Result<SparseSignal, ModelError> {
    spec.validate()?;
    Ok(generate_signal_with(spec, &mut rng_from_seed(seed)))
}

/// Draws `x`, then `A` row by row, then `w`, all from one seeded stream.
pub fn generate_instance(spec: &SignalSpec, m: usize, seed: u64) -> Result<ProblemInstance, ModelError> {
    spec.validate()?;
    if m == 0 {
        return Err(ModelError::InvalidSpec("m must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let signal = generate_signal_with(spec, &mut rng);
    let sd = (1.0 / m as f64).sqrt();
    let data: Vec<f64> = (0..m * spec.n)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let a = DenseMatrix::from_row_major(m, spec.n, data).expect("finite Gaussian entries");
    let w = match spec.noise {
        Noise::Noiseless => vec![0.0; m],
        Noise::Gaussian => (0..m).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect(),
    };
    Ok(ProblemInstance::from_parts(signal, a, w, seed))
}

/// The definitional SNR `‖x‖²` under unit-power columns and noise.
pub fn snr(instance: &ProblemInstance) -> f64 {
    instance.signal.norm_sq()
}
