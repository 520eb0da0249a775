//! Problem instances: worker masses, job arrival masses, payoff matrix and
//! worker lifetime.
//!
//! The empty job type κ is never stored. Every job index `j` in
//! `0..n_job_types()` is a real job type and the index `n_job_types()` is κ,
//! with payoff 0, price 0 and unlimited capacity.

use std::fmt;
use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, Purpose};

/// Strict-inequality tolerance of the generalized imbalance check.
pub const TOL_IMBALANCE: f64 = 1e-9;

/// Largest number of job types (κ included) a [`crate::JobSet`] can hold.
pub const MAX_JOB_TYPES: usize = 63;
/// Largest number of worker types a [`crate::TypeSet`] can hold.
pub const MAX_WORKER_TYPES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Steady-state worker mass per worker type.
    pub rho: Vec<f64>,
    /// Arrival mass per real job type.
    pub mu: Vec<f64>,
    /// Success probabilities, one row per worker type, one column per real job type.
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    /// Worker lifetime in periods.
    #[serde(rename = "N")]
    pub lifetime: u32,
}

/// A failed instance invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    DimensionMismatch,
    TooManyTypes,
    NonFinite,
    NonpositiveRho,
    NonpositiveMu,
    PayoffOutOfRange,
    DuplicateRows,
    ZeroLifetime,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Violation::Empty => "no worker or job types",
            Violation::DimensionMismatch => "dimension mismatch",
            Violation::TooManyTypes => "too many types",
            Violation::NonFinite => "non-finite value",
            Violation::NonpositiveRho => "nonpositive rho",
            Violation::NonpositiveMu => "nonpositive mu",
            Violation::PayoffOutOfRange => "A entry outside [0,1]",
            Violation::DuplicateRows => "duplicate A rows",
            Violation::ZeroLifetime => "zero lifetime",
        };
        f.write_str(s)
    }
}

impl Instance {
    pub fn new(rho: Vec<f64>, mu: Vec<f64>, a: Vec<Vec<f64>>, lifetime: u32) -> crate::Result<Self> {
        let inst = Instance { rho, mu, a, lifetime };
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(crate::Error::InvalidInstance(violations))
        }
    }

    #[inline]
    pub fn n_worker_types(&self) -> usize {
        self.rho.len()
    }

    /// Number of real job types (κ excluded).
    #[inline]
    pub fn n_job_types(&self) -> usize {
        self.mu.len()
    }

    /// Index of the empty job type.
    #[inline]
    pub fn kappa(&self) -> usize {
        self.mu.len()
    }

    /// Payoff of worker type `i` on job `j`, with `A(i, κ) = 0`.
    #[inline]
    pub fn payoff(&self, i: usize, j: usize) -> f64 {
        if j == self.kappa() {
            0.0
        } else {
            self.a[i][j]
        }
    }

    /// Per-period arrival mass ρ̂(i) = ρ(i)/N.
    #[inline]
    pub fn rho_hat(&self, i: usize) -> f64 {
        self.rho[i] / f64::from(self.lifetime)
    }

    /// Same masses and payoffs with a different lifetime; ρ̂ rescales as ρ/N.
    pub fn with_lifetime(&self, lifetime: u32) -> Instance {
        Instance { lifetime, ..self.clone() }
    }

    /// Returns every violated invariant. Empty means the instance is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rho.is_empty() || self.mu.is_empty() {
            out.push(Violation::Empty);
        }
        if self.a.len() != self.rho.len() || self.a.iter().any(|r| r.len() != self.mu.len()) {
            out.push(Violation::DimensionMismatch);
            return out;
        }
        if self.mu.len() + 1 > MAX_JOB_TYPES || self.rho.len() > MAX_WORKER_TYPES {
            out.push(Violation::TooManyTypes);
        }
        let all = self.rho.iter().chain(&self.mu).chain(self.a.iter().flatten());
        if all.clone().any(|x| !x.is_finite()) {
            out.push(Violation::NonFinite);
        }
        if self.rho.iter().any(|&r| !(r > 0.0)) {
            out.push(Violation::NonpositiveRho);
        }
        if self.mu.iter().any(|&m| !(m > 0.0)) {
            out.push(Violation::NonpositiveMu);
        }
        if self.a.iter().flatten().any(|&x| !(0.0..=1.0).contains(&x)) {
            out.push(Violation::PayoffOutOfRange);
        }
        if has_duplicate_rows(&self.a) {
            out.push(Violation::DuplicateRows);
        }
        if self.lifetime == 0 {
            out.push(Violation::ZeroLifetime);
        }
        out
    }

    /// Serializes to the instance file format, every float written with 17
    /// significant digits.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON output is UTF-8")
    }

    pub fn write_json<W: io::Write>(&self, writer: W) -> crate::Result<()> {
        let mut ser = serde_json::Serializer::with_formatter(writer, Digits17);
        self.serialize(&mut ser)?;
        Ok(())
    }

    pub fn from_json(s: &str) -> crate::Result<Self> {
        let inst: Instance = serde_json::from_str(s)?;
        let violations = inst.validate();
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(crate::Error::InvalidInstance(violations))
        }
    }
}

fn has_duplicate_rows(a: &[Vec<f64>]) -> bool {
    a.iter()
        .enumerate()
        .any(|(i, r)| a[i + 1..].iter().any(|s| s == r))
}

/// serde_json formatter writing floats as `d.dddddddddddddddde±x`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Random instance generator settings. Defaults reproduce the experimental setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_worker_types: usize,
    pub n_job_types: usize,
    pub lifetime: u32,
    pub rho_all: f64,
    pub mu_low: f64,
    pub mu_high: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            n_worker_types: 3,
            n_job_types: 3,
            lifetime: 30,
            rho_all: 1.0,
            mu_low: 0.5,
            mu_high: 1.5,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig { seed, ..Default::default() }
    }
}

/// Draws instance `index` of the family defined by `cfg`:
/// μ(j) ~ U[mu_low, mu_high] and A(i,j) ~ U[0,1], all independent.
///
/// Pure function of `(cfg, index)`. Payoff matrices with duplicate rows are
/// redrawn from the same stream.
pub fn generate_instance(cfg: &GenConfig, index: u64) -> Instance {
    assert!(cfg.mu_low < cfg.mu_high, "mu_low must be below mu_high");
    assert!(cfg.n_worker_types > 0 && cfg.n_job_types > 0 && cfg.lifetime > 0);
    let mut rng = rng::stream(cfg.seed, Purpose::Instance, index);
    let mu: Vec<f64> = (0..cfg.n_job_types)
        .map(|_| rng.random_range(cfg.mu_low..cfg.mu_high))
        .collect();
    let a = loop {
        let a: Vec<Vec<f64>> = (0..cfg.n_worker_types)
            .map(|_| (0..cfg.n_job_types).map(|_| rng.random::<f64>()).collect())
            .collect();
        if !has_duplicate_rows(&a) {
            break a;
        }
    };
    Instance {
        rho: vec![cfg.rho_all; cfg.n_worker_types],
        mu,
        a,
        lifetime: cfg.lifetime,
    }
}

/// True iff no nonempty subset of worker masses sums to the total of any
/// subset of real job masses (within [`TOL_IMBALANCE`]).
pub fn check_generalized_imbalance(inst: &Instance) -> bool {
    let job_sums = subset_sums(&inst.mu);
    let worker_sums = subset_sums(&inst.rho);
    worker_sums
        .iter()
        .skip(1)
        .all(|&w| job_sums.iter().all(|&m| (w - m).abs() > TOL_IMBALANCE))
}

/// Sums of all 2^n subsets, indexed by bitmask; entry 0 is the empty subset.
fn subset_sums(xs: &[f64]) -> Vec<f64> {
    assert!(xs.len() < 26, "subset enumeration is exponential");
    let mut sums = vec![0.0; 1 << xs.len()];
    for mask in 1..sums.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + xs[low];
    }
    sums
}
