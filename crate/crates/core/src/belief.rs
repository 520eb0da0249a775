//! Per-worker Bayesian state over worker types.
//!
//! All odds are kept in log space (natural log). A type whose likelihood
//! reaches zero is marked by a log-likelihood of −∞ and stays in the vector
//! so indices remain stable.

use crate::analytics::LearningStructure;
use crate::instance::Instance;

/// Precomputed log-likelihood tables for one instance.
#[derive(Debug, Clone)]
pub struct BeliefModel {
    n_types: usize,
    n_jobs: usize,
    /// ln A(i,j), row-major.
    log_success: Vec<f64>,
    /// ln(1 − A(i,j)), row-major.
    log_failure: Vec<f64>,
    log_prior: Vec<f64>,
}

impl BeliefModel {
    pub fn new(inst: &Instance) -> Self {
        let n_types = inst.n_worker_types();
        let n_jobs = inst.n_job_types();
        let flat = inst.a.iter().flatten();
        let log_success = flat.clone().map(|a| a.ln()).collect();
        let log_failure = flat.map(|a| (1.0 - a).ln()).collect();
        let log_prior = (0..n_types).map(|i| inst.rho_hat(i).ln()).collect();
        BeliefModel { n_types, n_jobs, log_success, log_failure, log_prior }
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    /// A belief with no observations.
    pub fn fresh(&self) -> WorkerBelief {
        WorkerBelief { log_post: self.log_prior.clone(), k: 0 }
    }

    pub fn log_prior(&self, i: usize) -> f64 {
        self.log_prior[i]
    }
}

/// Unnormalized log posterior ln ρ̂(i) + ln λ_k(i) per type, plus the job count.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerBelief {
    log_post: Vec<f64>,
    k: u32,
}

impl WorkerBelief {
    /// Jobs observed so far.
    #[inline]
    pub fn jobs(&self) -> u32 {
        self.k
    }

    /// Folds in the outcome of one real job.
    ///
    /// Panics if `job` is κ, which produces no observation.
    pub fn update(&mut self, model: &BeliefModel, job: usize, success: bool) {
        assert!(job < model.n_jobs, "the empty job type produces no observation");
        let table = if success { &model.log_success } else { &model.log_failure };
        let row = &table[job..];
        for (i, lp) in self.log_post.iter_mut().enumerate() {
            *lp += row[i * model.n_jobs];
        }
        self.k += 1;
    }

    /// ln λ_k(i).
    pub fn log_likelihood(&self, model: &BeliefModel, i: usize) -> f64 {
        self.log_post[i] - model.log_prior[i]
    }

    #[inline]
    pub fn log_posterior(&self, i: usize) -> f64 {
        self.log_post[i]
    }

    #[inline]
    pub fn is_eliminated(&self, i: usize) -> bool {
        self.log_post[i] == f64::NEG_INFINITY
    }

    /// ln Λ_k(i,i′) = ln ρ̂(i)λ_k(i) − ln ρ̂(i′)λ_k(i′); ±∞ when one side is eliminated.
    #[inline]
    pub fn log_odds(&self, i: usize, i_alt: usize) -> f64 {
        let (a, b) = (self.log_post[i], self.log_post[i_alt]);
        match (a == f64::NEG_INFINITY, b == f64::NEG_INFINITY) {
            (false, false) => a - b,
            (false, true) => f64::INFINITY,
            (true, false) => f64::NEG_INFINITY,
            // Both impossible; treated as indifferent.
            (true, true) => 0.0,
        }
    }

    /// Most probable type, lowest index on ties.
    pub fn map_estimate(&self) -> usize {
        let mut best = 0;
        for i in 1..self.log_post.len() {
            if self.log_post[i] > self.log_post[best] {
                best = i;
            }
        }
        best
    }

    /// min over i′ ≠ i of ln Λ_k(i,i′); +∞ with a single type.
    pub fn min_log_odds(&self, i: usize) -> f64 {
        (0..self.log_post.len())
            .filter(|&k| k != i)
            .map(|k| self.log_odds(i, k))
            .fold(f64::INFINITY, f64::min)
    }

    /// Posterior g_k over types, computed with max-subtraction.
    pub fn posterior_into(&self, out: &mut [f64]) {
        let m = self.log_post[self.map_estimate()];
        let mut total = 0.0;
        for (o, &lp) in out.iter_mut().zip(&self.log_post) {
            *o = if lp == f64::NEG_INFINITY { 0.0 } else { (lp - m).exp() };
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }

    pub fn posterior(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.log_post.len()];
        self.posterior_into(&mut out);
        out
    }

    /// ln Λ̂_k(i,i′): the odds rescaled by R(i,i′), and snapped to ln N off
    /// Str(i) once the rescaled odds reach ln N.
    pub fn log_capped_odds(&self, i: usize, i_alt: usize, structure: &LearningStructure, lifetime: u32) -> f64 {
        let scaled = self.log_odds(i, i_alt) - structure.regret_scale[i][i_alt].ln();
        if structure.strong[i].contains(i_alt) {
            return scaled;
        }
        let log_n = f64::from(lifetime).ln();
        // Λ/R < log N  ⇔  ln(Λ/R) < ln ln N
        if scaled < log_n.ln() {
            scaled
        } else {
            log_n
        }
    }

    /// Λ̂_k(i,i′) on the natural scale.
    pub fn capped_odds(&self, i: usize, i_alt: usize, structure: &LearningStructure, lifetime: u32) -> f64 {
        self.log_capped_odds(i, i_alt, structure, lifetime).exp()
    }
}
