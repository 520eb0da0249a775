//! Batch experiments, summary statistics, the DBD study and the scaling probe.

use std::io;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::Analysis;
use crate::instance::{check_generalized_imbalance, generate_instance, GenConfig, Instance};
use crate::market::{run_with_analysis, SimConfig};
use crate::policies::PolicyKind;
use crate::rng::sub_index;
use crate::stats::{self, TTest};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchConfig {
    pub n_instances: u64,
    pub policies: Vec<PolicyKind>,
    pub master_seed: u64,
    pub generation: GenConfig,
    /// Template; seed, stream and policy are overwritten per run.
    pub sim: SimConfig,
}

impl BatchConfig {
    pub fn new(n_instances: u64, policies: Vec<PolicyKind>, master_seed: u64) -> Self {
        BatchConfig {
            n_instances,
            policies,
            master_seed,
            generation: GenConfig::with_seed(master_seed),
            sim: SimConfig { seed: master_seed, ..SimConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub instance_id: u64,
    pub policy: PolicyKind,
    pub ratio: f64,
    #[serde(rename = "V_star")]
    pub v_star: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub dbd01: bool,
    pub dbd04: bool,
}

const CSV_COLUMNS: [&str; 7] = ["instance_id", "policy", "ratio", "V_star", "C", "dbd01", "dbd04"];

fn csv_error(e: csv::Error) -> crate::Error {
    crate::Error::Parse(e.to_string())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchResult {
    /// Sorted by instance, then by the requested policy order.
    pub rows: Vec<BatchRow>,
    pub skipped: Vec<u64>,
}

impl BatchResult {
    /// CSV with columns `instance_id, policy, ratio, V_star, C, dbd01, dbd04`.
    pub fn write_csv<W: io::Write>(&self, w: W) -> crate::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn from_csv(text: &str) -> crate::Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(csv_error)?;
        if headers != CSV_COLUMNS.as_slice() {
            return Err(crate::Error::Parse(format!("expected columns {}", CSV_COLUMNS.join(","))));
        }
        let rows = reader.deserialize().collect::<Result<Vec<BatchRow>, _>>().map_err(csv_error)?;
        Ok(BatchResult { rows, skipped: Vec::new() })
    }

    /// Ratios of one policy, in instance order.
    pub fn ratios(&self, policy: PolicyKind) -> Vec<f64> {
        self.rows.iter().filter(|r| r.policy == policy).map(|r| r.ratio).collect()
    }

    pub fn policies(&self) -> Vec<PolicyKind> {
        let mut ps: Vec<PolicyKind> = Vec::new();
        for r in &self.rows {
            if !ps.contains(&r.policy) {
                ps.push(r.policy);
            }
        }
        ps
    }
}

/// Runs every policy on one instance with index-derived seeds.
pub fn run_instance(inst: &Instance, id: u64, policies: &[PolicyKind], sim: &SimConfig) -> crate::Result<Vec<BatchRow>> {
    let analysis = Analysis::new(inst)?;
    policies
        .iter()
        .map(|&policy| {
            let cfg = SimConfig { policy, stream: id, ..sim.clone() };
            let m = run_with_analysis(inst, &analysis, &cfg)?;
            Ok(BatchRow {
                instance_id: id,
                policy,
                ratio: m.ratio,
                v_star: analysis.plan.value,
                c: analysis.c_total,
                dbd01: analysis.dbd01,
                dbd04: analysis.dbd04,
            })
        })
        .collect()
}

/// Generates `n_instances` instances and runs each policy on each,
/// in parallel across instances.
pub fn run_batch(cfg: &BatchConfig) -> crate::Result<BatchResult> {
    if cfg.n_instances == 0 || cfg.policies.is_empty() {
        return Err(crate::Error::Precondition("batch needs at least one instance and one policy".into()));
    }
    let sim = SimConfig { seed: cfg.master_seed, ..cfg.sim.clone() };
    let per_instance: Vec<crate::Result<Option<Vec<BatchRow>>>> = (0..cfg.n_instances)
        .into_par_iter()
        .map(|id| {
            let inst = generate_instance(&cfg.generation, id);
            if !check_generalized_imbalance(&inst) {
                return Ok(None);
            }
            run_instance(&inst, id, &cfg.policies, &sim).map(Some)
        })
        .collect();
    let mut result = BatchResult::default();
    for (id, r) in per_instance.into_iter().enumerate() {
        match r? {
            Some(rows) => result.rows.extend(rows),
            None => {
                warn!("instance {id} violates generalized imbalance; skipped");
                result.skipped.push(id as u64);
            }
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub n: usize,
    pub mean_ratio: f64,
    pub std_error: f64,
    pub cdf: Vec<(f64, f64)>,
}

pub fn summarize_policy(batch: &BatchResult, policy: PolicyKind) -> PolicySummary {
    let xs = batch.ratios(policy);
    PolicySummary {
        policy,
        n: xs.len(),
        mean_ratio: stats::mean(&xs),
        std_error: stats::std_error(&xs),
        cdf: stats::ecdf(&xs),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DbdStudy {
    /// Instances that are 0.1-DBD.
    pub n_a: usize,
    /// Instances that are 0.4-DBD but not 0.1-DBD.
    pub n_b: usize,
    /// Mean % regret reduction of DEEM⁺ over PA-Greedy.
    pub mean_reduction_a: f64,
    pub mean_reduction_b: f64,
    pub test: TTest,
}

/// 100·(regret_greedy − regret_other)/regret_greedy with regret = 1 − ratio.
pub fn regret_reduction(ratio_greedy: f64, ratio_other: f64) -> f64 {
    100.0 * ((1.0 - ratio_greedy) - (1.0 - ratio_other)) / (1.0 - ratio_greedy)
}

/// Compares DEEM⁺'s regret reduction over PA-Greedy between 0.1-DBD and
/// (0.4-DBD minus 0.1-DBD) instances. Instances where greedy has no regret
/// are left out. `None` if either sample has fewer than two instances.
pub fn dbd_study(batch: &BatchResult) -> Option<DbdStudy> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for g in batch.rows.iter().filter(|r| r.policy == PolicyKind::PaGreedy) {
        let Some(d) = batch
            .rows
            .iter()
            .find(|r| r.policy == PolicyKind::DeemPlus && r.instance_id == g.instance_id)
        else {
            continue;
        };
        if g.ratio >= 1.0 {
            continue;
        }
        let red = regret_reduction(g.ratio, d.ratio);
        if g.dbd01 {
            a.push(red);
        } else if g.dbd04 {
            b.push(red);
        }
    }
    let test = stats::welch_one_tailed(&a, &b)?;
    Some(DbdStudy {
        n_a: a.len(),
        n_b: b.len(),
        mean_reduction_a: stats::mean(&a),
        mean_reduction_b: stats::mean(&b),
        test,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub n_instances: usize,
    pub policies: Vec<PolicySummary>,
    pub dbd: Option<DbdStudy>,
}

pub fn report(batch: &BatchResult) -> Report {
    let policies: Vec<_> = batch.policies().into_iter().map(|p| summarize_policy(batch, p)).collect();
    let mut ids: Vec<u64> = batch.rows.iter().map(|r| r.instance_id).collect();
    ids.dedup();
    Report { n_instances: ids.len(), policies, dbd: dbd_study(batch) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub lifetime: u32,
    pub replicates: usize,
    /// Mean over replicates of (τV* − payoff rate)/τ.
    pub regret: f64,
    pub regret_std_error: f64,
    /// regret · N / (C ln N).
    pub normalized: f64,
}

/// Two types, two jobs, slack capacity. Easy jobs are optimal for novices
/// and say nothing about novice vs expert; hard jobs tell them apart but cost
/// novices regret. This gives C > 0.
pub fn difficult_instance(lifetime: u32) -> Instance {
    Instance::new(vec![1.0, 1.0], vec![2.5, 2.5], vec![vec![0.5, 0.3], vec![0.5, 0.9]], lifetime)
        .expect("valid constant instance")
}

/// Measured periods used by the probe at lifetime N, after the default burn-in.
pub fn probe_periods(lifetime: u32) -> u32 {
    (4 * lifetime).max(300)
}

/// Measures regret of `policy` at each lifetime in `lifetimes`, with ρ̂ = ρ/N
/// rescaled and the burn-in taken from `sim.warmup`.
///
/// The payoff rate is the expected payoff of realized matches, which removes
/// Bernoulli outcome noise.
pub fn scaling_probe(
    inst: &Instance,
    policy: PolicyKind,
    lifetimes: &[u32],
    replicates: usize,
    sim: &SimConfig,
) -> crate::Result<Vec<ScalingPoint>> {
    let base = Analysis::new(inst)?;
    if base.c_total <= 0.0 {
        return Err(crate::Error::Precondition("scaling probe needs an instance with C > 0".into()));
    }
    let c = base.c_total;
    let jobs: Vec<(usize, usize)> = (0..lifetimes.len()).flat_map(|k| (0..replicates).map(move |r| (k, r))).collect();
    let regrets: Vec<crate::Result<f64>> = jobs
        .par_iter()
        .map(|&(k, r)| {
            let n = lifetimes[k];
            let scaled = inst.with_lifetime(n);
            let analysis = Analysis::new(&scaled)?;
            let cfg = SimConfig {
                policy,
                periods: probe_periods(n),
                stream: sub_index(k as u64, r as u64),
                ..sim.clone()
            };
            let m = run_with_analysis(&scaled, &analysis, &cfg)?;
            let rate = m.expected_payoff / f64::from(m.periods_measured);
            Ok((cfg.tau * analysis.plan.value - rate) / cfg.tau)
        })
        .collect();
    let regrets: Vec<f64> = regrets.into_iter().collect::<crate::Result<_>>()?;
    Ok(lifetimes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let xs = &regrets[k * replicates..(k + 1) * replicates];
            let regret = stats::mean(xs);
            let nf = f64::from(n);
            ScalingPoint {
                lifetime: n,
                replicates,
                regret,
                regret_std_error: stats::std_error(xs),
                normalized: regret * nf / (c * nf.ln()),
            }
        })
        .collect())
}
