//! Matching policies behind one decision interface.
//!
//! Given a worker (belief plus per-worker policy state) and a [`MarketView`]
//! of current prices, a policy names the job type the worker should be
//! offered next. Job index `inst.kappa()` means "leave unmatched".
//!
//! All argmax ties resolve to the lowest index.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, KlTable, LearningStructure};
use crate::belief::{BeliefModel, WorkerBelief};
use crate::instance::Instance;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    PaUcb,
    PaTs,
    Deem,
    PaGreedy,
    DeemPlus,
    /// Knows true types and routes by the known-types plan. Sanity ceiling.
    Oracle,
    /// Never matches anyone.
    Idle,
}

impl PolicyKind {
    /// The five policies of the comparison, in table order.
    pub const COMPARED: [PolicyKind; 5] =
        [PolicyKind::PaUcb, PolicyKind::PaTs, PolicyKind::Deem, PolicyKind::PaGreedy, PolicyKind::DeemPlus];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::PaUcb => "pa-ucb",
            PolicyKind::PaTs => "pa-ts",
            PolicyKind::Deem => "deem",
            PolicyKind::PaGreedy => "pa-greedy",
            PolicyKind::DeemPlus => "deem-plus",
            PolicyKind::Oracle => "oracle",
            PolicyKind::Idle => "idle",
        }
    }

    /// Stable small integer used in seed derivation.
    pub fn code(self) -> u64 {
        match self {
            PolicyKind::PaUcb => 0,
            PolicyKind::PaTs => 1,
            PolicyKind::Deem => 2,
            PolicyKind::PaGreedy => 3,
            PolicyKind::DeemPlus => 4,
            PolicyKind::Oracle => 5,
            PolicyKind::Idle => 6,
        }
    }

    /// Whether decisions read the smoothed-price learning structure.
    pub fn needs_structure(self) -> bool {
        matches!(self, PolicyKind::Deem | PolicyKind::DeemPlus)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pa-ucb" => PolicyKind::PaUcb,
            "pa-ts" => PolicyKind::PaTs,
            "deem" => PolicyKind::Deem,
            "pa-greedy" => PolicyKind::PaGreedy,
            "deem-plus" => PolicyKind::DeemPlus,
            "oracle" => PolicyKind::Oracle,
            "idle" => PolicyKind::Idle,
            other => return Err(crate::Error::Parse(format!("unknown policy `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Exploit(usize),
}

/// Per-worker policy data.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub phase: Phase,
    /// UCB pull counts per real job; empty for other policies.
    pub pulls: Vec<u32>,
    /// UCB success counts per real job.
    pub successes: Vec<u32>,
}

impl PolicyState {
    pub fn new(kind: PolicyKind, n_jobs: usize) -> Self {
        let arms = if kind == PolicyKind::PaUcb { n_jobs } else { 0 };
        PolicyState { phase: Phase::Explore, pulls: vec![0; arms], successes: vec![0; arms] }
    }

    /// Moves to exploitation; a labelled worker keeps its first label.
    pub fn confirm(&mut self, label: usize) {
        if self.phase == Phase::Explore {
            self.phase = Phase::Exploit(label);
        }
    }

    pub fn record(&mut self, job: usize, success: bool) {
        if let Some(n) = self.pulls.get_mut(job) {
            *n += 1;
            self.successes[job] += u32::from(success);
        }
    }
}

/// One live worker.
#[derive(Debug, Clone)]
pub struct Worker {
    pub true_type: usize,
    /// Periods spent in the market.
    pub age: u32,
    pub belief: WorkerBelief,
    pub state: PolicyState,
}

/// What a policy may read about the market when deciding.
#[derive(Debug, Clone, Copy)]
pub struct MarketView<'a> {
    pub inst: &'a Instance,
    pub model: &'a BeliefModel,
    pub kl: &'a KlTable,
    /// Instantaneous prices, κ last (always 0).
    pub p_inst: &'a [f64],
    /// Smoothed prices, κ last.
    pub p_smooth: &'a [f64],
    /// Learning structure under the smoothed prices.
    pub structure: &'a LearningStructure,
    pub lifetime: u32,
    pub log_n: f64,
}

impl<'a> MarketView<'a> {
    pub fn new(
        inst: &'a Instance,
        model: &'a BeliefModel,
        kl: &'a KlTable,
        p_inst: &'a [f64],
        p_smooth: &'a [f64],
        structure: &'a LearningStructure,
    ) -> Self {
        MarketView {
            inst,
            model,
            kl,
            p_inst,
            p_smooth,
            structure,
            lifetime: inst.lifetime,
            log_n: f64::from(inst.lifetime).ln(),
        }
    }
}

/// argmax_j A(i,j) − p(j) over real jobs and κ.
pub fn best_adjusted_job(inst: &Instance, i: usize, prices: &[f64]) -> usize {
    let mut best = inst.kappa();
    let mut best_val = 0.0 - prices[inst.kappa()];
    for j in 0..inst.n_job_types() {
        let v = inst.a[i][j] - prices[j];
        if v > best_val || (v == best_val && j < best) {
            best = j;
            best_val = v;
        }
    }
    best
}

fn sample_discrete(weights: &[f64], rng: &mut SimRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return k;
            }
            u -= w;
            last = k;
        }
    }
    last
}

/// PA-Greedy: best adjusted job for the MAP type under instantaneous prices.
pub fn pa_greedy_decide(belief: &WorkerBelief, view: &MarketView<'_>) -> usize {
    best_adjusted_job(view.inst, belief.map_estimate(), view.p_inst)
}

/// PA-UCB index u_j(k) = r̄_j + √(2 ln k / n_j) − p(j).
pub fn ucb_index(mean: f64, pulls: u32, k: u32, price: f64) -> f64 {
    mean + (2.0 * f64::from(k).ln() / f64::from(pulls)).sqrt() - price
}

/// PA-UCB: unpulled arms first (lowest index), then the largest index.
/// κ is never chosen.
pub fn pa_ucb_decide(state: &PolicyState, view: &MarketView<'_>, k: u32) -> usize {
    if let Some(j) = state.pulls.iter().position(|&n| n == 0) {
        return j;
    }
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, (&n, &s)) in state.pulls.iter().zip(&state.successes).enumerate() {
        let v = ucb_index(f64::from(s) / f64::from(n), n, k, view.p_inst[j]);
        if v > best_val {
            best = j;
            best_val = v;
        }
    }
    best
}

/// PA-TS: sample a type from the posterior, then its best adjusted job.
pub fn pa_ts_decide(belief: &WorkerBelief, view: &MarketView<'_>, rng: &mut SimRng) -> usize {
    let mut g = [0.0; 64];
    let g = &mut g[..view.inst.n_worker_types()];
    belief.posterior_into(g);
    let i = sample_discrete(g, rng);
    best_adjusted_job(view.inst, i, view.p_inst)
}

/// Policy-wide knobs.
#[derive(Debug, Clone, Default)]
pub struct PolicyOptions {
    /// Exploit for the running MAP instead of the confirmed label.
    pub map_tracking: bool,
    /// Known-types routing, required by [`PolicyKind::Oracle`].
    pub oracle_routing: Option<Vec<Vec<f64>>>,
}

/// Shared policy object: dispatch plus caches reused across workers.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    options: PolicyOptions,
    /// α(i) per type, keyed on the learning-structure signature.
    alpha_cache: HashMap<u64, Vec<Option<Vec<f64>>>>,
}

impl Policy {
    pub fn new(kind: PolicyKind, options: PolicyOptions) -> Self {
        if kind == PolicyKind::Oracle {
            assert!(options.oracle_routing.is_some(), "oracle policy needs the known-types routing");
        }
        Policy { kind, options, alpha_cache: HashMap::new() }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    /// Drops memoized confirmation distributions so they track current prices.
    pub fn begin_period(&mut self) {
        self.alpha_cache.clear();
    }

    pub fn new_state(&self, inst: &Instance) -> PolicyState {
        PolicyState::new(self.kind, inst.n_job_types())
    }

    pub fn decide(&mut self, worker: &mut Worker, view: &MarketView<'_>, rng: &mut SimRng) -> usize {
        match self.kind {
            PolicyKind::PaGreedy => pa_greedy_decide(&worker.belief, view),
            PolicyKind::PaUcb => pa_ucb_decide(&worker.state, view, worker.belief.jobs()),
            PolicyKind::PaTs => pa_ts_decide(&worker.belief, view, rng),
            PolicyKind::Deem => self.deem_decide(&worker.belief, &mut worker.state, view, rng),
            PolicyKind::DeemPlus => self.deem_plus_decide(&worker.belief, &mut worker.state, view, rng),
            PolicyKind::Oracle => {
                let routing = self.options.oracle_routing.as_ref().expect("checked in new");
                sample_discrete(&routing[worker.true_type], rng)
            }
            PolicyKind::Idle => view.inst.kappa(),
        }
    }

    /// Records a realized match outcome.
    pub fn observe(&self, worker: &mut Worker, model: &BeliefModel, job: usize, success: bool) {
        worker.belief.update(model, job, success);
        worker.state.record(job, success);
    }

    fn exploit_choice(&self, belief: &WorkerBelief, label: usize, view: &MarketView<'_>) -> usize {
        let target = if self.options.map_tracking { belief.map_estimate() } else { label };
        best_adjusted_job(view.inst, target, view.p_inst)
    }

    fn alpha_for(&mut self, i: usize, view: &MarketView<'_>) -> Option<&[f64]> {
        let n = view.inst.n_worker_types();
        let entry = self
            .alpha_cache
            .entry(view.structure.signature())
            .or_insert_with(|| vec![None; n]);
        if entry[i].is_none() {
            let conf = analytics::compute_alpha(i, view.structure, view.kl);
            entry[i] = conf.alpha;
        }
        entry[i].as_deref()
    }

    /// DEEM: guess uniformly until the MAP leads every rival by odds log N,
    /// confirm with α(MAP) until it leads every type in Str(MAP) by odds N,
    /// then exploit the label forever.
    pub fn deem_decide(
        &mut self,
        belief: &WorkerBelief,
        state: &mut PolicyState,
        view: &MarketView<'_>,
        rng: &mut SimRng,
    ) -> usize {
        if let Phase::Exploit(label) = state.phase {
            return self.exploit_choice(belief, label, view);
        }
        let i = belief.map_estimate();
        let lead = belief.min_log_odds(i);
        if lead < view.log_n.ln() {
            return rng.random_range(0..view.inst.n_job_types());
        }
        let strong_lead = view.structure.strong[i]
            .iter()
            .map(|k| belief.log_odds(i, k))
            .fold(f64::INFINITY, f64::min);
        if strong_lead < view.log_n {
            if let Some(alpha) = self.alpha_for(i, view) {
                let j = sample_discrete(alpha, rng);
                debug_assert!(j != view.inst.kappa());
                return j;
            }
        }
        state.confirm(i);
        self.exploit_choice(belief, i, view)
    }

    /// DEEM⁺: posterior-weighted confirmation with regret-scaled targets.
    pub fn deem_plus_decide(
        &mut self,
        belief: &WorkerBelief,
        state: &mut PolicyState,
        view: &MarketView<'_>,
        rng: &mut SimRng,
    ) -> usize {
        if let Phase::Exploit(label) = state.phase {
            return self.exploit_choice(belief, label, view);
        }
        let n = view.inst.n_worker_types();
        let width = view.inst.n_job_types() + 1;
        let s = view.structure;

        // ℒ_k(i) as bitmasks, and the exit check.
        let mut remaining = [0u64; 64];
        for (i, rem) in remaining.iter_mut().enumerate().take(n) {
            for i2 in (0..n).filter(|&k| k != i) {
                if belief.log_capped_odds(i, i2, s, view.lifetime) < view.log_n {
                    *rem |= 1 << i2;
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| remaining[i] == 0) {
            state.confirm(i);
            return self.exploit_choice(belief, i, view);
        }

        let mut g = [0.0; 64];
        belief.posterior_into(&mut g[..n]);
        let mut costs = vec![0.0; width];
        for (i, &gi) in g[..n].iter().enumerate() {
            if gi > 0.0 {
                for (c, r) in costs.iter_mut().zip(&s.regret[i]) {
                    *c += gi * r;
                }
            }
        }
        let rows = (0..n).flat_map(|i| {
            let gi = g[i];
            (0..n).filter_map(move |i2| {
                if remaining[i] >> i2 & 1 == 0 {
                    return None;
                }
                let rhs = gi * (1.0 + s.regret_scale[i][i2].ln() / view.log_n);
                (rhs > 0.0).then(|| (view.kl.row(i, i2), rhs))
            })
        });
        let weights = analytics::solve_weighted_confirmation(&costs, rows);
        match weights {
            Some(w) if w.iter().sum::<f64>() > 1e-12 => {
                let j = sample_discrete(&w, rng);
                if j == view.inst.kappa() {
                    best_adjusted_job(view.inst, belief.map_estimate(), view.p_inst)
                } else {
                    j
                }
            }
            // Every remaining target is already met or vacuous: take the
            // posterior-optimal job.
            _ => argmin(&costs),
        }
    }
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = k;
        }
    }
    best
}
