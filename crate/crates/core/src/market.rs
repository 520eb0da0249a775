//! Discrete-time marketplace with buffer-capped job queues and queue prices.
//!
//! Each period: job arrivals, worker arrivals, one visit per live worker in
//! a random order, then aging and retirement. The price of job type j is
//! `(B − q(j)) / B` for queue length `q(j)`.

use std::collections::VecDeque;
use std::io;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::analytics::{Analysis, KlTable, LearningStructure};
use crate::belief::BeliefModel;
use crate::instance::Instance;
use crate::policies::{best_adjusted_job, MarketView, Policy, PolicyKind, PolicyOptions, Worker};
use crate::rng::{stream, sub_index, Purpose, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Measured periods T, after the burn-in.
    pub periods: u32,
    /// Scaling constant: τρ̂(i) workers and about τμ(j) jobs per period.
    pub tau: f64,
    /// Queue buffer B.
    pub buffer: u32,
    /// Smoothing window W in price-change epochs.
    pub window: usize,
    /// Tolerance ε for the smoothed optimal job sets.
    pub eps_tol: f64,
    pub seed: u64,
    /// Stream index, normally the instance index within a batch.
    pub stream: u64,
    pub policy: PolicyKind,
    pub map_tracking: bool,
    /// Unmatched-by-scarcity workers fall back to their best available job.
    pub cascade: bool,
    /// Burn-in periods simulated before measurement; `None` means
    /// [`BURN_IN_LIFETIMES`] worker lifetimes.
    pub warmup: Option<u32>,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            periods: 150,
            tau: 900.0,
            buffer: 10_000,
            window: 200,
            eps_tol: 0.05,
            seed: 0,
            stream: 0,
            policy: PolicyKind::DeemPlus,
            map_tracking: false,
            cascade: false,
            warmup: None,
            trace: false,
        }
    }
}

/// Default burn-in in worker lifetimes: one to fill the roster, two more for
/// the queues to settle after the stock built up while the roster filled.
pub const BURN_IN_LIFETIMES: u32 = 3;

impl SimConfig {
    /// Burn-in length for workers of the given lifetime.
    pub fn burn_in(&self, lifetime: u32) -> u32 {
        self.warmup.unwrap_or(BURN_IN_LIFETIMES * lifetime)
    }

    pub fn with_policy(&self, policy: PolicyKind) -> Self {
        SimConfig { policy, ..self.clone() }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.periods > 0
            && self.tau > 0.0
            && self.buffer > 0
            && self.window > 0
            && self.eps_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Precondition(format!("invalid simulation config {self:?}")))
        }
    }
}

/// Last W queue lengths of one job type, with an exact running sum.
#[derive(Debug, Clone)]
struct PriceWindow {
    queue_lengths: VecDeque<u32>,
    sum: u64,
    capacity: usize,
}

impl PriceWindow {
    fn new(capacity: usize) -> Self {
        PriceWindow { queue_lengths: VecDeque::with_capacity(capacity), sum: 0, capacity }
    }

    fn push(&mut self, q: u32) {
        if self.queue_lengths.len() == self.capacity {
            self.sum -= u64::from(self.queue_lengths.pop_front().expect("nonempty"));
        }
        self.queue_lengths.push_back(q);
        self.sum += u64::from(q);
    }

    /// Mean price over the window, or `None` with no history.
    fn mean_price(&self, buffer: u32) -> Option<f64> {
        let n = self.queue_lengths.len() as u64;
        (n > 0).then(|| {
            let b = u64::from(buffer);
            (b * n - self.sum) as f64 / (b * n) as f64
        })
    }
}

/// Mean of `prices`, or `current` when there is no history.
pub fn smoothed_price(prices: &[f64], current: f64) -> f64 {
    if prices.is_empty() {
        current
    } else {
        prices.iter().sum::<f64>() / prices.len() as f64
    }
}

/// 𝒥*ε(i) for every type under prices `p_smooth` (κ entry optional).
pub fn tolerant_opt_sets(p_smooth: &[f64], inst: &Instance, eps_tol: f64) -> Vec<crate::JobSet> {
    LearningStructure::from_prices(inst, p_smooth, eps_tol).opt_sets
}

/// One period of the trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub t: u32,
    pub payoff: f64,
    /// Filled requests over requests per real job type.
    pub fill_rate: Vec<f64>,
    /// Mean instantaneous price over the period's price epochs.
    pub mean_price: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub policy: PolicyKind,
    pub periods_measured: u32,
    /// Realized payoff over measured periods.
    pub total_payoff: f64,
    /// Sum of success probabilities of the realized matches.
    pub expected_payoff: f64,
    pub payoff_rate: f64,
    pub v_star: f64,
    /// payoff_rate / (τ V*).
    pub ratio: f64,
    pub matches: u64,
    /// Live workers summed over measured periods.
    pub worker_periods: u64,
    /// Requests that found an empty queue.
    pub unfilled_requests: u64,
    pub kappa_requests: u64,
    /// Jobs dropped at the buffer cap.
    pub lost_jobs: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<PeriodRecord>>,
}

impl RunMetrics {
    /// Writes the trace as CSV: `t, payoff, fill_rate_<j>..., mean_price_<j>...`.
    pub fn write_trace_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let Some(trace) = &self.trace else { return Ok(()) };
        let nj = trace.first().map_or(0, |r| r.fill_rate.len());
        let mut header = vec!["t".to_string(), "payoff".to_string()];
        header.extend((0..nj).map(|j| format!("fill_rate_{j}")));
        header.extend((0..nj).map(|j| format!("mean_price_{j}")));
        writeln!(w, "{}", header.join(","))?;
        for r in trace {
            let mut fields = vec![r.t.to_string(), r.payoff.to_string()];
            fields.extend(r.fill_rate.iter().chain(&r.mean_price).map(f64::to_string));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Full simulation state.
pub struct Market<'a> {
    inst: &'a Instance,
    cfg: SimConfig,
    v_star: f64,
    model: BeliefModel,
    kl: KlTable,
    policy: Policy,
    structure: LearningStructure,
    arrivals: Vec<Binomial>,
    workers_per_type: Vec<u32>,
    queues: Vec<u32>,
    windows: Vec<PriceWindow>,
    p_inst: Vec<f64>,
    p_smooth: Vec<f64>,
    workers: Vec<Worker>,
    order: Vec<u32>,
    t: u32,
    burn_in: u32,
    arrival_rng: SimRng,
    decision_rng: SimRng,
    metrics: RunMetrics,
}

fn binomial_for(tau: f64, mu: f64) -> Binomial {
    // Mean τμ: 3τ trials with p = μ/3, more trials once μ ≥ 3.
    let trials_per_tau = if mu < 3.0 { 3.0 } else { mu.ceil() + 1.0 };
    let n = (trials_per_tau * tau).round() as u64;
    Binomial::new(n, (tau * mu / n as f64).min(1.0)).expect("valid binomial")
}

impl<'a> Market<'a> {
    pub fn new(inst: &'a Instance, analysis: &Analysis, cfg: SimConfig) -> crate::Result<Self> {
        cfg.validate()?;
        let nj = inst.n_job_types();
        let options = PolicyOptions {
            map_tracking: cfg.map_tracking,
            oracle_routing: (cfg.policy == PolicyKind::Oracle).then(|| analysis.plan.routing.clone()),
        };
        let p_inst: Vec<f64> = (0..=nj).map(|j| if j == nj { 0.0 } else { 1.0 }).collect();
        let structure = LearningStructure::from_prices(inst, &p_inst, cfg.eps_tol);
        let workers_per_type = (0..inst.n_worker_types())
            .map(|i| (cfg.tau * inst.rho_hat(i) + 1e-9).floor() as u32)
            .collect();
        let metrics = RunMetrics {
            policy: cfg.policy,
            periods_measured: cfg.periods,
            total_payoff: 0.0,
            expected_payoff: 0.0,
            payoff_rate: 0.0,
            v_star: analysis.plan.value,
            ratio: 0.0,
            matches: 0,
            worker_periods: 0,
            unfilled_requests: 0,
            kappa_requests: 0,
            lost_jobs: 0,
            trace: cfg.trace.then(Vec::new),
        };
        Ok(Market {
            inst,
            v_star: analysis.plan.value,
            model: BeliefModel::new(inst),
            kl: analysis.kl.clone(),
            policy: Policy::new(cfg.policy, options),
            structure,
            arrivals: inst.mu.iter().map(|&mu| binomial_for(cfg.tau, mu)).collect(),
            workers_per_type,
            queues: vec![0; nj],
            windows: vec![PriceWindow::new(cfg.window); nj],
            p_smooth: p_inst.clone(),
            p_inst,
            workers: Vec::new(),
            order: Vec::new(),
            t: 0,
            burn_in: cfg.burn_in(inst.lifetime),
            arrival_rng: stream(cfg.seed, Purpose::Simulation, sub_index(cfg.stream, 0)),
            decision_rng: stream(cfg.seed, Purpose::Simulation, sub_index(cfg.stream, 1 + cfg.policy.code())),
            metrics,
            cfg,
        })
    }

    pub fn period(&self) -> u32 {
        self.t
    }

    /// Burn-in plus measured periods.
    pub fn horizon(&self) -> u32 {
        self.burn_in + self.cfg.periods
    }

    pub fn queues(&self) -> &[u32] {
        &self.queues
    }

    /// Instantaneous prices, κ last.
    pub fn prices(&self) -> &[f64] {
        &self.p_inst
    }

    pub fn workers(&self) -> &[Worker] {
        &self.workers
    }

    fn set_queue(&mut self, j: usize, q: u32) {
        self.queues[j] = q;
        self.p_inst[j] = f64::from(self.cfg.buffer - q) / f64::from(self.cfg.buffer);
        self.windows[j].push(q);
    }

    /// Smoothed prices p̄ for all job types, κ last.
    pub fn smoothed_prices(&self) -> Vec<f64> {
        let mut out = self.p_inst.clone();
        for (j, w) in self.windows.iter().enumerate() {
            if let Some(p) = w.mean_price(self.cfg.buffer) {
                out[j] = p;
            }
        }
        out
    }

    fn refresh_structure(&mut self) {
        for (j, w) in self.windows.iter().enumerate() {
            self.p_smooth[j] = w.mean_price(self.cfg.buffer).unwrap_or(self.p_inst[j]);
        }
        self.structure.refresh(self.inst, &self.p_smooth, self.cfg.eps_tol);
    }

    /// Advances one period and returns its realized payoff.
    pub fn step(&mut self) -> f64 {
        let nj = self.inst.n_job_types();
        let kappa = self.inst.kappa();
        let buffer = self.cfg.buffer;
        let measured = self.t >= self.burn_in;
        self.policy.begin_period();

        let mut epoch_price_sum = vec![0.0; nj];
        let mut epochs = vec![0u32; nj];
        let mut requests = vec![0u64; nj];
        let mut filled = vec![0u64; nj];

        for j in 0..nj {
            let arrived = self.arrivals[j].sample(&mut self.arrival_rng);
            let room = u64::from(buffer - self.queues[j]);
            let admitted = arrived.min(room);
            if measured {
                self.metrics.lost_jobs += arrived - admitted;
            }
            if admitted > 0 {
                self.set_queue(j, self.queues[j] + admitted as u32);
                epoch_price_sum[j] += self.p_inst[j];
                epochs[j] += 1;
            }
        }

        for (i, &m) in self.workers_per_type.iter().enumerate() {
            for _ in 0..m {
                self.workers.push(Worker {
                    true_type: i,
                    age: 0,
                    belief: self.model.fresh(),
                    state: self.policy.new_state(self.inst),
                });
            }
        }

        self.order.clear();
        self.order.extend(0..self.workers.len() as u32);
        self.order.shuffle(&mut self.decision_rng);

        let needs_structure = self.policy.kind().needs_structure();
        let mut payoff = 0.0;
        let mut expected = 0.0;
        if measured {
            self.metrics.worker_periods += self.order.len() as u64;
        }
        for idx in 0..self.order.len() {
            let w = self.order[idx] as usize;
            if needs_structure {
                self.refresh_structure();
            }
            let view = MarketView::new(
                self.inst,
                &self.model,
                &self.kl,
                &self.p_inst,
                &self.p_smooth,
                &self.structure,
            );
            let worker = &mut self.workers[w];
            let mut j = self.policy.decide(worker, &view, &mut self.decision_rng);
            if j == kappa {
                self.metrics.kappa_requests += u64::from(measured);
                continue;
            }
            requests[j] += 1;
            if self.queues[j] == 0 {
                if !self.cfg.cascade {
                    self.metrics.unfilled_requests += u64::from(measured);
                    continue;
                }
                let mut masked = self.p_inst.clone();
                for (k, &q) in self.queues.iter().enumerate() {
                    if q == 0 {
                        masked[k] = f64::INFINITY;
                    }
                }
                j = best_adjusted_job(self.inst, worker.belief.map_estimate(), &masked);
                if j == kappa {
                    self.metrics.unfilled_requests += u64::from(measured);
                    continue;
                }
            }
            filled[j] += 1;
            let q = self.queues[j] - 1;
            self.queues[j] = q;
            self.p_inst[j] = f64::from(buffer - q) / f64::from(buffer);
            self.windows[j].push(q);
            epoch_price_sum[j] += self.p_inst[j];
            epochs[j] += 1;

            let a = self.inst.a[worker.true_type][j];
            let success = self.decision_rng.random::<f64>() < a;
            self.policy.observe(worker, &self.model, j, success);
            payoff += f64::from(u8::from(success));
            expected += a;
            self.metrics.matches += u64::from(measured);
        }

        let lifetime = self.inst.lifetime;
        for w in &mut self.workers {
            w.age += 1;
        }
        self.workers.retain(|w| w.age < lifetime);

        if measured {
            self.metrics.total_payoff += payoff;
            self.metrics.expected_payoff += expected;
        }
        if let Some(trace) = &mut self.metrics.trace {
            trace.push(PeriodRecord {
                t: self.t,
                payoff,
                fill_rate: requests
                    .iter()
                    .zip(&filled)
                    .map(|(&r, &f)| if r == 0 { 0.0 } else { f as f64 / r as f64 })
                    .collect(),
                mean_price: (0..nj)
                    .map(|j| if epochs[j] == 0 { self.p_inst[j] } else { epoch_price_sum[j] / f64::from(epochs[j]) })
                    .collect(),
            });
        }
        self.t += 1;
        payoff
    }

    pub fn finish(mut self) -> RunMetrics {
        let m = &mut self.metrics;
        m.payoff_rate = m.total_payoff / f64::from(m.periods_measured);
        m.ratio = if self.v_star > 0.0 { m.payoff_rate / (self.cfg.tau * self.v_star) } else { 0.0 };
        self.metrics
    }
}

/// Runs the full horizon with a precomputed analysis.
pub fn run_with_analysis(inst: &Instance, analysis: &Analysis, cfg: &SimConfig) -> crate::Result<RunMetrics> {
    let mut market = Market::new(inst, analysis, cfg.clone())?;
    while market.period() < market.horizon() {
        market.step();
    }
    Ok(market.finish())
}

/// Runs the full horizon; V* comes from analysing the same instance.
pub fn run_simulation(inst: &Instance, cfg: &SimConfig) -> crate::Result<RunMetrics> {
    let analysis = Analysis::new(inst)?;
    run_with_analysis(inst, &analysis, cfg)
}
