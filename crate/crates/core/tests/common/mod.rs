//! Independent oracles and seeded check suites shared by the property tests
//! and the acceptance runner.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;

use matchlearn::analytics::{solve_static_plan, Analysis, TOL_COST};
use matchlearn::belief::BeliefModel;
use matchlearn::lp::{self, LpProblem, LpSolution, LpStatus, Sense};
use matchlearn::policies::{MarketView, Phase, Policy, PolicyKind, PolicyOptions, PolicyState, Worker};
use matchlearn::rng::{stream, Purpose, SimRng};
use matchlearn::{check_generalized_imbalance, generate_instance, GenConfig, Instance};

/// Outcome of one check suite.
#[derive(Debug, Clone)]
pub struct Check {
    pub ok: bool,
    pub detail: String,
}

impl Check {
    pub fn new(ok: bool, detail: impl Into<String>) -> Self {
        Check { ok, detail: detail.into() }
    }
}

pub fn rng(index: u64) -> SimRng {
    stream(0x5eed, Purpose::Test, index)
}

// ---------------------------------------------------------------------------
// Linear programming oracles
// ---------------------------------------------------------------------------

/// Random LP over at most 6 nonnegative variables and at most 6 rows with
/// small integer data. The last row bounds Σx, so the feasible set is a polytope.
pub fn random_lp(rng: &mut SimRng) -> LpProblem {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=5);
    let c = (0..n).map(|_| f64::from(rng.random_range(-5i32..=5))).collect();
    let mut p = LpProblem::minimize(c);
    for _ in 0..m {
        let row = (0..n).map(|_| f64::from(rng.random_range(-4i32..=4))).collect();
        let sense = match rng.random_range(0..20) {
            0..9 => Sense::Le,
            9..16 => Sense::Ge,
            _ => Sense::Eq,
        };
        p.add_row(row, sense, f64::from(rng.random_range(-4i32..=8)));
    }
    p.add_row(vec![1.0; n], Sense::Le, f64::from(rng.random_range(1i32..=10)));
    p
}

/// Gaussian elimination with partial pivoting; `None` if singular.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Optimum of `p` over x ≥ 0 by enumerating every set of n tight constraints.
///
/// Only valid for pointed problems whose optimum is attained; `None` means no
/// feasible vertex exists.
pub fn vertex_oracle(p: &LpProblem) -> Option<(f64, Vec<f64>)> {
    let n = p.n_vars();
    let m = p.n_rows();
    let total = m + n;
    assert!(total <= 24);
    let eq_mask: u32 = (0..m).filter(|&r| p.row(r).1 == Sense::Eq).map(|r| 1 << r).sum();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..1 << total {
        if mask.count_ones() as usize != n || mask & eq_mask != eq_mask {
            continue;
        }
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for k in (0..total).filter(|k| mask >> k & 1 == 1) {
            if k < m {
                let (row, _, rhs) = p.row(k);
                a.push(row.to_vec());
                b.push(rhs);
            } else {
                let mut unit = vec![0.0; n];
                unit[k - m] = 1.0;
                a.push(unit);
                b.push(0.0);
            }
        }
        let Some(x) = solve_linear(a, b) else { continue };
        if p.max_violation(&x) > 1e-9 {
            continue;
        }
        let obj: f64 = p.objective().iter().zip(&x).map(|(c, v)| c * v).sum();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, x));
        }
    }
    best
}

/// Duality gap, complementary slackness and dual infeasibility of an optimal
/// solution, with multipliers read as ∂objective/∂rhs.
pub fn dual_residuals(p: &LpProblem, sol: &LpSolution) -> (f64, f64, f64) {
    let x = &sol.primal;
    let y = &sol.duals;
    let mut reduced = p.objective().to_vec();
    let mut dual_obj = 0.0;
    let mut infeas = 0.0f64;
    let mut cs = 0.0f64;
    for (r, &yr) in y.iter().enumerate() {
        let (row, sense, rhs) = p.row(r);
        for (d, a) in reduced.iter_mut().zip(row) {
            *d -= yr * a;
        }
        dual_obj += yr * rhs;
        infeas = infeas.max(match sense {
            Sense::Le => yr,
            Sense::Ge => -yr,
            Sense::Eq => 0.0,
        });
        let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
        cs = cs.max((yr * (lhs - rhs)).abs());
    }
    for (d, v) in reduced.iter().zip(x) {
        infeas = infeas.max(-d);
        cs = cs.max((d * v).abs());
    }
    ((sol.objective - dual_obj).abs(), cs, infeas)
}

/// Random market of at most `max_dim` types per side. Quantized draws put
/// payoffs on a 0.1 grid so ties and equal rows on subsets are common.
pub fn random_market(rng: &mut SimRng, max_dim: usize, quantized: bool, lifetime: u32) -> Instance {
    loop {
        let ni = rng.random_range(1..=max_dim);
        let nj = rng.random_range(1..=max_dim);
        let mass = |rng: &mut SimRng| {
            if quantized {
                f64::from(rng.random_range(1..=3)) * 0.5
            } else {
                rng.random_range(0.5..1.5)
            }
        };
        let rho = (0..ni).map(|_| mass(rng)).collect();
        let mu = (0..nj).map(|_| mass(rng)).collect();
        let a = (0..ni)
            .map(|_| {
                (0..nj)
                    .map(|_| if quantized { f64::from(rng.random_range(1..=9)) / 10.0 } else { rng.random() })
                    .collect()
            })
            .collect();
        if let Ok(inst) = Instance::new(rho, mu, a, lifetime) {
            return inst;
        }
    }
}

/// Relabels worker types by `pi` and job types by `pj`: new type r is old `pi[r]`.
pub fn permute(inst: &Instance, pi: &[usize], pj: &[usize]) -> Instance {
    Instance::new(
        pi.iter().map(|&i| inst.rho[i]).collect(),
        pj.iter().map(|&j| inst.mu[j]).collect(),
        pi.iter().map(|&i| pj.iter().map(|&j| inst.a[i][j]).collect()).collect(),
        inst.lifetime,
    )
    .expect("permutation keeps an instance valid")
}

/// Generic LPs against the vertex oracle, then the static plan LP on random
/// markets: strong duality, complementary slackness, and price invariance
/// under relabelling on instances passing generalized imbalance.
pub fn lp_suite(cases: u64) -> Check {
    let mut worst = [0.0f64; 4];
    let mut failures = Vec::new();
    let mut feasible = 0;
    for case in 0..cases {
        let mut r = rng(case);
        let p = random_lp(&mut r);
        let sol = lp::solve(&p);
        match vertex_oracle(&p) {
            None => {
                if sol.status != LpStatus::Infeasible {
                    failures.push(format!("lp {case}: oracle infeasible, solver {:?}", sol.status));
                }
            }
            Some((obj, _)) => {
                feasible += 1;
                if !sol.is_optimal() {
                    failures.push(format!("lp {case}: solver {:?}", sol.status));
                    continue;
                }
                let (gap, cs, infeas) = dual_residuals(&p, &sol);
                let errs = [(sol.objective - obj).abs(), gap, cs, infeas.max(p.max_violation(&sol.primal))];
                for (w, e) in worst.iter_mut().zip(errs) {
                    *w = w.max(e);
                }
                if errs.iter().any(|&e| e > 1e-8) {
                    failures.push(format!("lp {case}: residuals {errs:?}"));
                }
            }
        }
    }

    let mut market_worst = [0.0f64; 3];
    let mut permuted = 0;
    for case in 0..cases {
        let mut r = rng(1 << 20 | case);
        let inst = random_market(&mut r, 6, false, 30);
        let plan = match solve_static_plan(&inst) {
            Ok(p) => p,
            Err(e) => {
                failures.push(format!("market {case}: {e}"));
                continue;
            }
        };
        let (gap, cs) = static_plan_residuals(&inst, &plan);
        market_worst[0] = market_worst[0].max(gap);
        market_worst[1] = market_worst[1].max(cs);
        if gap > 1e-8 || cs > 1e-8 {
            failures.push(format!("market {case}: gap {gap:e} cs {cs:e}"));
        }
        if check_generalized_imbalance(&inst) {
            permuted += 1;
            let mut pi: Vec<usize> = (0..inst.n_worker_types()).collect();
            let mut pj: Vec<usize> = (0..inst.n_job_types()).collect();
            pi.shuffle(&mut r);
            pj.shuffle(&mut r);
            let other = solve_static_plan(&permute(&inst, &pi, &pj)).expect("permuted plan");
            let dev = pj
                .iter()
                .enumerate()
                .map(|(k, &j)| (other.prices[k] - plan.prices[j]).abs())
                .fold(0.0, f64::max);
            market_worst[2] = market_worst[2].max(dev);
            if dev > 1e-6 {
                failures.push(format!("market {case}: price shift {dev:e} under relabelling"));
            }
        }
    }
    let detail = format!(
        "{cases} LPs ({feasible} feasible): max |obj-oracle| {:.1e}, gap {:.1e}, cs {:.1e}, infeas {:.1e}; \
         {cases} markets: gap {:.1e}, cs {:.1e}, price shift {:.1e} over {permuted} balanced{}",
        worst[0],
        worst[1],
        worst[2],
        worst[3],
        market_worst[0],
        market_worst[1],
        market_worst[2],
        first_failure(&failures),
    );
    Check::new(failures.is_empty(), detail)
}

/// Duality gap and complementary slackness of the static plan, written in the
/// market's own terms: worker values w(i), prices p(j), routing x(i,j).
pub fn static_plan_residuals(inst: &Instance, plan: &matchlearn::StaticPlan) -> (f64, f64) {
    let ni = inst.n_worker_types();
    let nj = inst.n_job_types();
    let w = &plan.worker_values;
    let p = &plan.prices;
    let dual: f64 = (0..ni).map(|i| inst.rho[i] * w[i]).sum::<f64>() + (0..nj).map(|j| inst.mu[j] * p[j]).sum::<f64>();
    let mut cs = 0.0f64;
    for i in 0..ni {
        for j in 0..=nj {
            let slack = w[i] - (inst.payoff(i, j) - p[j]);
            cs = cs.max(-slack).max((plan.mass(inst, i, j) * slack).abs());
        }
        cs = cs.max((plan.routing[i].iter().sum::<f64>() - 1.0).abs());
    }
    for j in 0..nj {
        let load: f64 = (0..ni).map(|i| plan.mass(inst, i, j)).sum();
        cs = cs.max(load - inst.mu[j]).max((p[j] * (inst.mu[j] - load)).abs()).max(-p[j]);
    }
    ((plan.value - dual).abs(), cs)
}

fn first_failure(failures: &[String]) -> String {
    match failures.first() {
        Some(f) => format!("; {} failures, first: {f}", failures.len()),
        None => String::new(),
    }
}

// ---------------------------------------------------------------------------
// Worked example
// ---------------------------------------------------------------------------

/// Two worker types (novice, expert) and two jobs (easy, hard).
pub fn worked_example() -> Instance {
    Instance::new(vec![0.5, 0.5], vec![0.6, 0.6], vec![vec![0.9, 0.1], vec![1.0, 0.9]], 30).unwrap()
}

pub fn worked_example_check() -> Check {
    let inst = worked_example();
    let plan = solve_static_plan(&inst).expect("plan");
    let expected_prices = [0.1, 0.0];
    let expected_mass = [(0, 0, 0.5), (1, 0, 0.1), (1, 1, 0.4), (0, 1, 0.0)];
    let price_err = expected_prices.iter().zip(&plan.prices).map(|(e, p)| (e - p).abs()).fold(0.0, f64::max);
    let mass_err = expected_mass
        .iter()
        .map(|&(i, j, m)| (plan.mass(&inst, i, j) - m).abs())
        .fold(0.0, f64::max);
    Check::new(
        price_err <= 1e-8 && mass_err <= 1e-8,
        format!("p* = ({:.10}, {:.10}), max price error {price_err:.1e}, max mass error {mass_err:.1e}", plan.prices[0], plan.prices[1]),
    )
}

// ---------------------------------------------------------------------------
// Learning structure
// ---------------------------------------------------------------------------

pub const DELTAS: [f64; 8] = [0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 1.0];

/// C(i) > 0 iff i heads a difficult pair; Δ-DBD monotone in Δ; α(i) never on κ.
pub fn structure_suite(cases: u64) -> Check {
    let mut failures = Vec::new();
    let mut positive = 0;
    let mut dbd_hits = 0;
    for case in 0..cases {
        let mut r = rng(2 << 20 | case);
        let inst = random_market(&mut r, 5, case % 2 == 0, 30);
        let an = match Analysis::new(&inst) {
            Ok(a) => a,
            Err(e) => {
                failures.push(format!("instance {case}: {e}"));
                continue;
            }
        };
        for i in 0..inst.n_worker_types() {
            let c_pos = an.confirmations[i].cost > TOL_COST;
            let pair = an.difficult_pairs.iter().any(|&(a, _)| a == i);
            positive += usize::from(c_pos);
            if c_pos != pair {
                failures.push(format!("instance {case} type {i}: C(i) = {:e}, difficult pair {pair}", an.confirmations[i].cost));
            }
            if let Some(alpha) = &an.confirmations[i].alpha {
                if alpha[inst.kappa()] != 0.0 {
                    failures.push(format!("instance {case} type {i}: α(κ) = {:e}", alpha[inst.kappa()]));
                }
            }
        }
        let flags: Vec<bool> = DELTAS
            .iter()
            .map(|&d| matchlearn::analytics::classify_dbd(&an.structure, &an.kl, d, matchlearn::analytics::DBD_KL_HI))
            .collect();
        dbd_hits += usize::from(flags[2]);
        if flags.windows(2).any(|w| w[0] && !w[1]) {
            failures.push(format!("instance {case}: DBD flags {flags:?} not monotone"));
        }
    }
    let detail = format!(
        "{cases} instances: {positive} types with C(i) > 0, {dbd_hits} 0.1-DBD instances{}",
        first_failure(&failures)
    );
    Check::new(failures.is_empty() && positive > 0, detail)
}

// ---------------------------------------------------------------------------
// Beliefs
// ---------------------------------------------------------------------------

/// Order invariance, odds reciprocity, and posterior consistency after 200
/// uniformly sampled jobs on random 3×3 instances.
pub fn belief_suite(trials: u64) -> Check {
    let gen = GenConfig::with_seed(77);
    let mut order_err = 0.0f64;
    let mut recip_err = 0.0f64;
    let mut g_true = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let mut r = rng(3 << 20 | t);
        let inst = generate_instance(&gen, t);
        let model = BeliefModel::new(&inst);
        let nj = inst.n_job_types();

        let mut obs: Vec<(usize, bool)> = (0..100).map(|_| (r.random_range(0..nj), r.random::<bool>())).collect();
        let mut forward = model.fresh();
        for &(j, s) in &obs {
            forward.update(&model, j, s);
        }
        obs.shuffle(&mut r);
        let mut shuffled = model.fresh();
        for &(j, s) in &obs {
            shuffled.update(&model, j, s);
        }
        for i in 0..inst.n_worker_types() {
            order_err = order_err.max((forward.log_likelihood(&model, i) - shuffled.log_likelihood(&model, i)).abs());
            for i2 in 0..inst.n_worker_types() {
                recip_err = recip_err.max((forward.log_odds(i, i2) + forward.log_odds(i2, i)).abs());
            }
        }
        let (gf, gs) = (forward.posterior(), shuffled.posterior());
        order_err = order_err.max(gf.iter().zip(&gs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let truth = r.random_range(0..inst.n_worker_types());
        let mut b = model.fresh();
        for _ in 0..200 {
            let j = r.random_range(0..nj);
            b.update(&model, j, r.random::<f64>() < inst.a[truth][j]);
        }
        g_true.push(b.posterior()[truth]);
    }
    g_true.sort_by(f64::total_cmp);
    let median = g_true[g_true.len() / 2];
    Check::new(
        order_err <= 1e-12 && recip_err <= 1e-12 && median > 0.99,
        format!("order error {order_err:.1e}, reciprocity error {recip_err:.1e}, median g200(true) {median:.5} over {trials} workers"),
    )
}

// ---------------------------------------------------------------------------
// Misconfirmation
// ---------------------------------------------------------------------------

pub struct Misconfirmation {
    pub instance: u64,
    pub true_type: usize,
    pub label: usize,
    pub rate: f64,
    pub bound: f64,
}

/// Runs `workers` isolated DEEM workers per true type for one lifetime under
/// the static prices, returning confirmation rates of every label i″ with the
/// true type in Str(i″).
pub fn misconfirmation_rates(inst: &Instance, id: u64, workers: u32) -> Vec<Misconfirmation> {
    let an = Analysis::new(inst).expect("analysis");
    let model = BeliefModel::new(inst);
    let prices = &an.plan.prices;
    let view = MarketView::new(inst, &model, &an.kl, prices, prices, &an.structure);
    let mut policy = Policy::new(PolicyKind::Deem, PolicyOptions::default());
    let n = inst.n_worker_types();
    let mut out = Vec::new();
    for truth in 0..n {
        let mut r = stream(id, Purpose::Test, truth as u64);
        let mut labels = vec![0u32; n];
        for _ in 0..workers {
            let mut w = Worker {
                true_type: truth,
                age: 0,
                belief: model.fresh(),
                state: PolicyState::new(PolicyKind::Deem, inst.n_job_types()),
            };
            for _ in 0..inst.lifetime {
                let j = policy.decide(&mut w, &view, &mut r);
                if let Phase::Exploit(label) = w.state.phase {
                    labels[label] += 1;
                    break;
                }
                if j != inst.kappa() {
                    let success = r.random::<f64>() < inst.a[truth][j];
                    policy.observe(&mut w, &model, j, success);
                }
                w.age += 1;
            }
        }
        for (label, &count) in labels.iter().enumerate() {
            if label != truth && an.structure.strong[label].contains(truth) {
                let ratio = inst.rho_hat(truth) / inst.rho_hat(label);
                out.push(Misconfirmation {
                    instance: id,
                    true_type: truth,
                    label,
                    rate: f64::from(count) / f64::from(workers),
                    bound: 5.0 * ratio / f64::from(inst.lifetime),
                });
            }
        }
    }
    out
}

/// Misconfirmation rates on the first `instances` generated instances with
/// some nonempty Str set.
pub fn misconfirmation_suite(instances: usize, workers: u32) -> Check {
    let gen = GenConfig::with_seed(5);
    let mut rows = Vec::new();
    let mut used = 0;
    for id in 0.. {
        if used == instances {
            break;
        }
        let inst = generate_instance(&gen, id);
        let an = Analysis::new(&inst).expect("analysis");
        if an.structure.strong.iter().all(|s| s.is_empty()) {
            continue;
        }
        used += 1;
        rows.extend(misconfirmation_rates(&inst, id, workers));
    }
    let worst = rows.iter().max_by(|a, b| (a.rate / a.bound).total_cmp(&(b.rate / b.bound)));
    let ok = !rows.is_empty() && rows.iter().all(|m| m.rate <= m.bound);
    let detail = match worst {
        Some(m) => format!(
            "{} (type, label) pairs on {instances} instances, {workers} workers each; worst rate {:.4} vs bound {:.4} (instance {}, {} -> {})",
            rows.len(),
            m.rate,
            m.bound,
            m.instance,
            m.true_type,
            m.label
        ),
        None => "no pairs with the true type in Str(label)".into(),
    };
    Check::new(ok, detail)
}
