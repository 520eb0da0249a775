//! Offline quantities the policies consume: the known-types plan and its
//! shadow prices, per-type optimal job sets, strong-distinction sets,
//! confirmation distributions α(i), the regret constants C(i) and C, difficult
//! type pairs and Δ-difficult-but-distinguishable classification.

use serde::Serialize;

use crate::instance::Instance;
use crate::lp::{self, LpProblem, Sense};
use crate::sets::{JobSet, TypeSet};

/// Tolerance for membership in an optimal job set under exact prices.
pub const TOL_TIE: f64 = 1e-9;
/// Lower clamp applied to the hypothesised-type argument of the KL divergence.
pub const KL_CLAMP: f64 = 1e-6;
/// Per-unit penalty on total confirmation weight; selects the fastest-learning optimum.
pub const ALPHA_PENALTY: f64 = 1e-6;
/// Floor on the misclassification regret scale R(i,i′).
pub const R_MIN: f64 = 1e-3;
/// Payoff equality tolerance for difficult-pair detection.
pub const TOL_EQ: f64 = 1e-9;
/// Positivity threshold for reporting C(i) > 0.
pub const TOL_COST: f64 = 1e-9;

/// Optimal known-types routing with its dual prices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticPlan {
    /// Optimal payoff rate V*.
    pub value: f64,
    /// Routing fractions x*(i, j), κ column last; rows sum to one.
    pub routing: Vec<Vec<f64>>,
    /// Shadow prices p*(j), κ entry last and always zero.
    pub prices: Vec<f64>,
    /// Dual value of each worker type, equal to max_j A(i,j) − p*(j).
    pub worker_values: Vec<f64>,
}

impl StaticPlan {
    /// Mass ρ(i)·x*(i,j) routed from worker type `i` to job `j`.
    pub fn mass(&self, inst: &Instance, i: usize, j: usize) -> f64 {
        inst.rho[i] * self.routing[i][j]
    }
}

/// Solves the known-types static planning LP.
///
/// Variables are x(i,j) for every real job and κ; rows are the per-type
/// assignment equalities followed by one capacity row per real job.
pub fn solve_static_plan(inst: &Instance) -> crate::Result<StaticPlan> {
    let ni = inst.n_worker_types();
    let nj = inst.n_job_types();
    let width = nj + 1;
    let var = |i: usize, j: usize| i * width + j;

    let objective = (0..ni).flat_map(|i| (0..width).map(move |j| (i, j))).map(|(i, j)| -inst.rho[i] * inst.payoff(i, j));
    let mut p = LpProblem::minimize(objective.collect());
    for i in 0..ni {
        let mut row = vec![0.0; ni * width];
        row[var(i, 0)..var(i, 0) + width].fill(1.0);
        p.add_row(row, Sense::Eq, 1.0);
    }
    for j in 0..nj {
        let mut row = vec![0.0; ni * width];
        for i in 0..ni {
            row[var(i, j)] = inst.rho[i];
        }
        p.add_row(row, Sense::Le, inst.mu[j]);
    }
    let sol = lp::solve(&p);
    if !sol.is_optimal() {
        return Err(crate::Error::Precondition(format!("static plan LP returned {:?}", sol.status)));
    }
    let routing = (0..ni).map(|i| sol.primal[var(i, 0)..var(i, 0) + width].to_vec()).collect();
    let mut prices: Vec<f64> = (0..nj).map(|j| (-sol.duals[ni + j]).max(0.0)).collect();
    prices.push(0.0);
    let worker_values = (0..ni).map(|i| -sol.duals[i] / inst.rho[i]).collect();
    Ok(StaticPlan { value: -sol.objective, routing, prices, worker_values })
}

/// KL(Bernoulli(q) ‖ Bernoulli(q′)) in nats, with q′ clamped to
/// `[KL_CLAMP, 1 − KL_CLAMP]` and `0·log 0 = 0`. Identical arguments give 0.
pub fn kl_bernoulli(q: f64, q_alt: f64) -> f64 {
    if q == q_alt {
        return 0.0;
    }
    let qa = q_alt.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
    let mut kl = 0.0;
    if q > 0.0 {
        kl += q * (q / qa).ln();
    }
    if q < 1.0 {
        kl += (1.0 - q) * ((1.0 - q) / (1.0 - qa)).ln();
    }
    kl.max(0.0)
}

/// KL(i, i′ | j) for every ordered type pair and every job, κ included (always 0).
#[derive(Debug, Clone, PartialEq)]
pub struct KlTable {
    n_types: usize,
    width: usize,
    data: Vec<f64>,
}

impl KlTable {
    pub fn new(inst: &Instance) -> Self {
        let n_types = inst.n_worker_types();
        let width = inst.n_job_types() + 1;
        let mut data = vec![0.0; n_types * n_types * width];
        for i in 0..n_types {
            for i2 in 0..n_types {
                for j in 0..inst.n_job_types() {
                    data[(i * n_types + i2) * width + j] = kl_bernoulli(inst.a[i][j], inst.a[i2][j]);
                }
            }
        }
        KlTable { n_types, width, data }
    }

    #[inline]
    pub fn get(&self, i: usize, i_alt: usize, j: usize) -> f64 {
        self.data[(i * self.n_types + i_alt) * self.width + j]
    }

    /// KL(i, i′ | ·) over all jobs, κ last.
    #[inline]
    pub fn row(&self, i: usize, i_alt: usize) -> &[f64] {
        let o = (i * self.n_types + i_alt) * self.width;
        &self.data[o..o + self.width]
    }
}

/// Learning goals induced by a price vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningStructure {
    /// Prices used, κ entry last.
    pub prices: Vec<f64>,
    /// U(i) = max_j A(i,j) − p(j), κ included.
    pub best_adjusted: Vec<f64>,
    /// U(i) − [A(i,j) − p(j)] for every job, κ last.
    pub regret: Vec<Vec<f64>>,
    /// 𝒥(i): jobs within the tie tolerance of U(i).
    pub opt_sets: Vec<JobSet>,
    /// Str(i) = { i′ ≠ i : 𝒥(i) \ 𝒥(i′) ≠ ∅ }.
    pub strong: Vec<TypeSet>,
    /// Misclassification regret scale R(i,i′); 1 off Str(i).
    pub regret_scale: Vec<Vec<f64>>,
}

impl LearningStructure {
    /// `prices` may omit the κ entry.
    pub fn from_prices(inst: &Instance, prices: &[f64], tol: f64) -> Self {
        let ni = inst.n_worker_types();
        let width = inst.n_job_types() + 1;
        let mut s = LearningStructure {
            prices: vec![0.0; width],
            best_adjusted: vec![0.0; ni],
            regret: vec![vec![0.0; width]; ni],
            opt_sets: vec![JobSet::EMPTY; ni],
            strong: vec![TypeSet::EMPTY; ni],
            regret_scale: vec![vec![1.0; ni]; ni],
        };
        s.refresh(inst, prices, tol);
        s
    }

    /// Recomputes every field for new prices without reallocating.
    pub fn refresh(&mut self, inst: &Instance, prices: &[f64], tol: f64) {
        let ni = inst.n_worker_types();
        let nj = inst.n_job_types();
        self.prices[..nj].copy_from_slice(&prices[..nj]);
        self.prices[nj] = 0.0;
        for i in 0..ni {
            let mut best = f64::NEG_INFINITY;
            for j in 0..=nj {
                best = best.max(inst.payoff(i, j) - self.prices[j]);
            }
            self.best_adjusted[i] = best;
            let mut set = JobSet::EMPTY;
            for j in 0..=nj {
                let r = best - (inst.payoff(i, j) - self.prices[j]);
                self.regret[i][j] = r;
                if r <= tol {
                    set.insert(j);
                }
            }
            self.opt_sets[i] = set;
        }
        self.strong = strong_distinction_sets(&self.opt_sets);
        for i in 0..ni {
            for i2 in 0..ni {
                self.regret_scale[i][i2] = if self.strong[i].contains(i2) {
                    let only_i = self.opt_sets[i].minus(self.opt_sets[i2]);
                    let worst = only_i.iter().map(|j| self.regret[i2][j]).fold(0.0, f64::max);
                    worst.clamp(R_MIN, 1.0)
                } else {
                    1.0
                };
            }
        }
    }

    pub fn n_types(&self) -> usize {
        self.opt_sets.len()
    }

    /// Hash of all optimal job sets; equal signatures imply equal Str sets.
    pub fn signature(&self) -> u64 {
        self.opt_sets
            .iter()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, s| (h ^ s.0).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

/// Per-type optimal job sets 𝒥(i) under the plan's shadow prices.
pub fn optimal_job_sets(plan: &StaticPlan, inst: &Instance, tol_tie: f64) -> Vec<JobSet> {
    LearningStructure::from_prices(inst, &plan.prices, tol_tie).opt_sets
}

pub fn strong_distinction_sets(opt_sets: &[JobSet]) -> Vec<TypeSet> {
    (0..opt_sets.len())
        .map(|i| {
            (0..opt_sets.len())
                .filter(|&i2| i2 != i && !opt_sets[i].minus(opt_sets[i2]).is_empty())
                .collect()
        })
        .collect()
}

/// Solves `min Σ_j w_j (cost_j + τ)` subject to `Σ_j w_j kl_r[j] ≥ rhs_r`, `w ≥ 0`.
///
/// Returns the optimal weights, or `None` if some row cannot be met.
pub fn solve_weighted_confirmation<'a>(
    costs: &[f64],
    rows: impl IntoIterator<Item = (&'a [f64], f64)>,
) -> Option<Vec<f64>> {
    confirmation_lp(costs, ALPHA_PENALTY, rows).map(|sol| sol.primal)
}

fn confirmation_lp<'a>(
    costs: &[f64],
    penalty: f64,
    rows: impl IntoIterator<Item = (&'a [f64], f64)>,
) -> Option<lp::LpSolution> {
    let objective = costs.iter().map(|c| c + penalty).collect();
    let mut p = LpProblem::minimize(objective);
    for (kl, rhs) in rows {
        p.add_row(kl.to_vec(), Sense::Ge, rhs);
    }
    if p.n_rows() == 0 {
        let zero = vec![0.0; costs.len()];
        return Some(lp::LpSolution { status: lp::LpStatus::Optimal, primal: zero, duals: Vec::new(), objective: 0.0 });
    }
    let sol = lp::solve(&p);
    sol.is_optimal().then_some(sol)
}

/// Confirmation distribution α(i) and the regret constant C(i).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Confirmation {
    /// α(i) over all jobs, κ last; `None` when Str(i) is empty.
    pub alpha: Option<Vec<f64>>,
    /// C(i), the optimum of the unpenalized program.
    pub cost: f64,
}

/// Computes α(i) and C(i) from the structure's regrets and the KL table.
///
/// Panics if some i′ ∈ Str(i) cannot be distinguished from i by any job,
/// which distinct payoff rows rule out.
pub fn compute_alpha(i: usize, structure: &LearningStructure, kl: &KlTable) -> Confirmation {
    let strong = structure.strong[i];
    if strong.is_empty() {
        return Confirmation { alpha: None, cost: 0.0 };
    }
    let regrets = &structure.regret[i];
    let rows = || strong.iter().map(|i2| (kl.row(i, i2), 1.0));
    let weights = solve_weighted_confirmation(regrets, rows())
        .unwrap_or_else(|| panic!("confirmation LP infeasible for type {i}"));
    let total: f64 = weights.iter().sum();
    // The penalty only breaks ties; on nearly uninformative jobs it would
    // otherwise shift C(i), so the constant comes from the unpenalized optimum.
    let cost = match confirmation_lp(regrets, 0.0, rows()) {
        Some(sol) => sol.objective,
        None => weights.iter().zip(regrets).map(|(w, r)| w * r).sum(),
    }
    .max(0.0);
    let alpha = weights.iter().map(|w| w / total).collect();
    Confirmation { alpha: Some(alpha), cost }
}

/// C = Σ_i ρ(i) C(i).
pub fn compute_c(confirmations: &[Confirmation], inst: &Instance) -> f64 {
    confirmations.iter().zip(&inst.rho).map(|(c, r)| r * c.cost).sum()
}

/// Ordered pairs (i,i′) with A(i,·) = A(i′,·) on 𝒥(i) and 𝒥(i) ∩ 𝒥(i′) = ∅.
pub fn find_difficult_pairs(structure: &LearningStructure, inst: &Instance, tol_eq: f64) -> Vec<(usize, usize)> {
    let n = structure.n_types();
    let mut out = Vec::new();
    for i in 0..n {
        for i2 in 0..n {
            if i == i2 || !structure.opt_sets[i].intersect(structure.opt_sets[i2]).is_empty() {
                continue;
            }
            let uninformative = structure.opt_sets[i]
                .iter()
                .all(|j| (inst.payoff(i, j) - inst.payoff(i2, j)).abs() <= tol_eq);
            if uninformative {
                out.push((i, i2));
            }
        }
    }
    out
}

/// True iff some ordered pair is Δ-difficult (KL < Δ on all of 𝒥(i), disjoint
/// optimal sets) while some job separates it by more than `kl_hi`.
pub fn classify_dbd(structure: &LearningStructure, kl: &KlTable, delta: f64, kl_hi: f64) -> bool {
    let n = structure.n_types();
    (0..n).any(|i| {
        (0..n).any(|i2| {
            i != i2
                && structure.opt_sets[i].intersect(structure.opt_sets[i2]).is_empty()
                && structure.opt_sets[i].iter().all(|j| kl.get(i, i2, j) < delta)
                && kl.row(i, i2).iter().any(|&d| d > kl_hi)
        })
    })
}

/// Default separation threshold of the Δ-DBD definition.
pub const DBD_KL_HI: f64 = 0.5;

/// Everything computed offline for one instance.
#[derive(Debug, Clone, Serialize)]
pub struct Analysis {
    pub plan: StaticPlan,
    pub structure: LearningStructure,
    #[serde(skip)]
    pub kl: KlTable,
    pub confirmations: Vec<Confirmation>,
    pub c_total: f64,
    pub difficult_pairs: Vec<(usize, usize)>,
    pub dbd01: bool,
    pub dbd04: bool,
}

impl Analysis {
    pub fn new(inst: &Instance) -> crate::Result<Self> {
        let plan = solve_static_plan(inst)?;
        let structure = LearningStructure::from_prices(inst, &plan.prices, TOL_TIE);
        let kl = KlTable::new(inst);
        let confirmations: Vec<_> = (0..inst.n_worker_types()).map(|i| compute_alpha(i, &structure, &kl)).collect();
        let c_total = compute_c(&confirmations, inst);
        let difficult_pairs = find_difficult_pairs(&structure, inst, TOL_EQ);
        let dbd01 = classify_dbd(&structure, &kl, 0.1, DBD_KL_HI);
        let dbd04 = classify_dbd(&structure, &kl, 0.4, DBD_KL_HI);
        Ok(Analysis { plan, structure, kl, confirmations, c_total, difficult_pairs, dbd01, dbd04 })
    }

    /// JSON report of the plan and learning structure.
    pub fn report(&self) -> serde_json::Value {
        let types: Vec<_> = (0..self.structure.n_types())
            .map(|i| {
                serde_json::json!({
                    "U": self.structure.best_adjusted[i],
                    "J_opt": self.structure.opt_sets[i],
                    "Str": self.structure.strong[i],
                    "alpha": self.confirmations[i].alpha,
                    "C_i": self.confirmations[i].cost,
                })
            })
            .collect();
        serde_json::json!({
            "V_star": self.plan.value,
            "p_star": self.plan.prices,
            "x_star": self.plan.routing,
            "v_star": self.plan.worker_values,
            "types": types,
            "C": self.c_total,
            "difficult_pairs": self.difficult_pairs,
            "dbd01": self.dbd01,
            "dbd04": self.dbd04,
        })
    }
}
