mod common;

use rand::SeedableRng;

use matchlearn::analytics::{kl_bernoulli, solve_weighted_confirmation, Analysis, KlTable, LearningStructure, TOL_TIE};
use matchlearn::belief::BeliefModel;
use matchlearn::eval::difficult_instance;
use matchlearn::policies::{MarketView, Phase, Policy, PolicyKind, PolicyOptions, PolicyState, Worker};
use matchlearn::rng::SimRng;

#[test]
fn misconfirmation_stays_below_the_odds_bound() {
    let check = common::misconfirmation_suite(3, 10_000);
    assert!(check.ok, "{}", check.detail);
}

/// Cost Σ_j α_j c_j of the cheapest rescaled simplex point meeting every row,
/// searched on a grid of step 1e-3 over two real jobs.
fn grid_oracle(costs: &[f64], rows: &[(Vec<f64>, f64)]) -> f64 {
    let mut best = f64::INFINITY;
    for k in 0..=1000 {
        let a = [k as f64 / 1000.0, 1.0 - k as f64 / 1000.0];
        let scale = rows
            .iter()
            .map(|(kl, rhs)| rhs / (a[0] * kl[0] + a[1] * kl[1]))
            .fold(0.0, f64::max);
        if scale.is_finite() {
            best = best.min(scale * (a[0] * costs[0] + a[1] * costs[1]));
        }
    }
    best
}

#[test]
fn deem_plus_program_matches_grid_search() {
    let inst = difficult_instance(30);
    let s = LearningStructure::from_prices(&inst, &[0.0, 0.0, 0.0], TOL_TIE);
    let kl = KlTable::new(&inst);
    let g = [0.9, 0.1];
    let log_n = 30f64.ln();
    let costs: Vec<f64> = (0..3).map(|j| g[0] * s.regret[0][j] + g[1] * s.regret[1][j]).collect();
    let rows: Vec<(Vec<f64>, f64)> = [(0, 1), (1, 0)]
        .into_iter()
        .map(|(i, i2)| (kl.row(i, i2).to_vec(), g[i] * (1.0 + s.regret_scale[i][i2].ln() / log_n)))
        .filter(|(_, rhs)| *rhs > 0.0)
        .collect();
    let w = solve_weighted_confirmation(&costs, rows.iter().map(|(k, r)| (k.as_slice(), *r))).unwrap();
    assert_eq!(w[2], 0.0);
    let lp_cost: f64 = w.iter().zip(&costs).map(|(a, c)| a * c).sum();
    let grid = grid_oracle(&costs, &rows);
    assert!((lp_cost - grid).abs() < 1e-3, "lp {lp_cost} grid {grid}");
    // Row (0,1) binds on job 1 alone.
    assert!((w[1] - 0.9 * (1.0 + s.regret_scale[0][1].ln() / log_n) / kl_bernoulli(0.3, 0.9)).abs() < 1e-9);
}

fn run_isolated(kind: PolicyKind, inst: &matchlearn::Instance, truth: usize, seed: u64) -> Option<usize> {
    let an = Analysis::new(inst).unwrap();
    let model = BeliefModel::new(inst);
    let view = MarketView::new(inst, &model, &an.kl, &an.plan.prices, &an.plan.prices, &an.structure);
    let mut policy = Policy::new(kind, PolicyOptions::default());
    let mut r = SimRng::seed_from_u64(seed);
    let mut w = Worker { true_type: truth, age: 0, belief: model.fresh(), state: PolicyState::new(kind, inst.n_job_types()) };
    for _ in 0..inst.lifetime {
        let j = policy.decide(&mut w, &view, &mut r);
        if let Phase::Exploit(label) = w.state.phase {
            return Some(label);
        }
        if j != inst.kappa() {
            let success = rand::Rng::random::<f64>(&mut r) < inst.payoff(truth, j);
            policy.observe(&mut w, &model, j, success);
        }
    }
    None
}

#[test]
fn explore_then_exploit_policies_label_most_workers_correctly() {
    let inst = difficult_instance(100);
    for kind in [PolicyKind::Deem, PolicyKind::DeemPlus] {
        for truth in 0..2 {
            let correct = (0..400).filter(|&s| run_isolated(kind, &inst, truth, s) == Some(truth)).count();
            assert!(correct >= 340, "{kind} type {truth}: {correct}/400");
        }
    }
}
