//! Small dense linear programs.
//!
//! Two-phase revised simplex with an explicit basis inverse and Bland's
//! anti-cycling rule in both pricing and the ratio test. The problems solved
//! here have at most a few dozen rows and are degenerate by construction, so
//! guaranteed termination matters more than pivot count.
//!
//! Problems are posed as
//!
//! ```text
//! minimize    c·z
//! subject to  G_r·z  (≤ | = | ≥)  h_r     for every row r
//!             lower ≤ z ≤ upper
//! ```
//!
//! and the solution reports one dual per row, `y_r = ∂(optimal objective)/∂h_r`.
//! With bounds at their defaults (`lower = 0`, no upper bound) strong duality
//! reads `c·z* = y·h`; `≤` rows carry `y_r ≤ 0` and `≥` rows carry `y_r ≥ 0`.

/// Absolute feasibility tolerance on O(1) data.
pub const TOL_FEAS: f64 = 1e-8;
/// Absolute duality-gap tolerance on O(1) data.
pub const TOL_GAP: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-11;
const RATIO_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    rows: Vec<Vec<f64>>,
    senses: Vec<Sense>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<Option<f64>>,
}

impl LpProblem {
    /// A problem over `objective.len()` nonnegative variables and no rows yet.
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn with_row(mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        self.add_row(coeffs, sense, rhs);
        self
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> usize {
        assert_eq!(coeffs.len(), self.objective.len(), "row length must match variable count");
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) {
        assert!(lower.is_finite());
        if let Some(u) = upper {
            assert!(u >= lower, "upper bound below lower bound");
        }
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn row(&self, r: usize) -> (&[f64], Sense, f64) {
        (&self.rows[r], self.senses[r], self.rhs[r])
    }

    /// Largest violation of any row or bound at `z`.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            let lhs = dot(row, z);
            let v = match self.senses[r] {
                Sense::Le => lhs - self.rhs[r],
                Sense::Ge => self.rhs[r] - lhs,
                Sense::Eq => (lhs - self.rhs[r]).abs(),
            };
            worst = worst.max(v);
        }
        for (k, &x) in z.iter().enumerate() {
            worst = worst.max(self.lower[k] - x);
            if let Some(u) = self.upper[k] {
                worst = worst.max(x - u);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point; empty unless optimal.
    pub primal: Vec<f64>,
    /// One multiplier per row; empty unless optimal.
    pub duals: Vec<f64>,
    /// `c·z*`; NaN unless optimal.
    pub objective: f64,
}

impl LpSolution {
    fn failed(status: LpStatus) -> Self {
        LpSolution { status, primal: Vec::new(), duals: Vec::new(), objective: f64::NAN }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural,
    Slack,
    Artificial,
}

/// Standard-form working copy: every row an equality with nonnegative rhs.
struct Tableau {
    m: usize,
    /// Column-major constraint matrix, `cols[c][r]`.
    cols: Vec<Vec<f64>>,
    kinds: Vec<ColKind>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    /// Row-major basis inverse.
    binv: Vec<f64>,
    xb: Vec<f64>,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn duals(&self, costs: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = costs[self.basis[r]];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += cb * b;
                }
            }
        }
        y
    }

    fn ftran(&self, col: usize, out: &mut [f64]) {
        let m = self.m;
        let a = &self.cols[col];
        for r in 0..m {
            out[r] = dot(&self.binv[r * m..(r + 1) * m], a);
        }
    }

    fn pivot(&mut self, row: usize, enter: usize, d: &[f64]) {
        let m = self.m;
        let piv = d[row];
        let (before, rest) = self.binv.split_at_mut(row * m);
        let (prow, after) = rest.split_at_mut(m);
        for x in prow.iter_mut() {
            *x /= piv;
        }
        let theta = self.xb[row] / piv;
        for r in 0..m {
            if r == row || d[r] == 0.0 {
                continue;
            }
            let f = d[r];
            let target = if r < row {
                &mut before[r * m..(r + 1) * m]
            } else {
                let o = (r - row - 1) * m;
                &mut after[o..o + m]
            };
            for (t, p) in target.iter_mut().zip(prow.iter()) {
                *t -= f * p;
            }
            self.xb[r] -= f * theta;
            if self.xb[r] < 0.0 && self.xb[r] > -TOL_FEAS {
                self.xb[r] = 0.0;
            }
        }
        self.xb[row] = theta;
        self.is_basic[self.basis[row]] = false;
        self.is_basic[enter] = true;
        self.basis[row] = enter;
    }

    /// Primal simplex from the current basis with Bland's rule.
    fn run(&mut self, costs: &[f64], allow_artificial: bool) -> Outcome {
        let m = self.m;
        let ncols = self.cols.len();
        let mut d = vec![0.0; m];
        loop {
            let y = self.duals(costs);
            let enter = (0..ncols).find(|&c| {
                !self.is_basic[c]
                    && (allow_artificial || self.kinds[c] != ColKind::Artificial)
                    && costs[c] - dot(&y, &self.cols[c]) < -COST_TOL
            });
            let Some(enter) = enter else {
                return Outcome::Optimal;
            };
            self.ftran(enter, &mut d);
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if d[r] > PIVOT_TOL {
                    let t = self.xb[r].max(0.0) / d[r];
                    leave = match leave {
                        None => Some((r, t)),
                        Some((lr, lt)) => {
                            if t < lt - RATIO_TIE || (t <= lt + RATIO_TIE && self.basis[r] < self.basis[lr]) {
                                Some((r, t))
                            } else {
                                Some((lr, lt))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Outcome::Unbounded;
            };
            self.pivot(row, enter, &d);
        }
    }
}

/// Solves `p` to optimality, or reports it infeasible or unbounded.
///
/// Pure and deterministic for a fixed problem.
pub fn solve(p: &LpProblem) -> LpSolution {
    let n = p.n_vars();
    for row in &p.rows {
        assert_eq!(row.len(), n, "row length must match variable count");
    }
    assert!(
        p.objective.iter().chain(p.rows.iter().flatten()).chain(&p.rhs).all(|x| x.is_finite()),
        "LP coefficients must be finite"
    );

    // Shift z = lower + z' and append upper bounds as internal rows.
    let mut rows: Vec<(Vec<f64>, Sense, f64)> = p
        .rows
        .iter()
        .zip(&p.senses)
        .zip(&p.rhs)
        .map(|((row, &s), &h)| (row.clone(), s, h - dot(row, &p.lower)))
        .collect();
    for (k, u) in p.upper.iter().enumerate() {
        if let Some(u) = u {
            let mut row = vec![0.0; n];
            row[k] = 1.0;
            rows.push((row, Sense::Le, u - p.lower[k]));
        }
    }
    let m = rows.len();

    // Flip rows so every rhs is nonnegative.
    let mut flipped = vec![false; m];
    for (r, (row, sense, h)) in rows.iter_mut().enumerate() {
        if *h < 0.0 {
            flipped[r] = true;
            row.iter_mut().for_each(|x| *x = -*x);
            *h = -*h;
            *sense = match *sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }

    let mut cols: Vec<Vec<f64>> = (0..n).map(|k| rows.iter().map(|(row, _, _)| row[k]).collect()).collect();
    let mut kinds = vec![ColKind::Structural; n];
    let mut basis = vec![usize::MAX; m];
    for (r, (_, sense, _)) in rows.iter().enumerate() {
        let sign = match sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => continue,
        };
        let mut col = vec![0.0; m];
        col[r] = sign;
        if *sense == Sense::Le {
            basis[r] = cols.len();
        }
        cols.push(col);
        kinds.push(ColKind::Slack);
    }
    for (r, (_, sense, _)) in rows.iter().enumerate() {
        if *sense != Sense::Le {
            let mut col = vec![0.0; m];
            col[r] = 1.0;
            basis[r] = cols.len();
            cols.push(col);
            kinds.push(ColKind::Artificial);
        }
    }
    let ncols = cols.len();
    let mut is_basic = vec![false; ncols];
    for &b in &basis {
        is_basic[b] = true;
    }
    let mut binv = vec![0.0; m * m];
    for r in 0..m {
        binv[r * m + r] = 1.0;
    }
    let rhs: Vec<f64> = rows.iter().map(|(_, _, h)| *h).collect();
    let mut t = Tableau { m, cols, kinds, rhs: rhs.clone(), basis, is_basic, binv, xb: rhs };

    // Phase 1.
    if t.kinds.contains(&ColKind::Artificial) {
        let costs: Vec<f64> = t.kinds.iter().map(|k| if *k == ColKind::Artificial { 1.0 } else { 0.0 }).collect();
        // Phase 1 is bounded below by zero.
        let _ = t.run(&costs, true);
        let infeas: f64 = (0..m).filter(|&r| t.kinds[t.basis[r]] == ColKind::Artificial).map(|r| t.xb[r]).sum();
        if infeas > TOL_FEAS {
            return LpSolution::failed(LpStatus::Infeasible);
        }
        // Drive zero-level artificials out of the basis where possible.
        let mut d = vec![0.0; m];
        for r in 0..m {
            if t.kinds[t.basis[r]] != ColKind::Artificial {
                continue;
            }
            t.xb[r] = 0.0;
            let enter = (0..ncols).find(|&c| {
                if t.is_basic[c] || t.kinds[c] == ColKind::Artificial {
                    return false;
                }
                let a = &t.cols[c];
                dot(&t.binv[r * m..(r + 1) * m], a).abs() > 1e-9
            });
            if let Some(c) = enter {
                t.ftran(c, &mut d);
                t.pivot(r, c, &d);
            }
        }
    }

    // Phase 2.
    let mut costs = vec![0.0; ncols];
    costs[..n].copy_from_slice(&p.objective);
    if let Outcome::Unbounded = t.run(&costs, false) {
        return LpSolution::failed(LpStatus::Unbounded);
    }

    // Refresh basic values from the final basis inverse.
    for r in 0..m {
        let v = dot(&t.binv[r * m..(r + 1) * m], &t.rhs);
        t.xb[r] = if v.abs() < 1e-13 { 0.0 } else { v };
    }
    let mut primal = p.lower.clone();
    for r in 0..m {
        let b = t.basis[r];
        if b < n {
            primal[b] += t.xb[r].max(0.0);
        }
    }
    let y = t.duals(&costs);
    let duals: Vec<f64> = (0..p.n_rows()).map(|r| if flipped[r] { -y[r] } else { y[r] }).collect();
    let objective = dot(&p.objective, &primal);
    LpSolution { status: LpStatus::Optimal, primal, duals, objective }
}
