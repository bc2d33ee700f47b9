//! Bounded-variable revised simplex.
//!
//! Every row `lo <= a·x <= hi` gets a logical column `s = a·x` so the working
//! system is `[A | -I] (x, s) = 0` with simple bounds on all columns. Phase 1
//! minimises the sum of bound infeasibilities of the basic columns, so any
//! basis (cold, or inherited from a parent node) is a valid starting point.

use std::fmt;

/// Optimisation sense of an objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Linear program with ranged rows and bounded variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
}

impl Default for LinearProgram {
    fn default() -> Self {
        Self::new(Sense::Minimize)
    }
}

impl LinearProgram {
    pub fn new(sense: Sense) -> Self {
        LinearProgram {
            var_lower: Vec::new(),
            var_upper: Vec::new(),
            objective: Vec::new(),
            sense,
            rows: Vec::new(),
            row_lower: Vec::new(),
            row_upper: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.var_lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64) -> usize {
        self.var_lower.push(lower);
        self.var_upper.push(upper);
        self.objective.push(cost);
        self.var_lower.len() - 1
    }

    /// Adds `lower <= Σ coef·x <= upper`. Duplicate indices are merged.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for &(j, v) in coeffs {
            assert!(j < self.num_vars(), "row references unknown variable {j}");
            assert!(v.is_finite(), "non-finite coefficient");
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(entry) => entry.1 += v,
                None => row.push((j, v)),
            }
        }
        row.retain(|&(_, v)| v != 0.0);
        self.rows.push(row);
        self.row_lower.push(lower);
        self.row_upper.push(upper);
        self.rows.len() - 1
    }

    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest bound violation of `x` over variables and rows.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_vars() {
            worst = worst.max(self.var_lower[j] - x[j]).max(x[j] - self.var_upper[j]);
        }
        for (i, a) in self.row_activity(x).into_iter().enumerate() {
            worst = worst.max(self.row_lower[i] - a).max(a - self.row_upper[i]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    /// The basis became singular or the final point failed verification.
    NumericalFailure,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
            LpStatus::IterationLimit => "iteration-limit",
            LpStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ColState {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

/// Snapshot of a simplex basis, reusable as a warm start.
#[derive(Debug, Clone)]
pub struct Basis {
    pub(crate) state: Vec<ColState>,
    pub(crate) basic: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural values (meaningful when optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

/// Tolerances of the simplex core.
#[derive(Debug, Clone, Copy)]
pub struct LpTolerances {
    pub primal: f64,
    pub dual: f64,
    pub pivot: f64,
    /// Acceptance tolerance for the final verification against the bounds.
    pub verify: f64,
}

impl Default for LpTolerances {
    fn default() -> Self {
        LpTolerances {
            primal: 1e-9,
            dual: 1e-9,
            pivot: 1e-9,
            verify: 1e-7,
        }
    }
}

/// Solves `lp` from a cold start.
pub fn solve_lp(lp: &LinearProgram) -> LpSolution {
    let mut engine = LpEngine::new(lp, LpTolerances::default());
    let (lower, upper) = engine.bounds_of(lp);
    engine.solve(&lower, &upper, None)
}

const REFACTOR_EVERY: usize = 60;
const DEGENERATE_SWITCH: usize = 60;

/// Reusable simplex engine over a fixed constraint matrix; bounds vary per call.
pub(crate) struct LpEngine {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    cost: Vec<f64>,
    sign: f64,
    tol: LpTolerances,
    max_iterations: usize,

    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<ColState>,
    basic: Vec<usize>,
    binv: Vec<f64>,
}

impl LpEngine {
    pub(crate) fn new(lp: &LinearProgram, tol: LpTolerances) -> Self {
        let n = lp.num_vars();
        let m = lp.num_rows();
        let mut counts = vec![0usize; n];
        for row in &lp.rows {
            for &(j, _) in row {
                counts[j] += 1;
            }
        }
        let mut col_start = vec![0usize; n + 1];
        for j in 0..n {
            col_start[j + 1] = col_start[j] + counts[j];
        }
        let nnz = col_start[n];
        let mut col_row = vec![0usize; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = col_start.clone();
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, v) in row {
                col_row[fill[j]] = i;
                col_val[fill[j]] = v;
                fill[j] += 1;
            }
        }
        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost: Vec<f64> = lp.objective.iter().map(|c| sign * c).collect();
        cost.resize(n + m, 0.0);
        LpEngine {
            n,
            m,
            col_start,
            col_row,
            col_val,
            cost,
            sign,
            tol,
            max_iterations: 50_000 + 40 * (n + m),
            lower: vec![0.0; n + m],
            upper: vec![0.0; n + m],
            x: vec![0.0; n + m],
            state: vec![ColState::AtLower; n + m],
            basic: Vec::new(),
            binv: Vec::new(),
        }
    }

    /// Column bounds (structural then logical) taken from the program.
    pub(crate) fn bounds_of(&self, lp: &LinearProgram) -> (Vec<f64>, Vec<f64>) {
        let mut lower = lp.var_lower.clone();
        lower.extend_from_slice(&lp.row_lower);
        let mut upper = lp.var_upper.clone();
        upper.extend_from_slice(&lp.row_upper);
        (lower, upper)
    }

    fn for_col<F: FnMut(usize, f64)>(&self, j: usize, mut f: F) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[k], self.col_val[k]);
            }
        } else {
            f(j - self.n, -1.0);
        }
    }

    fn col_dot(&self, y: &[f64], j: usize) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for k in self.col_start[j]..self.col_start[j + 1] {
                s += y[self.col_row[k]] * self.col_val[k];
            }
            s
        } else {
            -y[j - self.n]
        }
    }

    /// w = B⁻¹ a_j
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        self.for_col(j, |r, v| {
            for i in 0..m {
                w[i] += self.binv[i * m + r] * v;
            }
        });
        w
    }

    fn nonbasic_value(&self, j: usize, st: ColState) -> (ColState, f64) {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        match st {
            ColState::AtUpper if hi.is_finite() => (ColState::AtUpper, hi),
            _ if lo.is_finite() => (ColState::AtLower, lo),
            _ if hi.is_finite() => (ColState::AtUpper, hi),
            _ => (ColState::Free, 0.0),
        }
    }

    fn cold_basis(&mut self) {
        let (n, m) = (self.n, self.m);
        self.basic = (n..n + m).collect();
        for j in 0..n + m {
            self.state[j] = if j >= n { ColState::Basic } else { ColState::AtLower };
        }
    }

    /// Rebuilds B⁻¹ by Gauss-Jordan elimination. Returns false if singular.
    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (c, &j) in self.basic.iter().enumerate() {
            self.for_col(j, |r, v| a[r * m + c] = v);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return false;
            }
            if piv != col {
                for k in 0..m {
                    a.swap(col * m + k, piv * m + k);
                    inv.swap(col * m + k, piv * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        // `a` now identity with rows in basis-position order: inv maps row space to positions.
        self.binv = inv;
        true
    }

    fn compute_basic_values(&mut self) {
        let m = self.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.n + m {
            if self.state[j] != ColState::Basic {
                let xj = self.x[j];
                if xj != 0.0 {
                    self.for_col(j, |r, v| rhs[r] += v * xj);
                }
            }
        }
        for i in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += self.binv[i * m + k] * rhs[k];
            }
            self.x[self.basic[i]] = -s;
        }
    }

    fn install(&mut self, lower: &[f64], upper: &[f64], warm: Option<&Basis>) {
        self.lower.copy_from_slice(lower);
        self.upper.copy_from_slice(upper);
        let mut ok = false;
        if let Some(b) = warm {
            if b.state.len() == self.n + self.m && b.basic.len() == self.m {
                self.state.copy_from_slice(&b.state);
                self.basic = b.basic.clone();
                ok = self.refactor();
            }
        }
        if !ok {
            self.cold_basis();
            ok = self.refactor();
            debug_assert!(ok);
        }
        for j in 0..self.n + self.m {
            if self.state[j] != ColState::Basic {
                let (st, v) = self.nonbasic_value(j, self.state[j]);
                self.state[j] = st;
                self.x[j] = v;
            }
        }
        self.compute_basic_values();
    }

    pub(crate) fn solve(&mut self, lower: &[f64], upper: &[f64], warm: Option<&Basis>) -> LpSolution {
        assert_eq!(lower.len(), self.n + self.m);
        for j in 0..self.n + self.m {
            if lower[j] > upper[j] + self.tol.primal {
                return self.finish(LpStatus::Infeasible, 0);
            }
        }
        self.install(lower, upper, warm);
        let mut attempts = 0;
        loop {
            let (status, iters) = self.iterate();
            if status == LpStatus::Optimal || status == LpStatus::Infeasible {
                // Verify from a fresh factorisation before reporting.
                if !self.refactor() {
                    self.cold_basis();
                    if !self.refactor() {
                        return self.finish(LpStatus::NumericalFailure, iters);
                    }
                }
                self.compute_basic_values();
                let infeas = self.basic_infeasibility();
                let consistent = match status {
                    LpStatus::Optimal => infeas <= self.tol.verify * 0.1,
                    _ => infeas > self.tol.primal,
                };
                if consistent || attempts >= 3 {
                    if status == LpStatus::Optimal && infeas > self.tol.verify {
                        return self.finish(LpStatus::NumericalFailure, iters);
                    }
                    return self.finish(status, iters);
                }
                attempts += 1;
                continue;
            }
            return self.finish(status, iters);
        }
    }

    fn basic_infeasibility(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &j in &self.basic {
            worst = worst.max(self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]);
        }
        worst
    }

    fn finish(&self, status: LpStatus, iterations: usize) -> LpSolution {
        let x = if self.x.len() >= self.n { self.x[..self.n].to_vec() } else { vec![0.0; self.n] };
        let objective = self.sign * x.iter().zip(&self.cost).map(|(a, b)| a * b).sum::<f64>();
        let basis = if status == LpStatus::Optimal || status == LpStatus::Infeasible {
            Some(Basis {
                state: self.state.clone(),
                basic: self.basic.clone(),
            })
        } else {
            None
        };
        LpSolution {
            status,
            x,
            objective,
            iterations,
            basis,
        }
    }

    fn iterate(&mut self) -> (LpStatus, usize) {
        let (n, m) = (self.n, self.m);
        let tol = self.tol;
        let mut since_refactor = 0usize;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        let mut cb = vec![0.0; m];
        let mut y = vec![0.0; m];
        for iter in 0..self.max_iterations {
            if since_refactor >= REFACTOR_EVERY {
                if !self.refactor() {
                    return (LpStatus::NumericalFailure, iter);
                }
                self.compute_basic_values();
                since_refactor = 0;
            }
            let mut phase1 = false;
            for i in 0..m {
                let j = self.basic[i];
                cb[i] = if self.x[j] < self.lower[j] - tol.primal {
                    phase1 = true;
                    -1.0
                } else if self.x[j] > self.upper[j] + tol.primal {
                    phase1 = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !phase1 {
                for i in 0..m {
                    cb[i] = self.cost[self.basic[i]];
                }
            }
            for k in 0..m {
                let mut s = 0.0;
                for i in 0..m {
                    s += cb[i] * self.binv[i * m + k];
                }
                y[k] = s;
            }

            // Pricing.
            let mut entering: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..n + m {
                let st = self.state[j];
                if st == ColState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let c = if phase1 { 0.0 } else { self.cost[j] };
                let d = c - self.col_dot(&y, j);
                let can_up = matches!(st, ColState::AtLower | ColState::Free) && self.x[j] < self.upper[j];
                let can_down = matches!(st, ColState::AtUpper | ColState::Free) && self.x[j] > self.lower[j];
                let sigma = if d < -tol.dual && can_up {
                    1.0
                } else if d > tol.dual && can_down {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    entering = Some((j, sigma));
                    break;
                }
                if d.abs() > best {
                    best = d.abs();
                    entering = Some((j, sigma));
                }
            }
            let Some((q, sigma)) = entering else {
                return (if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal }, iter);
            };

            let w = self.ftran(q);
            // Harris pass 1: maximal step with bounds relaxed by the primal tolerance.
            let mut t_max = f64::INFINITY;
            if self.lower[q].is_finite() && self.upper[q].is_finite() {
                t_max = self.upper[q] - self.lower[q];
            }
            let limit_of = |i: usize, relax: f64, this: &Self| -> Option<(f64, bool)> {
                let rho = -sigma * w[i];
                if rho.abs() < tol.pivot {
                    return None;
                }
                let j = this.basic[i];
                let v = this.x[j];
                let (lo, hi) = (this.lower[j], this.upper[j]);
                if rho > 0.0 {
                    if v < lo - tol.primal {
                        Some(((lo - v + relax) / rho, false))
                    } else if hi.is_finite() && v <= hi + tol.primal {
                        Some((((hi - v).max(0.0) + relax) / rho, true))
                    } else {
                        None
                    }
                } else if v > hi + tol.primal {
                    Some(((v - hi + relax) / -rho, true))
                } else if lo.is_finite() && v >= lo - tol.primal {
                    Some((((v - lo).max(0.0) + relax) / -rho, false))
                } else {
                    None
                }
            };
            for i in 0..m {
                if let Some((t, _)) = limit_of(i, tol.primal, self) {
                    t_max = t_max.min(t);
                }
            }
            if t_max.is_infinite() {
                return (
                    if phase1 { LpStatus::NumericalFailure } else { LpStatus::Unbounded },
                    iter,
                );
            }
            // Pass 2: among candidates within t_max, the largest pivot (or lowest index under Bland).
            let mut leave: Option<(usize, f64, bool)> = None;
            let mut best_piv = 0.0;
            for i in 0..m {
                if let Some((t, at_upper)) = limit_of(i, 0.0, self) {
                    if t <= t_max {
                        let piv = w[i].abs();
                        let better = if bland {
                            match leave {
                                None => true,
                                Some((li, _, _)) => self.basic[i] < self.basic[li],
                            }
                        } else {
                            piv > best_piv
                        };
                        if better {
                            best_piv = piv;
                            leave = Some((i, t.max(0.0), at_upper));
                        }
                    }
                }
            }
            let flip_len = self.upper[q] - self.lower[q];
            let step = match leave {
                Some((_, t, _)) if !(flip_len.is_finite() && flip_len <= t) => t,
                _ => {
                    // Bound flip of the entering column.
                    self.apply_step(q, sigma, flip_len, &w);
                    self.state[q] = if sigma > 0.0 { ColState::AtUpper } else { ColState::AtLower };
                    self.x[q] = if sigma > 0.0 { self.upper[q] } else { self.lower[q] };
                    degenerate_run = 0;
                    bland = false;
                    continue;
                }
            };
            let (r, _, at_upper) = leave.unwrap();
            self.apply_step(q, sigma, step, &w);
            let leaving = self.basic[r];
            self.x[leaving] = if at_upper { self.upper[leaving] } else { self.lower[leaving] };
            self.state[leaving] = if at_upper { ColState::AtUpper } else { ColState::AtLower };
            self.state[q] = ColState::Basic;
            self.basic[r] = q;
            self.pivot_binv(r, &w);
            since_refactor += 1;
            if step < 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
        }
        (LpStatus::IterationLimit, self.max_iterations)
    }

    fn apply_step(&mut self, q: usize, sigma: f64, step: f64, w: &[f64]) {
        if step == 0.0 {
            return;
        }
        self.x[q] += sigma * step;
        for i in 0..self.m {
            let j = self.basic[i];
            self.x[j] -= sigma * step * w[i];
        }
    }

    fn pivot_binv(&mut self, r: usize, w: &[f64]) {
        let m = self.m;
        let pr = w[r];
        for k in 0..m {
            self.binv[r * m + k] /= pr;
        }
        for i in 0..m {
            if i == r || w[i] == 0.0 {
                continue;
            }
            let f = w[i];
            for k in 0..m {
                self.binv[i * m + k] -= f * self.binv[r * m + k];
            }
        }
    }
}
