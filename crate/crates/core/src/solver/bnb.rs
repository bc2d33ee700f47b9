//! Branch-and-bound over disjunctions and special ordered sets.
//!
//! Nodes keep a persistent chain of bound tightenings plus, per SOS group, the
//! list of supports still admissible. Children inherit the parent's final basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::rc::Rc;
use std::time::{Duration, Instant};

use super::lp::{Basis, LpEngine, LpStatus, LpTolerances, Sense};
use super::program::{BoundChange, BoundTarget, MixedIntegerProgram};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    pub feas_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            node_limit: 200_000,
            time_limit: None,
            feas_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
    TimeLimit,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_limit(self) -> bool {
        matches!(self, SolveStatus::NodeLimit | SolveStatus::TimeLimit)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NodeLimit => "node-limit",
            SolveStatus::TimeLimit => "time-limit",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Best proven bound on the objective (in the program's sense) when a limit stopped the search.
    pub best_bound: Option<f64>,
    pub nodes: usize,
    pub elapsed: Duration,
}

struct Chain {
    change: BoundChange,
    parent: Option<Rc<Chain>>,
}

struct Node {
    id: usize,
    depth: usize,
    /// Parent LP value in minimisation sense.
    bound: f64,
    chain: Option<Rc<Chain>>,
    sos_allowed: Vec<Rc<Vec<usize>>>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the greatest: lowest bound, then deepest, then oldest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

enum Branching {
    Disjunction(usize),
    Sos(usize),
}

/// Solves `mip` to global optimality (or first feasible leaf for feasibility programs).
pub fn solve_mip(mip: &MixedIntegerProgram, options: &SolveOptions) -> SolveOutcome {
    BranchAndBound::new(mip, options).run()
}

struct BranchAndBound<'a> {
    mip: &'a MixedIntegerProgram,
    options: &'a SolveOptions,
    engine: LpEngine,
    root_lower: Vec<f64>,
    root_upper: Vec<f64>,
    supports: Vec<Vec<Vec<usize>>>,
    sign: f64,
    n: usize,
}

impl<'a> BranchAndBound<'a> {
    fn new(mip: &'a MixedIntegerProgram, options: &'a SolveOptions) -> Self {
        let tol = LpTolerances {
            verify: options.feas_tol,
            ..LpTolerances::default()
        };
        let engine = LpEngine::new(&mip.lp, tol);
        let (root_lower, root_upper) = engine.bounds_of(&mip.lp);
        let sign = match mip.lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        BranchAndBound {
            mip,
            options,
            engine,
            root_lower,
            root_upper,
            supports: mip.sos_groups.iter().map(|g| g.supports()).collect(),
            sign,
            n: mip.lp.num_vars(),
        }
    }

    fn index_of(&self, t: BoundTarget) -> usize {
        match t {
            BoundTarget::Var(j) => j,
            BoundTarget::Row(i) => self.n + i,
        }
    }

    fn materialize(&self, node: &Node, extra: &[BoundChange]) -> (Vec<f64>, Vec<f64>) {
        let mut lower = self.root_lower.clone();
        let mut upper = self.root_upper.clone();
        let mut apply = |c: &BoundChange| {
            let k = self.index_of(c.target);
            lower[k] = lower[k].max(c.lower);
            upper[k] = upper[k].min(c.upper);
        };
        let mut link = node.chain.as_ref();
        while let Some(ch) = link {
            apply(&ch.change);
            link = ch.parent.as_ref();
        }
        for c in extra {
            apply(c);
        }
        for (g, group) in self.mip.sos_groups.iter().enumerate() {
            let allowed = &node.sos_allowed[g];
            if allowed.len() == self.supports[g].len() {
                continue;
            }
            let mut open = vec![false; group.slots.len()];
            for &s in allowed.iter() {
                for &slot in &self.supports[g][s] {
                    open[slot] = true;
                }
            }
            for (slot, members) in group.slots.iter().enumerate() {
                if !open[slot] {
                    for &v in members {
                        upper[v] = upper[v].min(0.0);
                    }
                }
            }
        }
        (lower, upper)
    }

    fn slot_weights(&self, g: usize, x: &[f64]) -> Vec<f64> {
        self.mip.sos_groups[g]
            .slots
            .iter()
            .map(|m| m.iter().map(|&v| x[v].abs()).sum())
            .collect()
    }

    /// Violation of SOS group `g` under the node's admissible supports.
    fn sos_violation(&self, g: usize, allowed: &[usize], x: &[f64]) -> f64 {
        let tol = self.options.feas_tol;
        let w = self.slot_weights(g, x);
        let total: f64 = w.iter().filter(|&&v| v > tol).sum();
        let nonzero: Vec<usize> = (0..w.len()).filter(|&s| w[s] > tol).collect();
        if nonzero.is_empty() {
            return 0.0;
        }
        let mut best_cover: f64 = 0.0;
        for &s in allowed {
            let sup = &self.supports[g][s];
            if nonzero.iter().all(|k| sup.contains(k)) {
                return 0.0;
            }
            let cover: f64 = sup.iter().map(|&k| if w[k] > tol { w[k] } else { 0.0 }).sum();
            best_cover = best_cover.max(cover);
        }
        total - best_cover
    }

    fn pick_branch(&self, node: &Node, x: &[f64], activity: &[f64]) -> Option<Branching> {
        let tol = self.options.feas_tol;
        let mut best: Option<(usize, f64)> = None;
        for (k, d) in self.mip.disjunctions.iter().enumerate() {
            let v = self.mip.disjunction_violation(d, x, activity);
            if v > tol && best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        if let Some((k, _)) = best {
            return Some(Branching::Disjunction(k));
        }
        for g in 0..self.mip.sos_groups.len() {
            let v = self.sos_violation(g, &node.sos_allowed[g], x);
            if v > tol && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        best.map(|(g, _)| Branching::Sos(g))
    }

    /// Tightenings that pin the leaf to the branches and supports it already satisfies.
    fn polish_changes(&self, node: &Node, x: &[f64], activity: &[f64]) -> Vec<BoundChange> {
        let mut out = Vec::new();
        for d in &self.mip.disjunctions {
            let viol: Vec<f64> = d
                .branches
                .iter()
                .map(|b| {
                    b.iter()
                        .map(|c| c.violation(self.mip.target_value(c.target, x, activity)))
                        .fold(0.0, f64::max)
                })
                .collect();
            let pick = if viol[1] < viol[0] { 1 } else { 0 };
            out.extend(d.branches[pick].iter().copied());
        }
        let tol = self.options.feas_tol;
        for (g, group) in self.mip.sos_groups.iter().enumerate() {
            let w = self.slot_weights(g, x);
            let nonzero: Vec<usize> = (0..w.len()).filter(|&s| w[s] > tol).collect();
            let chosen = node.sos_allowed[g]
                .iter()
                .map(|&s| &self.supports[g][s])
                .find(|sup| nonzero.iter().all(|k| sup.contains(k)));
            if let Some(sup) = chosen {
                for (slot, members) in group.slots.iter().enumerate() {
                    if !sup.contains(&slot) {
                        for &v in members {
                            out.push(BoundChange::var(v, f64::NEG_INFINITY, 0.0));
                        }
                    }
                }
            }
        }
        out
    }

    fn run(mut self) -> SolveOutcome {
        let start = Instant::now();
        let mip = self.mip;
        let feas_only = mip.feasibility_only;
        let mut heap = BinaryHeap::new();
        let mut next_id = 0usize;
        heap.push(Node {
            id: next_id,
            depth: 0,
            bound: f64::NEG_INFINITY,
            chain: None,
            sos_allowed: self
                .supports
                .iter()
                .map(|s| Rc::new((0..s.len()).collect()))
                .collect(),
            basis: None,
        });
        next_id += 1;

        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        let mut nodes = 0usize;
        let mut trouble = false;
        let prune_tol = |inc: f64| 1e-9 * inc.abs().max(1.0);

        while let Some(node) = heap.pop() {
            if let Some((inc, _)) = &incumbent {
                if node.bound >= inc - prune_tol(*inc) {
                    continue;
                }
            }
            let limit = if nodes >= self.options.node_limit {
                Some(SolveStatus::NodeLimit)
            } else if self.options.time_limit.is_some_and(|t| start.elapsed() >= t) {
                Some(SolveStatus::TimeLimit)
            } else {
                None
            };
            if let Some(status) = limit {
                let open_bound = heap.iter().map(|n| n.bound).fold(node.bound, f64::min);
                let best_bound = match &incumbent {
                    Some((inc, _)) => open_bound.min(*inc),
                    None => open_bound,
                };
                return SolveOutcome {
                    status,
                    objective: incumbent.as_ref().map(|(v, _)| self.sign * v),
                    assignment: incumbent.map(|(_, x)| x),
                    best_bound: best_bound.is_finite().then_some(self.sign * best_bound),
                    nodes,
                    elapsed: start.elapsed(),
                };
            }
            nodes += 1;

            let (lower, upper) = self.materialize(&node, &[]);
            let mut sol = self.engine.solve(&lower, &upper, node.basis.as_deref());
            if matches!(sol.status, LpStatus::NumericalFailure | LpStatus::IterationLimit) {
                sol = self.engine.solve(&lower, &upper, None);
            }
            log::trace!(
                "node {} depth {} bound {:.6e} lp {} obj {:.6e}",
                node.id,
                node.depth,
                node.bound,
                sol.status,
                sol.objective
            );
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    return SolveOutcome {
                        status: SolveStatus::Unbounded,
                        assignment: None,
                        objective: None,
                        best_bound: None,
                        nodes,
                        elapsed: start.elapsed(),
                    }
                }
                _ => {
                    trouble = true;
                    continue;
                }
            }
            let value = if feas_only { 0.0 } else { self.sign * sol.objective };
            if let Some((inc, _)) = &incumbent {
                if value >= inc - prune_tol(*inc) {
                    continue;
                }
            }
            let x = sol.x;
            let activity = mip.lp.row_activity(&x);
            let basis = sol.basis.map(Rc::new);
            match self.pick_branch(&node, &x, &activity) {
                None => {
                    let extra = self.polish_changes(&node, &x, &activity);
                    let (pl, pu) = self.materialize(&node, &extra);
                    let polished = self.engine.solve(&pl, &pu, basis.as_deref());
                    let mut best_x = x;
                    let mut best_v = value;
                    if polished.status == LpStatus::Optimal {
                        let pv = if feas_only { 0.0 } else { self.sign * polished.objective };
                        if pv <= value + 1e-7 * value.abs().max(1.0) {
                            best_x = polished.x;
                            best_v = pv;
                        }
                    }
                    if feas_only {
                        return SolveOutcome {
                            status: SolveStatus::Optimal,
                            objective: Some(0.0),
                            assignment: Some(best_x),
                            best_bound: Some(0.0),
                            nodes,
                            elapsed: start.elapsed(),
                        };
                    }
                    if incumbent.as_ref().is_none_or(|(inc, _)| best_v < *inc) {
                        incumbent = Some((best_v, best_x));
                    }
                }
                Some(Branching::Disjunction(k)) => {
                    let d = &mip.disjunctions[k];
                    let viol: Vec<f64> = d
                        .branches
                        .iter()
                        .map(|b| {
                            b.iter()
                                .map(|c| c.violation(mip.target_value(c.target, &x, &activity)))
                                .fold(0.0, f64::max)
                        })
                        .collect();
                    let order = if viol[1] < viol[0] { [1, 0] } else { [0, 1] };
                    for b in order {
                        let mut chain = node.chain.clone();
                        for c in &d.branches[b] {
                            chain = Some(Rc::new(Chain {
                                change: *c,
                                parent: chain,
                            }));
                        }
                        heap.push(Node {
                            id: next_id,
                            depth: node.depth + 1,
                            bound: value,
                            chain,
                            sos_allowed: node.sos_allowed.clone(),
                            basis: basis.clone(),
                        });
                        next_id += 1;
                    }
                }
                Some(Branching::Sos(g)) => {
                    let allowed = &node.sos_allowed[g];
                    let w = self.slot_weights(g, &x);
                    let sw: Vec<f64> = allowed
                        .iter()
                        .map(|&s| self.supports[g][s].iter().map(|&k| w[k]).sum())
                        .collect();
                    let total: f64 = sw.iter().sum();
                    let mut acc = 0.0;
                    let mut split = 1;
                    for (i, v) in sw.iter().enumerate() {
                        acc += v;
                        if acc >= 0.5 * total {
                            split = i + 1;
                            break;
                        }
                    }
                    split = split.clamp(1, allowed.len() - 1);
                    let left: Vec<usize> = allowed[..split].to_vec();
                    let right: Vec<usize> = allowed[split..].to_vec();
                    let lw: f64 = sw[..split].iter().sum();
                    let rw: f64 = sw[split..].iter().sum();
                    let halves = if rw > lw { [right, left] } else { [left, right] };
                    for half in halves {
                        let mut sos_allowed = node.sos_allowed.clone();
                        sos_allowed[g] = Rc::new(half);
                        heap.push(Node {
                            id: next_id,
                            depth: node.depth + 1,
                            bound: value,
                            chain: node.chain.clone(),
                            sos_allowed,
                            basis: basis.clone(),
                        });
                        next_id += 1;
                    }
                }
            }
        }

        match incumbent {
            Some((v, x)) => SolveOutcome {
                status: SolveStatus::Optimal,
                objective: Some(self.sign * v),
                assignment: Some(x),
                best_bound: Some(self.sign * v),
                nodes,
                elapsed: start.elapsed(),
            },
            None => SolveOutcome {
                status: if trouble { SolveStatus::NumericalFailure } else { SolveStatus::Infeasible },
                assignment: None,
                objective: None,
                best_bound: None,
                nodes,
                elapsed: start.elapsed(),
            },
        }
    }
}
