//! Mixed-integer programs expressed as an LP plus disjunctions and special ordered sets.
//!
//! A disjunction branch is a list of bound tightenings on existing variables or
//! rows. The LP itself carries the relaxation valid for both branches, so
//! choosing a branch never adds rows, only narrows bounds.

use std::fmt::Write as _;

use super::lp::{LinearProgram, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundTarget {
    Var(usize),
    Row(usize),
}

/// Intersects the bounds of `target` with `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundChange {
    pub target: BoundTarget,
    pub lower: f64,
    pub upper: f64,
}

impl BoundChange {
    pub fn var(j: usize, lower: f64, upper: f64) -> Self {
        BoundChange {
            target: BoundTarget::Var(j),
            lower,
            upper,
        }
    }

    pub fn row(i: usize, lower: f64, upper: f64) -> Self {
        BoundChange {
            target: BoundTarget::Row(i),
            lower,
            upper,
        }
    }

    /// Distance by which `value` misses the interval.
    pub fn violation(&self, value: f64) -> f64 {
        (self.lower - value).max(value - self.upper).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Disjunction {
    pub label: String,
    pub branches: [Vec<BoundChange>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SosKind {
    /// At most one slot nonzero.
    One,
    /// At most two slots nonzero, and they must be adjacent.
    Two { cyclic: bool },
}

/// Ordered slots of nonnegative variables. A slot is nonzero when any member is.
#[derive(Debug, Clone)]
pub struct SosGroup {
    pub label: String,
    pub kind: SosKind,
    pub slots: Vec<Vec<usize>>,
}

impl SosGroup {
    /// Admissible supports, each a list of slot indices, in canonical order.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        let k = self.slots.len();
        match self.kind {
            SosKind::One => (0..k).map(|j| vec![j]).collect(),
            SosKind::Two { cyclic } => {
                if k <= 2 {
                    return vec![(0..k).collect()];
                }
                let mut out: Vec<Vec<usize>> = (0..k - 1).map(|j| vec![j, j + 1]).collect();
                if cyclic {
                    out.push(vec![k - 1, 0]);
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MixedIntegerProgram {
    pub lp: LinearProgram,
    pub var_names: Vec<String>,
    pub row_names: Vec<String>,
    pub disjunctions: Vec<Disjunction>,
    pub sos_groups: Vec<SosGroup>,
    /// Any feasible point is acceptable; the objective is ignored.
    pub feasibility_only: bool,
}

impl MixedIntegerProgram {
    pub fn new(sense: Sense) -> Self {
        MixedIntegerProgram {
            lp: LinearProgram::new(sense),
            var_names: Vec::new(),
            row_names: Vec::new(),
            disjunctions: Vec::new(),
            sos_groups: Vec::new(),
            feasibility_only: false,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> usize {
        self.var_names.push(name.into());
        self.lp.add_var(lower, upper, cost)
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: &[(usize, f64)], lower: f64, upper: f64) -> usize {
        self.row_names.push(name.into());
        self.lp.add_row(coeffs, lower, upper)
    }

    pub fn target_value(&self, target: BoundTarget, x: &[f64], activity: &[f64]) -> f64 {
        match target {
            BoundTarget::Var(j) => x[j],
            BoundTarget::Row(i) => activity[i],
        }
    }

    /// Largest violation of a disjunction by `x`: the smaller of the two branch violations.
    pub fn disjunction_violation(&self, d: &Disjunction, x: &[f64], activity: &[f64]) -> f64 {
        d.branches
            .iter()
            .map(|b| {
                b.iter()
                    .map(|c| c.violation(self.target_value(c.target, x, activity)))
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks every row, every disjunction and every SOS pattern within `tol`.
    pub fn is_satisfied(&self, x: &[f64], tol: f64) -> bool {
        if self.lp.max_violation(x) > tol {
            return false;
        }
        let activity = self.lp.row_activity(x);
        if self
            .disjunctions
            .iter()
            .any(|d| self.disjunction_violation(d, x, &activity) > tol)
        {
            return false;
        }
        self.sos_groups.iter().all(|g| {
            let nonzero: Vec<usize> = (0..g.slots.len())
                .filter(|&s| g.slots[s].iter().any(|&v| x[v].abs() > tol))
                .collect();
            g.supports()
                .iter()
                .any(|sup| nonzero.iter().all(|s| sup.contains(s)))
        })
    }

    /// Human-readable listing of variables, rows, disjunctions and SOS groups.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        let lp = &self.lp;
        let fmt_bound = |v: f64| {
            if v == f64::INFINITY {
                "+inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v}")
            }
        };
        let target_name = |t: BoundTarget| match t {
            BoundTarget::Var(j) => self.var_names[j].clone(),
            BoundTarget::Row(i) => format!("row:{}", self.row_names[i]),
        };
        let _ = writeln!(
            out,
            "objective: {}",
            if self.feasibility_only {
                "feasibility".to_string()
            } else {
                let terms: Vec<String> = lp
                    .objective
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(j, c)| format!("{c}*{}", self.var_names[j]))
                    .collect();
                format!("{:?} {}", lp.sense, terms.join(" + "))
            }
        );
        let _ = writeln!(out, "variables ({}):", lp.num_vars());
        for j in 0..lp.num_vars() {
            let _ = writeln!(
                out,
                "  {} in [{}, {}]",
                self.var_names[j],
                fmt_bound(lp.var_lower[j]),
                fmt_bound(lp.var_upper[j])
            );
        }
        let _ = writeln!(out, "rows ({}):", lp.num_rows());
        for (i, row) in lp.rows.iter().enumerate() {
            let terms: Vec<String> = row
                .iter()
                .map(|&(j, v)| format!("{v:+}*{}", self.var_names[j]))
                .collect();
            let _ = writeln!(
                out,
                "  {}: {} <= {} <= {}",
                self.row_names[i],
                fmt_bound(lp.row_lower[i]),
                terms.join(" "),
                fmt_bound(lp.row_upper[i])
            );
        }
        let _ = writeln!(out, "disjunctions ({}):", self.disjunctions.len());
        for d in &self.disjunctions {
            let side = |b: &Vec<BoundChange>| {
                b.iter()
                    .map(|c| format!("{} in [{}, {}]", target_name(c.target), fmt_bound(c.lower), fmt_bound(c.upper)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let _ = writeln!(out, "  {}: {{{}}} OR {{{}}}", d.label, side(&d.branches[0]), side(&d.branches[1]));
        }
        let _ = writeln!(out, "sos groups ({}):", self.sos_groups.len());
        for g in &self.sos_groups {
            let _ = writeln!(out, "  {} {:?} with {} slots", g.label, g.kind, g.slots.len());
        }
        out
    }
}
