//! Successive local refinement of the friction cones.
//!
//! Each round solves the encoding for the current cones. An infeasible round
//! ends the analysis: the cones only ever shrink towards the exact friction
//! law, so no finer round could be feasible. Otherwise the sector holding each
//! contact's friction and motion weights is bisected, unless it is already at
//! the finest depth or the contact satisfies the exact contact law.

use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::encoding::{
    contact_law_violation, encode, encode_minmax_torque, extract_solution, EncodeError, EquilibriumSolution,
    QueryConfig, TorqueMode, WrenchMode,
};
use crate::friction_cone::{ConeError, FrictionConeState, Refinement, DEFAULT_GAMMA, DEFAULT_Q_MAX};
use crate::grasp_model::GraspModel;
use crate::solver::bnb::{solve_mip, SolveOptions, SolveOutcome, SolveStatus};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct RefinementOptions {
    pub gamma: f64,
    pub q_max: u32,
    pub solve: SolveOptions,
    /// Skip refining contacts whose witness already satisfies the exact contact law.
    pub stop_on_exact_witness: bool,
    pub exact_tol: f64,
}

impl Default for RefinementOptions {
    fn default() -> Self {
        RefinementOptions {
            gamma: DEFAULT_GAMMA,
            q_max: DEFAULT_Q_MAX,
            solve: SolveOptions::default(),
            stop_on_exact_witness: true,
            exact_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub round: usize,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Angle of each contact's active sector, `None` when the contact carries no weights.
    pub deltas: Vec<Option<f64>>,
    /// Active contacts whose witness still violates the exact contact law.
    pub approximate: Vec<bool>,
    pub refined: Vec<bool>,
    pub sectors: usize,
    pub nodes: usize,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub enum RefinementStatus {
    Feasible {
        solution: Box<EquilibriumSolution>,
        objective: Option<f64>,
    },
    Infeasible {
        round: usize,
    },
    Inconclusive {
        round: usize,
        status: SolveStatus,
        best_bound: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct RefinementOutcome {
    pub status: RefinementStatus,
    pub rounds: Vec<RoundRecord>,
    pub cones: Vec<FrictionConeState>,
}

impl RefinementOutcome {
    pub fn total_nodes(&self) -> usize {
        self.rounds.iter().map(|r| r.nodes).sum()
    }

    pub fn total_time(&self) -> Duration {
        self.rounds.iter().map(|r| r.elapsed).sum()
    }

    /// Widest sector among the contacts of the last round that remain approximate.
    pub fn final_delta(&self) -> Option<f64> {
        self.rounds.last()?.max_approximate_delta()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.rounds.iter().filter_map(|r| r.objective).collect()
    }

    /// `round,objective,max_delta_deg,nodes,ms` lines; the angle is `-` when the
    /// round's witness satisfies the exact contact law everywhere.
    pub fn trace(&self) -> String {
        let mut out = String::from("round,objective,max_delta_deg,nodes,ms\n");
        for r in &self.rounds {
            let obj = r.objective.map(|v| format!("{v:.9}")).unwrap_or_else(|| r.status.to_string());
            let delta = r
                .max_approximate_delta()
                .map(|d| format!("{:.6}", d.to_degrees()))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("{},{},{},{},{}\n", r.round, obj, delta, r.nodes, r.elapsed.as_millis()));
        }
        out
    }
}

impl RoundRecord {
    pub fn max_approximate_delta(&self) -> Option<f64> {
        self.deltas
            .iter()
            .zip(&self.approximate)
            .filter_map(|(d, &a)| d.filter(|_| a))
            .reduce(f64::max)
    }
}

impl fmt::Display for RefinementStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefinementStatus::Feasible { .. } => write!(f, "feasible"),
            RefinementStatus::Infeasible { round } => write!(f, "infeasible at round {round}"),
            RefinementStatus::Inconclusive { round, status, .. } => write!(f, "inconclusive at round {round} ({status})"),
        }
    }
}

/// One encode-and-solve pass on fixed cones.
pub fn solve_once(
    grasp: &GraspModel,
    cones: &[FrictionConeState],
    config: &QueryConfig,
    solve: &SolveOptions,
) -> Result<(SolveOutcome, Option<EquilibriumSolution>), AnalysisError> {
    let mut enc = encode(grasp, cones, config)?;
    if config.torques == TorqueMode::Decision {
        encode_minmax_torque(&mut enc)?;
    }
    let out = solve_mip(&enc.mip, solve);
    let sol = match &out.assignment {
        Some(x) if out.status == SolveStatus::Optimal => Some(extract_solution(&enc, grasp, x, 10.0 * solve.feas_tol)?),
        _ => None,
    };
    Ok((out, sol))
}

fn active_sector(cone: &FrictionConeState, weights: &[f64], tol: f64) -> Option<usize> {
    let (k, w) = weights
        .iter()
        .enumerate()
        .fold((0, 0.0), |best, (k, &w)| if w > best.1 { (k, w) } else { best });
    (w > tol && k < cone.num_sectors()).then_some(k)
}

pub fn analyze(grasp: &GraspModel, config: &QueryConfig, options: &RefinementOptions) -> Result<RefinementOutcome, AnalysisError> {
    let cone = FrictionConeState::init(options.gamma, options.q_max)?;
    analyze_from(grasp, config, options, vec![cone; grasp.num_contacts()])
}

/// Runs the refinement loop starting from the given cones.
pub fn analyze_from(
    grasp: &GraspModel,
    config: &QueryConfig,
    options: &RefinementOptions,
    mut cones: Vec<FrictionConeState>,
) -> Result<RefinementOutcome, AnalysisError> {
    if cones.len() != grasp.num_contacts() {
        return Err(AnalysisError::Invalid(format!(
            "{} cones for {} contacts",
            cones.len(),
            grasp.num_contacts()
        )));
    }
    let base = (2.0 * std::f64::consts::PI / options.gamma).round() as usize;
    let max_rounds = grasp.num_contacts() * base * (1usize << options.q_max) + 1;
    let has_objective = config.torques == TorqueMode::Decision || matches!(config.wrench, WrenchMode::Scaled(_));
    let mut rounds = Vec::new();
    loop {
        let round = rounds.len() + 1;
        assert!(round <= max_rounds, "refinement exceeded its round bound");
        let start = Instant::now();
        let (out, sol) = solve_once(grasp, &cones, config, &options.solve)?;
        let mut record = RoundRecord {
            round,
            status: out.status,
            objective: out.objective.filter(|_| has_objective),
            deltas: vec![None; cones.len()],
            approximate: vec![false; cones.len()],
            refined: vec![false; cones.len()],
            sectors: cones.iter().map(|c| c.num_sectors()).sum(),
            nodes: out.nodes,
            elapsed: Duration::ZERO,
        };
        log::debug!("round {round}: {} after {} nodes", out.status, out.nodes);
        let sol = match (out.status, sol) {
            (SolveStatus::Optimal, Some(sol)) => sol,
            (SolveStatus::Infeasible, _) => {
                record.elapsed = start.elapsed();
                rounds.push(record);
                return Ok(RefinementOutcome {
                    status: RefinementStatus::Infeasible { round },
                    rounds,
                    cones,
                });
            }
            (status, _) => {
                record.elapsed = start.elapsed();
                rounds.push(record);
                return Ok(RefinementOutcome {
                    status: RefinementStatus::Inconclusive {
                        round,
                        status,
                        best_bound: out.best_bound,
                    },
                    rounds,
                    cones,
                });
            }
        };

        let mut next = cones.clone();
        for (i, cone) in cones.iter().enumerate() {
            let Some(k) = active_sector(cone, &sol.sos_weights[i], options.solve.feas_tol) else {
                continue;
            };
            record.deltas[i] = Some(cone.sector_angle(k));
            let exact = contact_law_violation(&sol, grasp, i, config.eta) <= options.exact_tol;
            record.approximate[i] = !exact;
            if cone.is_finest(k) || (exact && options.stop_on_exact_witness) {
                continue;
            }
            if let Refinement::Refined(c) = cone.refine_sector(k)? {
                next[i] = c;
                record.refined[i] = true;
            }
        }
        record.elapsed = start.elapsed();
        let done = !record.refined.iter().any(|&r| r);
        rounds.push(record);
        if done {
            return Ok(RefinementOutcome {
                status: RefinementStatus::Feasible {
                    objective: out.objective.filter(|_| has_objective),
                    solution: Box::new(sol),
                },
                rounds,
                cones,
            });
        }
        cones = next;
    }
}
