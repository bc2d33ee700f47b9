//! Stability checks, maximum disturbance, optimal preloads and force maps.

use std::fmt;
use std::thread;

use nalgebra::{DVector, Vector6};

use crate::encoding::{QueryConfig, TorqueMode, WrenchMode};
use crate::friction_cone::{FrictionConeState, DEFAULT_GAMMA, DEFAULT_Q_MAX};
use crate::grasp_model::GraspModel;
use crate::refinement::{analyze, solve_once, AnalysisError, RefinementOptions, RefinementOutcome, RefinementStatus};
use crate::solver::bnb::{SolveOptions, SolveStatus};

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub gamma: f64,
    pub q_max: u32,
    pub eta: f64,
    pub s_cap: f64,
    /// Converts N·m to N-equivalents when normalising mixed directions.
    pub characteristic_length: f64,
    pub solve: SolveOptions,
    pub stop_on_exact_witness: bool,
    pub jobs: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            gamma: DEFAULT_GAMMA,
            q_max: DEFAULT_Q_MAX,
            eta: 0.0,
            s_cap: 100.0,
            characteristic_length: 1.0,
            solve: SolveOptions::default(),
            stop_on_exact_witness: true,
            jobs: 1,
        }
    }
}

impl AnalysisOptions {
    pub fn refinement(&self) -> RefinementOptions {
        RefinementOptions {
            gamma: self.gamma,
            q_max: self.q_max,
            solve: self.solve,
            stop_on_exact_witness: self.stop_on_exact_witness,
            ..RefinementOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable { round: usize },
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Stable => write!(f, "STABLE"),
            Verdict::Unstable { round } => write!(f, "UNSTABLE (proven at round {round})"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub outcome: RefinementOutcome,
}

fn verdict_of(outcome: &RefinementOutcome) -> Verdict {
    match outcome.status {
        RefinementStatus::Feasible { .. } => Verdict::Stable,
        RefinementStatus::Infeasible { round } => Verdict::Unstable { round },
        RefinementStatus::Inconclusive { .. } => Verdict::Inconclusive,
    }
}

fn check_torques(grasp: &GraspModel, tau_c: &DVector<f64>) -> Result<(), AnalysisError> {
    if tau_c.len() != grasp.num_joints {
        return Err(AnalysisError::Invalid(format!(
            "{} commanded torques for {} joints",
            tau_c.len(),
            grasp.num_joints
        )));
    }
    Ok(())
}

pub fn check_stability(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    w: &Vector6<f64>,
    mdp_enabled: bool,
    opts: &AnalysisOptions,
) -> Result<StabilityReport, AnalysisError> {
    check_torques(grasp, tau_c)?;
    let config = QueryConfig {
        wrench: WrenchMode::Fixed(*w),
        torques: TorqueMode::Fixed(tau_c.clone()),
        eta: opts.eta,
        mdp_enabled,
        s_cap: opts.s_cap,
    };
    let outcome = analyze(grasp, &config, &opts.refinement())?;
    Ok(StabilityReport {
        verdict: verdict_of(&outcome),
        outcome,
    })
}

/// Scales `d` so that `sqrt(|f|² + (|m| / L)²) = 1`.
pub fn normalize_direction(d: &Vector6<f64>, characteristic_length: f64) -> Result<Vector6<f64>, AnalysisError> {
    if !(characteristic_length > 0.0) {
        return Err(AnalysisError::Invalid("characteristic length must be positive".into()));
    }
    let f = d.fixed_rows::<3>(0).norm();
    let m = d.fixed_rows::<3>(3).norm() / characteristic_length;
    let n = f.hypot(m);
    if !(n > 0.0) || !n.is_finite() {
        return Err(AnalysisError::Invalid("direction must be nonzero and finite".into()));
    }
    Ok(d / n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Disturbance {
    Value(f64),
    ExceedsCap,
    Inconclusive { best_bound: Option<f64> },
}

impl Disturbance {
    /// Numeric value with "exceeds cap" mapped to the cap.
    pub fn value_or_cap(&self, cap: f64) -> Option<f64> {
        match self {
            Disturbance::Value(v) => Some(*v),
            Disturbance::ExceedsCap => Some(cap),
            Disturbance::Inconclusive { .. } => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DisturbanceReport {
    pub result: Disturbance,
    pub direction: Vector6<f64>,
    pub outcome: RefinementOutcome,
}

pub fn max_disturbance(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    direction: &Vector6<f64>,
    opts: &AnalysisOptions,
) -> Result<DisturbanceReport, AnalysisError> {
    check_torques(grasp, tau_c)?;
    let dir = normalize_direction(direction, opts.characteristic_length)?;
    let config = QueryConfig {
        wrench: WrenchMode::Scaled(dir),
        torques: TorqueMode::Fixed(tau_c.clone()),
        eta: opts.eta,
        mdp_enabled: true,
        s_cap: opts.s_cap,
    };
    let outcome = analyze(grasp, &config, &opts.refinement())?;
    let result = match &outcome.status {
        RefinementStatus::Feasible { objective, .. } => {
            let s = objective.unwrap_or(0.0);
            if s >= opts.s_cap * (1.0 - 1e-9) {
                Disturbance::ExceedsCap
            } else {
                Disturbance::Value(s.max(0.0))
            }
        }
        // s = 0 is always admissible when the unloaded grasp is stable; infeasibility
        // means the grasp cannot even hold its own preload.
        RefinementStatus::Infeasible { .. } => Disturbance::Value(0.0),
        RefinementStatus::Inconclusive { best_bound, .. } => Disturbance::Inconclusive { best_bound: *best_bound },
    };
    Ok(DisturbanceReport {
        result,
        direction: dir,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TorqueResult {
    Optimal { torques: DVector<f64>, max_torque: f64 },
    InfeasibleForAll,
    Inconclusive,
}

#[derive(Debug, Clone)]
pub struct TorqueReport {
    pub result: TorqueResult,
    pub outcome: RefinementOutcome,
}

pub fn optimal_torques(grasp: &GraspModel, w: &Vector6<f64>, opts: &AnalysisOptions) -> Result<TorqueReport, AnalysisError> {
    let config = QueryConfig {
        wrench: WrenchMode::Fixed(*w),
        torques: TorqueMode::Decision,
        eta: opts.eta,
        mdp_enabled: true,
        s_cap: opts.s_cap,
    };
    let outcome = analyze(grasp, &config, &opts.refinement())?;
    let result = match &outcome.status {
        RefinementStatus::Feasible { solution, objective } => TorqueResult::Optimal {
            torques: solution.commanded_torques.map(|v| v.max(0.0)),
            max_torque: objective.unwrap_or(0.0).max(0.0),
        },
        RefinementStatus::Infeasible { .. } => TorqueResult::InfeasibleForAll,
        RefinementStatus::Inconclusive { .. } => TorqueResult::Inconclusive,
    };
    Ok(TorqueReport { result, outcome })
}

#[derive(Debug, Clone)]
pub struct ForceMapEntry {
    pub theta: f64,
    pub result: Disturbance,
}

pub fn force_map(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    u: &Vector6<f64>,
    v: &Vector6<f64>,
    resolution: f64,
    opts: &AnalysisOptions,
) -> Result<Vec<ForceMapEntry>, AnalysisError> {
    if !(resolution > 0.0) {
        return Err(AnalysisError::Invalid("angular resolution must be positive".into()));
    }
    if (u.norm() - 1.0).abs() > 1e-9 || (v.norm() - 1.0).abs() > 1e-9 || u.dot(v).abs() > 1e-9 {
        return Err(AnalysisError::Invalid("plane basis must be orthonormal".into()));
    }
    let count = ((2.0 * std::f64::consts::PI) / resolution - 1e-9).ceil().max(1.0) as usize;
    let thetas: Vec<f64> = (0..count).map(|k| k as f64 * resolution).collect();
    let eval = |theta: f64| -> Result<ForceMapEntry, AnalysisError> {
        let d = u * theta.cos() + v * theta.sin();
        let report = max_disturbance(grasp, tau_c, &d, opts)?;
        Ok(ForceMapEntry {
            theta,
            result: report.result,
        })
    };
    let jobs = opts.jobs.max(1).min(count);
    if jobs == 1 {
        return thetas.iter().map(|&t| eval(t)).collect();
    }
    let mut slots: Vec<Option<Result<ForceMapEntry, AnalysisError>>> = (0..count).map(|_| None).collect();
    thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(count.div_ceil(jobs)).enumerate().collect();
        let chunk_len = count.div_ceil(jobs);
        for (c, chunk) in chunks {
            let eval = &eval;
            let thetas = &thetas;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(eval(thetas[c * chunk_len + k]));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every direction evaluated")).collect()
}

/// Single solve without maximum dissipation, on a uniform cone at the finest depth.
pub fn ablation_no_mdp(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    w: &Vector6<f64>,
    opts: &AnalysisOptions,
) -> Result<StabilityReport, AnalysisError> {
    check_torques(grasp, tau_c)?;
    let config = QueryConfig {
        wrench: WrenchMode::Fixed(*w),
        torques: TorqueMode::Fixed(tau_c.clone()),
        eta: 0.0,
        mdp_enabled: false,
        s_cap: opts.s_cap,
    };
    let cone = FrictionConeState::uniform(opts.gamma, opts.q_max, opts.q_max + 1)?;
    let cones = vec![cone; grasp.num_contacts()];
    let start = std::time::Instant::now();
    let (out, sol) = solve_once(grasp, &cones, &config, &opts.solve)?;
    let record = crate::refinement::RoundRecord {
        round: 1,
        status: out.status,
        objective: None,
        deltas: vec![None; cones.len()],
        approximate: vec![false; cones.len()],
        refined: vec![false; cones.len()],
        sectors: cones.iter().map(|c| c.num_sectors()).sum(),
        nodes: out.nodes,
        elapsed: start.elapsed(),
    };
    let status = match (out.status, sol) {
        (SolveStatus::Optimal, Some(solution)) => RefinementStatus::Feasible {
            solution: Box::new(solution),
            objective: None,
        },
        (SolveStatus::Infeasible, _) => RefinementStatus::Infeasible { round: 1 },
        (status, _) => RefinementStatus::Inconclusive {
            round: 1,
            status,
            best_bound: out.best_bound,
        },
    };
    let outcome = RefinementOutcome {
        status,
        rounds: vec![record],
        cones,
    };
    Ok(StabilityReport {
        verdict: verdict_of(&outcome),
        outcome,
    })
}
