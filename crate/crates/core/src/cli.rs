//! Command-line front end.
//!
//! Exit codes: 0 when the query is answered (an unstable verdict is an
//! answer), 1 when no commanded torques stabilise the grasp, 2 for input
//! errors and 3 when the solver stopped at a limit.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DVector, Vector6};

use crate::grasp_model::{read_grasp_file, GraspModel};
use crate::queries::{
    ablation_no_mdp, check_stability, force_map, max_disturbance, optimal_torques, AnalysisOptions, Disturbance,
    StabilityReport, TorqueResult, Verdict,
};
use crate::refinement::{RefinementOutcome, RefinementStatus};

pub const EXIT_ANSWERED: i32 = 0;
pub const EXIT_INFEASIBLE_ALL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "passive-grasp", version, about = "Passive stability analysis of multi-finger grasps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decide whether the grasp resists a wrench under the commanded torques.
    Check {
        #[command(flatten)]
        common: Common,
        /// Wrench (fx fy fz mx my mz); defaults to the file's wrench.
        #[arg(long, num_args = 6, allow_negative_numbers = true)]
        wrench: Option<Vec<f64>>,
        /// Drop the maximum-dissipation constraints.
        #[arg(long)]
        no_mdp: bool,
    },
    /// Largest disturbance magnitude resisted along a direction.
    MaxWrench {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 6, allow_negative_numbers = true, required = true)]
        direction: Vec<f64>,
    },
    /// Commanded torques minimising the largest joint torque that still resist the wrench.
    OptimalTorques {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 6, allow_negative_numbers = true)]
        wrench: Option<Vec<f64>>,
    },
    /// Maximum disturbance over a circle of directions, as CSV.
    ForceMap {
        #[command(flatten)]
        common: Common,
        /// xy, yz, xz (forces) or mxy, myz, mxz (moments).
        #[arg(long, default_value = "xy")]
        plane: String,
        #[arg(long, default_value_t = 1.0)]
        resolution_deg: f64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Single solve without maximum dissipation on the finest uniform cone.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 6, allow_negative_numbers = true)]
        wrench: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Grasp description (JSON).
    pub grasp: PathBuf,
    /// Commanded joint torques, overriding the file.
    #[arg(long, num_args = 1.., allow_negative_numbers = true)]
    pub preload: Option<Vec<f64>>,
    /// Normal uncertainty, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub eta_deg: f64,
    #[arg(long, default_value_t = 90.0)]
    pub gamma_deg: f64,
    #[arg(long, default_value_t = crate::friction_cone::DEFAULT_Q_MAX)]
    pub q_max: u32,
    #[arg(long, default_value_t = 100.0)]
    pub s_cap: f64,
    /// Branch-and-bound node limit per round.
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Wall-clock limit per round, seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Round trace (`round,objective,max_delta_deg,nodes,ms`) on stderr.
    #[arg(long)]
    pub trace: bool,
}

/// An empty message marks output closed by the reader (e.g. `| head`).
#[derive(Debug)]
struct InputError(String);

fn is_broken_pipe(e: &dyn std::any::Any) -> bool {
    let pipe = |e: &io::Error| e.kind() == io::ErrorKind::BrokenPipe;
    e.downcast_ref::<io::Error>().is_some_and(pipe)
        || e.downcast_ref::<csv::Error>()
            .is_some_and(|e| matches!(e.kind(), csv::ErrorKind::Io(io) if pipe(io)))
}

impl<E: std::fmt::Display + 'static> From<E> for InputError {
    fn from(e: E) -> Self {
        if is_broken_pipe(&e) {
            return InputError(String::new());
        }
        InputError(e.to_string())
    }
}

struct Loaded {
    grasp: GraspModel,
    torques: DVector<f64>,
    opts: AnalysisOptions,
}

fn load(common: &Common) -> Result<Loaded, InputError> {
    let grasp = read_grasp_file(&common.grasp)?;
    let torques = match &common.preload {
        Some(p) if p.len() != grasp.num_joints => {
            return Err(InputError(format!(
                "--preload has {} values for {} joints",
                p.len(),
                grasp.num_joints
            )))
        }
        Some(p) => {
            if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(InputError("--preload values must be finite and >= 0".into()));
            }
            DVector::from_column_slice(p)
        }
        None => grasp.commanded_torques.clone(),
    };
    if !(common.eta_deg >= 0.0 && common.eta_deg < 90.0) {
        return Err(InputError("--eta-deg must lie in [0, 90)".into()));
    }
    let gamma = common.gamma_deg.to_radians();
    let base = 2.0 * std::f64::consts::PI / gamma;
    if !(common.gamma_deg > 0.0 && common.gamma_deg < 180.0) || (base - base.round()).abs() > 1e-9 {
        return Err(InputError("--gamma-deg must divide 360 and be below 180".into()));
    }
    if !(common.s_cap > 0.0 && common.s_cap.is_finite()) {
        return Err(InputError("--s-cap must be positive".into()));
    }
    let mut opts = AnalysisOptions {
        gamma,
        q_max: common.q_max,
        eta: common.eta_deg.to_radians(),
        s_cap: common.s_cap,
        ..AnalysisOptions::default()
    };
    if let Some(n) = common.node_limit {
        opts.solve.node_limit = n;
    }
    if let Some(t) = common.time_limit {
        if !(t > 0.0 && t.is_finite()) {
            return Err(InputError("--time-limit must be positive".into()));
        }
        opts.solve.time_limit = Some(Duration::from_secs_f64(t));
    }
    Ok(Loaded { grasp, torques, opts })
}

fn six(v: &[f64], what: &str) -> Result<Vector6<f64>, InputError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(InputError(format!("{what} must be finite")));
    }
    Ok(Vector6::from_column_slice(v))
}

fn wrench_of(arg: &Option<Vec<f64>>, grasp: &GraspModel) -> Result<Vector6<f64>, InputError> {
    match (arg, &grasp.wrench) {
        (Some(w), _) => six(w, "--wrench"),
        (None, Some(w)) => Ok(*w),
        (None, None) => Err(InputError("no --wrench given and the grasp file has none".into())),
    }
}

/// Orthonormal basis of a named plane in wrench space.
pub fn plane_basis(name: &str) -> Option<(Vector6<f64>, Vector6<f64>)> {
    let e = |k: usize| Vector6::from_fn(|i, _| if i == k { 1.0 } else { 0.0 });
    let (a, b) = match name {
        "xy" => (0, 1),
        "yz" => (1, 2),
        "xz" => (0, 2),
        "mxy" => (3, 4),
        "myz" => (4, 5),
        "mxz" => (3, 5),
        _ => return None,
    };
    Some((e(a), e(b)))
}

fn provenance(out: &mut dyn Write, outcome: &RefinementOutcome) -> io::Result<()> {
    writeln!(out, "rounds: {}", outcome.rounds.len())?;
    match outcome.final_delta() {
        Some(d) => writeln!(out, "final delta (deg): {:.6}", d.to_degrees())?,
        None => writeln!(out, "final delta (deg): -")?,
    }
    writeln!(out, "nodes: {}", outcome.total_nodes())?;
    writeln!(out, "sectors: {}", outcome.rounds.last().map_or(0, |r| r.sectors))
}

fn trace(common: &Common, outcome: &RefinementOutcome, err: &mut dyn Write) -> io::Result<()> {
    if common.trace {
        err.write_all(outcome.trace().as_bytes())?;
    }
    Ok(())
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

fn report_stability(out: &mut dyn Write, report: &StabilityReport) -> io::Result<i32> {
    writeln!(out, "{}", report.verdict)?;
    provenance(out, &report.outcome)?;
    Ok(match report.verdict {
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        _ => EXIT_ANSWERED,
    })
}

fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, InputError> {
    let common = match &cli.command {
        Command::Check { common, .. }
        | Command::MaxWrench { common, .. }
        | Command::OptimalTorques { common, .. }
        | Command::ForceMap { common, .. }
        | Command::Ablate { common, .. } => common,
    };
    let Loaded { grasp, torques, opts } = load(common)?;
    let mut file;
    let out: &mut dyn Write = match &common.output {
        Some(path) => {
            file = File::create(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
            &mut file
        }
        None => out,
    };
    let code = match &cli.command {
        Command::Check { wrench, no_mdp, .. } => {
            let w = wrench_of(wrench, &grasp)?;
            let report = check_stability(&grasp, &torques, &w, !no_mdp, &opts)?;
            trace(common, &report.outcome, err)?;
            report_stability(out, &report)?
        }
        Command::MaxWrench { direction, .. } => {
            let d = six(direction, "--direction")?;
            let report = max_disturbance(&grasp, &torques, &d, &opts)?;
            trace(common, &report.outcome, err)?;
            let code = match report.result {
                Disturbance::Value(s) => {
                    writeln!(out, "s* = {s:.6}")?;
                    EXIT_ANSWERED
                }
                Disturbance::ExceedsCap => {
                    writeln!(out, "s* > {} (exceeds cap)", opts.s_cap)?;
                    EXIT_ANSWERED
                }
                Disturbance::Inconclusive { best_bound } => {
                    match best_bound {
                        Some(b) => writeln!(out, "INCONCLUSIVE (s* <= {b:.6})")?,
                        None => writeln!(out, "INCONCLUSIVE")?,
                    }
                    EXIT_INCONCLUSIVE
                }
            };
            writeln!(out, "direction: {}", fmt_vec(&DVector::from_column_slice(report.direction.as_slice())))?;
            provenance(out, &report.outcome)?;
            code
        }
        Command::OptimalTorques { wrench, .. } => {
            let w = wrench_of(wrench, &grasp)?;
            let report = optimal_torques(&grasp, &w, &opts)?;
            trace(common, &report.outcome, err)?;
            let code = match &report.result {
                TorqueResult::Optimal { torques, max_torque } => {
                    writeln!(out, "tau_c = {}", fmt_vec(torques))?;
                    writeln!(out, "max torque: {max_torque:.6}")?;
                    EXIT_ANSWERED
                }
                TorqueResult::InfeasibleForAll => {
                    writeln!(out, "INFEASIBLE for all commanded torques")?;
                    EXIT_INFEASIBLE_ALL
                }
                TorqueResult::Inconclusive => {
                    writeln!(out, "INCONCLUSIVE")?;
                    EXIT_INCONCLUSIVE
                }
            };
            provenance(out, &report.outcome)?;
            code
        }
        Command::ForceMap {
            plane,
            resolution_deg,
            jobs,
            ..
        } => {
            let (u, v) = plane_basis(plane).ok_or_else(|| InputError(format!("unknown plane {plane:?}")))?;
            if !(*resolution_deg > 0.0 && *resolution_deg <= 360.0) {
                return Err(InputError("--resolution-deg must lie in (0, 360]".into()));
            }
            let opts = AnalysisOptions { jobs: *jobs, ..opts };
            let entries = force_map(&grasp, &torques, &u, &v, resolution_deg.to_radians(), &opts)?;
            let mut csv = csv::Writer::from_writer(&mut *out);
            csv.write_record(["theta_deg", "s_star", "status"])?;
            let mut inconclusive = false;
            for e in &entries {
                let theta = format!("{:.6}", e.theta.to_degrees());
                let (s, status) = match e.result {
                    Disturbance::Value(s) => (format!("{s:.6}"), "ok"),
                    Disturbance::ExceedsCap => (format!("{:.6}", opts.s_cap), "exceeds-cap"),
                    Disturbance::Inconclusive { .. } => {
                        inconclusive = true;
                        (String::new(), "inconclusive")
                    }
                };
                csv.write_record([theta.as_str(), s.as_str(), status])?;
            }
            csv.flush()?;
            if inconclusive {
                EXIT_INCONCLUSIVE
            } else {
                EXIT_ANSWERED
            }
        }
        Command::Ablate { wrench, .. } => {
            let w = wrench_of(wrench, &grasp)?;
            let report = ablation_no_mdp(&grasp, &torques, &w, &opts)?;
            let code = report_stability(out, &report)?;
            if let RefinementStatus::Feasible { solution, .. } = &report.outcome.status {
                for i in 0..solution.num_contacts() {
                    let state = solution.contact(i);
                    if state.slip_norm() > crate::encoding::MOTION_TOL && state.dissipation() < 0.0 {
                        writeln!(out, "contact {i}: friction injects energy (-c_t.d_t = {:.6e})", state.dissipation())?;
                    }
                }
            }
            code
        }
    };
    out.flush()?;
    Ok(code)
}

/// Runs the CLI on `argv` (program name first), returning the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_ANSWERED };
        }
    };
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(InputError(msg)) if msg.is_empty() => EXIT_ANSWERED,
        Err(InputError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
    }
}
