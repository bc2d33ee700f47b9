//! Brute-force verifier for small grasps.
//!
//! Every combination of contact modes (separated, sticking, sliding along one
//! of a grid of tangent directions) and joint modes (locked, moving) fixes the
//! complementarity branch of the model, leaving a linear feasibility problem.
//! The sticking friction disc is bracketed by an inscribed and a circumscribed
//! polygon, so each verdict is computed twice and reported as boundary when the
//! two disagree or when a ±`band_tol` change of the wrench flips it.
//!
//! For a planar grasp with at most three non-collinear contacts, equilibrium
//! forces every out-of-plane friction component to zero, so sliding along ±t1
//! (`OracleOptions::planar`) is an exact grid.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use nalgebra::{DVector, Vector6};
use thiserror::Error;

use crate::grasp_model::GraspModel;
use crate::solver::lp::{solve_lp, LinearProgram, LpStatus, Sense};

pub const MAX_CONTACTS: usize = 4;
pub const MAX_JOINTS: usize = 4;
/// Upper bound on the number of enumerated mode assignments.
pub const MAX_MODES: u64 = 5_000_000;

const INF: f64 = f64::INFINITY;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle limited to {MAX_CONTACTS} contacts and {MAX_JOINTS} joints, got {contacts} and {joints}")]
    TooLarge { contacts: usize, joints: usize },
    #[error("{0} mode assignments exceed the enumeration limit")]
    TooManyModes(u64),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleVerdict {
    Stable,
    Unstable,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContactMode {
    Separated,
    Stick,
    /// Sliding along the tangent-plane direction at this angle from t1.
    Slide(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointMode {
    Locked,
    Moving,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeAssignment {
    pub contacts: Vec<ContactMode>,
    pub joints: Vec<JointMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscBound {
    Inscribed,
    Circumscribed,
}

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub slide_angles: Vec<f64>,
    pub polygon_sides: usize,
    pub band_tol: f64,
    pub jobs: usize,
}

impl OracleOptions {
    /// Uniform slide grid of the given angular resolution.
    pub fn grid(resolution: f64) -> Self {
        let k = (2.0 * PI / resolution).round().max(1.0) as usize;
        OracleOptions {
            slide_angles: (0..k).map(|i| i as f64 * 2.0 * PI / k as f64).collect(),
            ..Self::planar()
        }
    }

    /// Sliding along ±t1 only.
    pub fn planar() -> Self {
        OracleOptions {
            slide_angles: vec![0.0, PI],
            polygon_sides: 64,
            band_tol: 0.02,
            jobs: 1,
        }
    }
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self::grid(0.1f64.to_radians())
    }
}

/// Linear feasibility problem of one mode assignment.
pub fn mode_program(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    w: &Vector6<f64>,
    modes: &ModeAssignment,
    disc: DiscBound,
    polygon_sides: usize,
) -> LinearProgram {
    let m = grasp.num_contacts();
    let l = grasp.num_joints;
    let g = &grasp.grasp_map;
    let jac = &grasp.jacobian;
    let mut lp = LinearProgram::new(Sense::Minimize);
    let c: Vec<usize> = (0..3 * m).map(|_| lp.add_var(-INF, INF, 0.0)).collect();
    let r: Vec<usize> = (0..6).map(|_| lp.add_var(-INF, INF, 0.0)).collect();
    let q: Vec<usize> = modes
        .joints
        .iter()
        .map(|mode| match mode {
            JointMode::Locked => lp.add_var(0.0, 0.0, 0.0),
            JointMode::Moving => lp.add_var(0.0, INF, 0.0),
        })
        .collect();

    for k in 0..6 {
        let coeffs: Vec<(usize, f64)> = (0..3 * m).map(|col| (c[col], g[(k, col)])).collect();
        lp.add_row(&coeffs, -w[k], -w[k]);
    }
    for j in 0..l {
        let coeffs: Vec<(usize, f64)> = (0..3 * m).map(|col| (c[col], jac[(col, j)])).collect();
        match modes.joints[j] {
            JointMode::Locked => lp.add_row(&coeffs, tau_c[j], INF),
            JointMode::Moving => lp.add_row(&coeffs, tau_c[j], tau_c[j]),
        };
    }
    let motion = |col: usize| -> Vec<(usize, f64)> {
        let mut coeffs: Vec<(usize, f64)> = (0..6).map(|k| (r[k], g[(k, col)])).collect();
        coeffs.extend((0..l).map(|j| (q[j], -jac[(col, j)])));
        coeffs
    };

    let half = PI / polygon_sides as f64;
    let reach = match disc {
        DiscBound::Inscribed => half.cos(),
        DiscBound::Circumscribed => 1.0,
    };
    for (i, mode) in modes.contacts.iter().enumerate() {
        let mu = grasp.contacts[i].mu;
        let (t1, t2, n) = (c[3 * i], c[3 * i + 1], c[3 * i + 2]);
        if let ContactMode::Separated = mode {
            for v in [t1, t2, n] {
                lp.add_row(&[(v, 1.0)], 0.0, 0.0);
            }
            lp.add_row(&motion(3 * i + 2), 0.0, INF);
            continue;
        }
        lp.add_row(&[(n, 1.0)], 0.0, INF);
        let mut press = motion(3 * i + 2);
        press.push((n, 1.0));
        lp.add_row(&press, 0.0, 0.0);
        match *mode {
            ContactMode::Stick => {
                lp.add_row(&motion(3 * i), 0.0, 0.0);
                lp.add_row(&motion(3 * i + 1), 0.0, 0.0);
                for k in 0..polygon_sides {
                    let phi = (2 * k + 1) as f64 * half;
                    lp.add_row(&[(t1, phi.cos()), (t2, phi.sin()), (n, -mu * reach)], -INF, 0.0);
                }
            }
            ContactMode::Slide(theta) => {
                let (s, co) = theta.sin_cos();
                let lambda = lp.add_var(0.0, INF, 0.0);
                lp.add_row(&[(t1, 1.0), (n, mu * co)], 0.0, 0.0);
                lp.add_row(&[(t2, 1.0), (n, mu * s)], 0.0, 0.0);
                let mut d1 = motion(3 * i);
                d1.push((lambda, -co));
                lp.add_row(&d1, 0.0, 0.0);
                let mut d2 = motion(3 * i + 1);
                d2.push((lambda, -s));
                lp.add_row(&d2, 0.0, 0.0);
            }
            ContactMode::Separated => unreachable!(),
        }
    }
    lp
}

fn decode(mut index: u64, contact_choices: &[ContactMode], m: usize, l: usize) -> ModeAssignment {
    let k = contact_choices.len() as u64;
    let contacts = (0..m)
        .map(|_| {
            let c = contact_choices[(index % k) as usize];
            index /= k;
            c
        })
        .collect();
    let joints = (0..l)
        .map(|_| {
            let j = if index.is_multiple_of(2) { JointMode::Locked } else { JointMode::Moving };
            index /= 2;
            j
        })
        .collect();
    ModeAssignment { contacts, joints }
}

fn validate(grasp: &GraspModel, tau_c: &DVector<f64>, opts: &OracleOptions) -> Result<u64, OracleError> {
    let (m, l) = (grasp.num_contacts(), grasp.num_joints);
    if m > MAX_CONTACTS || l > MAX_JOINTS {
        return Err(OracleError::TooLarge { contacts: m, joints: l });
    }
    if tau_c.len() != l {
        return Err(OracleError::Invalid(format!("{} commanded torques for {l} joints", tau_c.len())));
    }
    if opts.slide_angles.is_empty() || opts.polygon_sides < 3 {
        return Err(OracleError::Invalid("empty slide grid or degenerate polygon".into()));
    }
    let per_contact = 2 + opts.slide_angles.len() as u64;
    let total = (0..m)
        .try_fold(1u64 << l, |acc, _| acc.checked_mul(per_contact))
        .filter(|&t| t <= MAX_MODES)
        .ok_or(OracleError::TooManyModes(per_contact.saturating_pow(m as u32).saturating_mul(1 << l)))?;
    Ok(total)
}

/// First mode assignment (in enumeration order) admitting an equilibrium, if any.
pub fn find_equilibrium(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    w: &Vector6<f64>,
    disc: DiscBound,
    opts: &OracleOptions,
) -> Result<Option<ModeAssignment>, OracleError> {
    let total = validate(grasp, tau_c, opts)?;
    let (m, l) = (grasp.num_contacts(), grasp.num_joints);
    let mut choices = vec![ContactMode::Separated, ContactMode::Stick];
    choices.extend(opts.slide_angles.iter().map(|&a| ContactMode::Slide(a)));
    let feasible = |index: u64| {
        let modes = decode(index, &choices, m, l);
        let lp = mode_program(grasp, tau_c, w, &modes, disc, opts.polygon_sides);
        (solve_lp(&lp).status == LpStatus::Optimal).then_some(modes)
    };
    let jobs = opts.jobs.max(1) as u64;
    if jobs == 1 {
        return Ok((0..total).find_map(feasible));
    }
    let stop = AtomicBool::new(false);
    let found: Vec<Option<(u64, ModeAssignment)>> = thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|t| {
                let (feasible, stop) = (&feasible, &stop);
                scope.spawn(move || {
                    let mut index = t;
                    while index < total && !stop.load(Ordering::Relaxed) {
                        if let Some(modes) = feasible(index) {
                            stop.store(true, Ordering::Relaxed);
                            return Some((index, modes));
                        }
                        index += jobs;
                    }
                    None
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("oracle worker panicked")).collect()
    });
    Ok(found.into_iter().flatten().min_by_key(|(i, _)| *i).map(|(_, modes)| modes))
}

fn verdict_at(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    w: &Vector6<f64>,
    opts: &OracleOptions,
) -> Result<OracleVerdict, OracleError> {
    let outer = find_equilibrium(grasp, tau_c, w, DiscBound::Circumscribed, opts)?.is_some();
    if !outer {
        return Ok(OracleVerdict::Unstable);
    }
    let inner = find_equilibrium(grasp, tau_c, w, DiscBound::Inscribed, opts)?.is_some();
    Ok(if inner { OracleVerdict::Stable } else { OracleVerdict::Boundary })
}

/// Exact stability verdict, or `Boundary` within `band_tol` of the frontier.
pub fn brute_force_stability(
    grasp: &GraspModel,
    tau_c: &DVector<f64>,
    w: &Vector6<f64>,
    opts: &OracleOptions,
) -> Result<OracleVerdict, OracleError> {
    let centre = verdict_at(grasp, tau_c, w, opts)?;
    if centre == OracleVerdict::Boundary {
        return Ok(centre);
    }
    for scale in [1.0 - opts.band_tol, 1.0 + opts.band_tol] {
        if verdict_at(grasp, tau_c, &(w * scale), opts)? != centre {
            return Ok(OracleVerdict::Boundary);
        }
    }
    Ok(centre)
}
