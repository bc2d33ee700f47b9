//! Mixed-integer encoding of the quasi-static grasp model.
//!
//! Per contact the program carries the contact force `(c_t1, c_t2, c_n)`,
//! friction weights `beta` and motion weights `alpha` for every cone sector
//! (two of each, one per bounding edge, against unit directions), and rows
//!
//! * `c_t = Σ beta·u` and `d_t = −Σ alpha·u`,
//! * `gap = d_n`, `press = c_n + gap ≥ 0` and, for `eta > 0`, the worst-case
//!   tilted gap `cos(eta) d_n + sin(eta) Σ cos(δ_s/2) alpha`,
//! * `outer: Σ beta / l_s ≤ mu c_n`, `inner: Σ beta − mu c_n`, `msum: Σ alpha`.
//!
//! Complementarity is left to disjunctions: normal `{gap ≤ 0, press = 0, tilted ≤ 0}` or
//! `{gap ≥ 0, c_n = 0}`; friction `{msum = 0}` (stick) or `{inner ≥ 0}` (slide);
//! joints `{q = 0}` (locked) or `{Jᵀc = tau_c}` (moving). An SOS1 group per
//! contact keeps all weights inside a single sector.

use nalgebra::{DMatrix, DVector, Vector6};
use thiserror::Error;

use crate::friction_cone::FrictionConeState;
use crate::grasp_model::{relative_contact_motion, GraspModel};
use crate::robustness::effective_normal_gap_terms;
use crate::solver::lp::Sense;
use crate::solver::program::{BoundChange, Disjunction, MixedIntegerProgram, SosGroup, SosKind};

const INF: f64 = f64::INFINITY;

/// Tangential motion below this is treated as sticking in diagnostics.
pub const MOTION_TOL: f64 = 1e-8;

#[derive(Debug, Error, PartialEq)]
pub enum EncodeError {
    #[error("{0}")]
    Config(String),
    #[error("assignment has {got} entries, program has {expected} variables")]
    AssignmentLength { got: usize, expected: usize },
    #[error("assignment violates the program: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum WrenchMode {
    Fixed(Vector6<f64>),
    /// `w = s · direction` with `s` maximised over `[0, s_cap]`.
    Scaled(Vector6<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TorqueMode {
    Fixed(DVector<f64>),
    Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryConfig {
    pub wrench: WrenchMode,
    pub torques: TorqueMode,
    pub eta: f64,
    pub mdp_enabled: bool,
    pub s_cap: f64,
}

impl QueryConfig {
    pub fn stability(w: Vector6<f64>, torques: DVector<f64>) -> Self {
        QueryConfig {
            wrench: WrenchMode::Fixed(w),
            torques: TorqueMode::Fixed(torques),
            eta: 0.0,
            mdp_enabled: true,
            s_cap: 100.0,
        }
    }

    pub fn validate(&self, grasp: &GraspModel) -> Result<(), EncodeError> {
        if !(self.eta >= 0.0 && self.eta < std::f64::consts::FRAC_PI_2) {
            return Err(EncodeError::Config(format!("eta = {} outside [0, pi/2)", self.eta)));
        }
        if !(self.s_cap > 0.0 && self.s_cap.is_finite()) {
            return Err(EncodeError::Config(format!("s_cap = {} must be positive", self.s_cap)));
        }
        let w = match &self.wrench {
            WrenchMode::Fixed(w) | WrenchMode::Scaled(w) => w,
        };
        if w.iter().any(|v| !v.is_finite()) {
            return Err(EncodeError::Config("non-finite wrench".into()));
        }
        if let TorqueMode::Fixed(t) = &self.torques {
            if t.len() != grasp.num_joints {
                return Err(EncodeError::Config(format!(
                    "{} commanded torques for {} joints",
                    t.len(),
                    grasp.num_joints
                )));
            }
            if t.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(EncodeError::Config("commanded torques must be finite and >= 0".into()));
            }
        }
        if matches!(self.wrench, WrenchMode::Scaled(_)) && self.torques == TorqueMode::Decision {
            return Err(EncodeError::Config(
                "scaled wrench and decision torques cannot be combined".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactLayout {
    pub ct: [usize; 2],
    pub cn: usize,
    pub beta: Vec<[usize; 2]>,
    pub alpha: Option<Vec<[usize; 2]>>,
    pub gap_row: usize,
    pub press_row: usize,
    /// Worst-case tilted gap, present when `eta > 0` and the contact can slide.
    pub robust_row: Option<usize>,
    pub outer_row: usize,
    pub inner_row: Option<usize>,
    pub msum_row: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub r: [usize; 6],
    pub q: Vec<usize>,
    pub tau_c: Vec<usize>,
    pub s: Option<usize>,
    pub t: Option<usize>,
    pub object_rows: [usize; 6],
    pub joint_rows: Vec<usize>,
    pub contacts: Vec<ContactLayout>,
}

#[derive(Debug, Clone)]
pub struct Encoding {
    pub mip: MixedIntegerProgram,
    pub layout: Layout,
    pub config: QueryConfig,
    pub cones: Vec<FrictionConeState>,
}

fn uniform_depth(cone: &FrictionConeState) -> bool {
    let d = cone.sectors()[0].depth;
    cone.sectors().iter().all(|s| s.depth == d)
}

pub fn encode(grasp: &GraspModel, cones: &[FrictionConeState], config: &QueryConfig) -> Result<Encoding, EncodeError> {
    config.validate(grasp)?;
    let m = grasp.num_contacts();
    let l = grasp.num_joints;
    if cones.len() != m {
        return Err(EncodeError::Config(format!("{} cones for {} contacts", cones.len(), m)));
    }
    let g = &grasp.grasp_map;
    let jac = &grasp.jacobian;
    let mdp = config.mdp_enabled;

    let sense = match config.wrench {
        WrenchMode::Scaled(_) => Sense::Maximize,
        WrenchMode::Fixed(_) => Sense::Minimize,
    };
    let mut mip = MixedIntegerProgram::new(sense);
    mip.feasibility_only = sense == Sense::Minimize;

    let r: [usize; 6] = std::array::from_fn(|k| mip.add_var(format!("r[{k}]"), -INF, INF, 0.0));
    let q: Vec<usize> = (0..l).map(|j| mip.add_var(format!("q[{j}]"), 0.0, INF, 0.0)).collect();
    let tau_c: Vec<usize> = (0..l)
        .map(|j| match &config.torques {
            TorqueMode::Fixed(t) => mip.add_var(format!("tau_c[{j}]"), t[j], t[j], 0.0),
            TorqueMode::Decision => mip.add_var(format!("tau_c[{j}]"), 0.0, INF, 0.0),
        })
        .collect();
    let s = match config.wrench {
        WrenchMode::Scaled(_) => Some(mip.add_var("s", 0.0, config.s_cap, 1.0)),
        WrenchMode::Fixed(_) => None,
    };

    let mut contact_vars = Vec::with_capacity(m);
    for (i, cone) in cones.iter().enumerate() {
        let ct = [
            mip.add_var(format!("c[{i}].t1"), -INF, INF, 0.0),
            mip.add_var(format!("c[{i}].t2"), -INF, INF, 0.0),
        ];
        let cn = mip.add_var(format!("c[{i}].n"), 0.0, INF, 0.0);
        let beta: Vec<[usize; 2]> = (0..cone.num_sectors())
            .map(|k| {
                [
                    mip.add_var(format!("beta[{i}][{k}].a"), 0.0, INF, 0.0),
                    mip.add_var(format!("beta[{i}][{k}].b"), 0.0, INF, 0.0),
                ]
            })
            .collect();
        let alpha: Option<Vec<[usize; 2]>> = mdp.then(|| {
            (0..cone.num_sectors())
                .map(|k| {
                    [
                        mip.add_var(format!("alpha[{i}][{k}].a"), 0.0, INF, 0.0),
                        mip.add_var(format!("alpha[{i}][{k}].b"), 0.0, INF, 0.0),
                    ]
                })
                .collect()
        });
        contact_vars.push((ct, cn, beta, alpha));
    }

    // object equilibrium: G c + w = 0
    let object_rows: [usize; 6] = std::array::from_fn(|k| {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (i, (ct, cn, _, _)) in contact_vars.iter().enumerate() {
            coeffs.push((ct[0], g[(k, 3 * i)]));
            coeffs.push((ct[1], g[(k, 3 * i + 1)]));
            coeffs.push((*cn, g[(k, 3 * i + 2)]));
        }
        match (&config.wrench, s) {
            (WrenchMode::Scaled(d), Some(sv)) => {
                coeffs.push((sv, d[k]));
                mip.add_row(format!("object[{k}]"), &coeffs, 0.0, 0.0)
            }
            (WrenchMode::Fixed(w), _) => mip.add_row(format!("object[{k}]"), &coeffs, -w[k], -w[k]),
            _ => unreachable!(),
        }
    });

    // joint torque transmitted by the contacts: tau = Jᵀ c >= tau_c
    let joint_rows: Vec<usize> = (0..l)
        .map(|j| {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (i, (ct, cn, _, _)) in contact_vars.iter().enumerate() {
                coeffs.push((ct[0], jac[(3 * i, j)]));
                coeffs.push((ct[1], jac[(3 * i + 1, j)]));
                coeffs.push((*cn, jac[(3 * i + 2, j)]));
            }
            coeffs.push((tau_c[j], -1.0));
            mip.add_row(format!("joint[{j}]"), &coeffs, 0.0, INF)
        })
        .collect();

    // relative motion d = Gᵀ r − J q, component f of contact i
    let motion = |i: usize, f: usize| -> Vec<(usize, f64)> {
        let col = 3 * i + f;
        let mut coeffs: Vec<(usize, f64)> = (0..6).map(|k| (r[k], g[(k, col)])).collect();
        coeffs.extend((0..l).map(|j| (q[j], -jac[(col, j)])));
        coeffs
    };

    let mut contacts = Vec::with_capacity(m);
    for (i, (cone, (ct, cn, beta, alpha))) in cones.iter().zip(contact_vars).enumerate() {
        let mu = grasp.contacts[i].mu;
        let dirs: Vec<[(f64, f64); 2]> = (0..cone.num_sectors()).map(|k| cone.sector_directions(k)).collect();
        for axis in 0..2 {
            let mut coeffs = vec![(ct[axis], 1.0)];
            for (k, b) in beta.iter().enumerate() {
                let [ua, ub] = dirs[k];
                let (ca, cb) = if axis == 0 { (ua.0, ub.0) } else { (ua.1, ub.1) };
                coeffs.push((b[0], -ca));
                coeffs.push((b[1], -cb));
            }
            mip.add_row(format!("friction[{i}].t{}", axis + 1), &coeffs, 0.0, 0.0);
        }
        if let Some(alpha) = &alpha {
            for axis in 0..2 {
                let mut coeffs = motion(i, axis);
                for (k, a) in alpha.iter().enumerate() {
                    let [ua, ub] = dirs[k];
                    let (ca, cb) = if axis == 0 { (ua.0, ub.0) } else { (ua.1, ub.1) };
                    coeffs.push((a[0], ca));
                    coeffs.push((a[1], cb));
                }
                mip.add_row(format!("motion[{i}].t{}", axis + 1), &coeffs, 0.0, 0.0);
            }
        }

        let gap = motion(i, 2);
        let gap_row = mip.add_row(format!("gap[{i}]"), &gap, -INF, INF);
        let mut press = gap.clone();
        press.push((cn, 1.0));
        let press_row = mip.add_row(format!("press[{i}]"), &press, 0.0, INF);
        let robust_row = match &alpha {
            Some(alpha) if config.eta > 0.0 => {
                let terms = effective_normal_gap_terms(cone, config.eta);
                let mut tilted: Vec<(usize, f64)> = gap.iter().map(|&(v, c)| (v, c * terms.normal)).collect();
                for (k, a) in alpha.iter().enumerate() {
                    tilted.push((a[0], terms.alpha[k]));
                    tilted.push((a[1], terms.alpha[k]));
                }
                Some(mip.add_row(format!("tilted_gap[{i}]"), &tilted, -INF, INF))
            }
            _ => None,
        };

        let mut outer = vec![(cn, -mu)];
        let mut inner = vec![(cn, -mu)];
        for (k, b) in beta.iter().enumerate() {
            let inv = 1.0 / cone.sector_length(k);
            outer.push((b[0], inv));
            outer.push((b[1], inv));
            inner.push((b[0], 1.0));
            inner.push((b[1], 1.0));
        }
        let outer_row = mip.add_row(format!("outer[{i}]"), &outer, -INF, 0.0);
        mip.disjunctions.push(Disjunction {
            label: format!("normal[{i}]"),
            branches: [
                std::iter::once(BoundChange::row(gap_row, -INF, 0.0))
                    .chain([BoundChange::row(press_row, 0.0, 0.0)])
                    .chain(robust_row.map(|r| BoundChange::row(r, -INF, 0.0)))
                    .collect(),
                vec![BoundChange::row(gap_row, 0.0, INF), BoundChange::var(cn, 0.0, 0.0)],
            ],
        });

        let (inner_row, msum_row) = match &alpha {
            Some(alpha) => {
                let inner_row = mip.add_row(format!("inner[{i}]"), &inner, -INF, INF);
                let msum: Vec<(usize, f64)> = alpha.iter().flat_map(|a| [(a[0], 1.0), (a[1], 1.0)]).collect();
                let msum_row = mip.add_row(format!("msum[{i}]"), &msum, 0.0, INF);
                mip.disjunctions.push(Disjunction {
                    label: format!("friction[{i}]"),
                    branches: [
                        vec![BoundChange::row(msum_row, -INF, 0.0)],
                        vec![BoundChange::row(inner_row, 0.0, INF)],
                    ],
                });
                (Some(inner_row), Some(msum_row))
            }
            None => (None, None),
        };

        if alpha.is_some() || !uniform_depth(cone) {
            let slots: Vec<Vec<usize>> = (0..cone.num_sectors())
                .map(|k| {
                    let mut members = beta[k].to_vec();
                    if let Some(a) = &alpha {
                        members.extend_from_slice(&a[k]);
                    }
                    members
                })
                .collect();
            mip.sos_groups.push(SosGroup {
                label: format!("sector[{i}]"),
                kind: SosKind::One,
                slots,
            });
        }

        contacts.push(ContactLayout {
            ct,
            cn,
            beta,
            alpha,
            gap_row,
            press_row,
            robust_row,
            outer_row,
            inner_row,
            msum_row,
        });
    }

    for j in 0..l {
        mip.disjunctions.push(Disjunction {
            label: format!("joint[{j}]"),
            branches: [
                vec![BoundChange::var(q[j], 0.0, 0.0)],
                vec![BoundChange::row(joint_rows[j], -INF, 0.0)],
            ],
        });
    }

    Ok(Encoding {
        mip,
        layout: Layout {
            r,
            q,
            tau_c,
            s,
            t: None,
            object_rows,
            joint_rows,
            contacts,
        },
        config: config.clone(),
        cones: cones.to_vec(),
    })
}

/// Adds `t ≥ tau_c[j]` for every joint and minimises `t`.
pub fn encode_minmax_torque(enc: &mut Encoding) -> Result<(), EncodeError> {
    if enc.config.torques != TorqueMode::Decision {
        return Err(EncodeError::Config("min-max torque needs decision torques".into()));
    }
    if enc.layout.t.is_some() {
        return Err(EncodeError::Config("min-max torque objective already present".into()));
    }
    let mip = &mut enc.mip;
    let t = mip.add_var("t", 0.0, INF, 1.0);
    for (j, &tc) in enc.layout.tau_c.iter().enumerate() {
        mip.add_row(format!("maxtorque[{j}]"), &[(t, 1.0), (tc, -1.0)], 0.0, INF);
    }
    mip.lp.sense = Sense::Minimize;
    mip.feasibility_only = false;
    enc.layout.t = Some(t);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    /// Stacked `(t1, t2, n)` per contact.
    pub contact_forces: DVector<f64>,
    pub object_motion: Vector6<f64>,
    pub joint_motions: DVector<f64>,
    /// Torque transmitted to each joint, `Jᵀ c`.
    pub joint_torques: DVector<f64>,
    pub commanded_torques: DVector<f64>,
    pub wrench: Vector6<f64>,
    pub scale: Option<f64>,
    /// `d = Gᵀ r − J q`.
    pub contact_motion: DVector<f64>,
    /// Per contact, per sector: weights on the two bounding edges.
    pub friction_weights: Vec<Vec<[f64; 2]>>,
    pub motion_weights: Vec<Vec<[f64; 2]>>,
    /// Per contact, per sector: total weight in the sector.
    pub sos_weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub normal_force: f64,
    pub friction: [f64; 2],
    pub gap: f64,
    pub slip: [f64; 2],
}

impl ContactState {
    pub fn friction_norm(&self) -> f64 {
        self.friction[0].hypot(self.friction[1])
    }

    pub fn slip_norm(&self) -> f64 {
        self.slip[0].hypot(self.slip[1])
    }

    /// Energy dissipated by friction, `−c_t · d_t`.
    pub fn dissipation(&self) -> f64 {
        -(self.friction[0] * self.slip[0] + self.friction[1] * self.slip[1])
    }
}

impl EquilibriumSolution {
    pub fn contact(&self, i: usize) -> ContactState {
        let c = &self.contact_forces;
        let d = &self.contact_motion;
        ContactState {
            normal_force: c[3 * i + 2],
            friction: [c[3 * i], c[3 * i + 1]],
            gap: d[3 * i + 2],
            slip: [d[3 * i], d[3 * i + 1]],
        }
    }

    pub fn num_contacts(&self) -> usize {
        self.contact_forces.len() / 3
    }
}

/// Reads the named quantities out of a solver assignment and checks them.
pub fn extract_solution(enc: &Encoding, grasp: &GraspModel, x: &[f64], feas_tol: f64) -> Result<EquilibriumSolution, EncodeError> {
    let lp = &enc.mip.lp;
    if x.len() != lp.num_vars() {
        return Err(EncodeError::AssignmentLength {
            got: x.len(),
            expected: lp.num_vars(),
        });
    }
    let layout = &enc.layout;
    let m = layout.contacts.len();
    let mut c = DVector::zeros(3 * m);
    for (i, cl) in layout.contacts.iter().enumerate() {
        c[3 * i] = x[cl.ct[0]];
        c[3 * i + 1] = x[cl.ct[1]];
        c[3 * i + 2] = x[cl.cn];
    }
    let r = Vector6::from_fn(|k, _| x[layout.r[k]]);
    let q = DVector::from_iterator(layout.q.len(), layout.q.iter().map(|&v| x[v]));
    let tau_c = DVector::from_iterator(layout.tau_c.len(), layout.tau_c.iter().map(|&v| x[v]));
    let scale = layout.s.map(|v| x[v]);
    let wrench = match &enc.config.wrench {
        WrenchMode::Fixed(w) => *w,
        WrenchMode::Scaled(d) => d * scale.unwrap_or(0.0),
    };
    let d = relative_contact_motion(&r, &q, &grasp.grasp_map, &grasp.jacobian)
        .map_err(|e| EncodeError::Inconsistent(e.to_string()))?;
    let tau = grasp.jacobian.transpose() * &c;

    let pair = |v: &[usize; 2]| [x[v[0]], x[v[1]]];
    let friction_weights: Vec<Vec<[f64; 2]>> = layout.contacts.iter().map(|cl| cl.beta.iter().map(pair).collect()).collect();
    let motion_weights: Vec<Vec<[f64; 2]>> = layout
        .contacts
        .iter()
        .map(|cl| cl.alpha.as_ref().map(|a| a.iter().map(pair).collect()).unwrap_or_default())
        .collect();
    let sos_weights = (0..m)
        .map(|i| {
            (0..friction_weights[i].len())
                .map(|k| {
                    let b = friction_weights[i][k];
                    let a = motion_weights[i].get(k).copied().unwrap_or([0.0, 0.0]);
                    b[0] + b[1] + a[0] + a[1]
                })
                .collect()
        })
        .collect();

    let scale_tol = feas_tol * (1.0 + wrench.amax() + c.amax());
    if let Some((j, v)) = q.iter().enumerate().find(|(_, v)| **v < -feas_tol) {
        return Err(EncodeError::Inconsistent(format!("joint motion q[{j}] = {v} is negative")));
    }
    let object = &grasp.grasp_map * &c + DVector::from_column_slice(wrench.as_slice());
    if object.amax() > scale_tol {
        return Err(EncodeError::Inconsistent(format!("object residual {:e}", object.amax())));
    }
    for j in 0..tau.len() {
        if tau[j] < tau_c[j] - scale_tol {
            return Err(EncodeError::Inconsistent(format!(
                "joint {j} transmits {} below its command {}",
                tau[j], tau_c[j]
            )));
        }
    }

    Ok(EquilibriumSolution {
        contact_forces: c,
        object_motion: r,
        joint_motions: q,
        joint_torques: tau,
        commanded_torques: tau_c,
        wrench,
        scale,
        contact_motion: d,
        friction_weights,
        motion_weights,
        sos_weights,
    })
}

/// Residual of the exact contact law at contact `i`, relative to the force scale.
///
/// Zero means the contact satisfies unilateral contact, stays closed under every
/// normal tilt up to `eta` while loaded, and meets the Coulomb bound and maximum
/// dissipation exactly.
pub fn contact_law_violation(sol: &EquilibriumSolution, grasp: &GraspModel, i: usize, eta: f64) -> f64 {
    let st = sol.contact(i);
    let mu = grasp.contacts[i].mu;
    let slip = st.slip_norm();
    let gap = st.gap;
    let scale = 1.0 + st.normal_force.abs() + gap.abs();
    let mut normal = (st.normal_force - (-gap).max(0.0)).abs();
    if st.normal_force > 0.0 {
        normal = normal.max(crate::robustness::worst_case_gap(gap, slip, eta).max(0.0));
    }
    let bound = (st.friction_norm() - mu * st.normal_force).max(0.0);
    let mdp = if slip > MOTION_TOL {
        let target = [-mu * st.normal_force * st.slip[0] / slip, -mu * st.normal_force * st.slip[1] / slip];
        (st.friction[0] - target[0]).hypot(st.friction[1] - target[1])
    } else {
        0.0
    };
    normal.max(bound).max(mdp) / scale
}

/// Joint stiffness check `tau ≥ tau_c`, with equality for moving joints.
pub fn joint_law_violation(sol: &EquilibriumSolution, j: usize) -> f64 {
    let tau = sol.joint_torques[j];
    let tc = sol.commanded_torques[j];
    let q = sol.joint_motions[j];
    let scale = 1.0 + tc.abs();
    let locked = (tc - tau).max(0.0);
    let moving = if q > MOTION_TOL { (tau - tc).abs() } else { 0.0 };
    locked.max(moving).max((-q).max(0.0)) / scale
}

/// Jacobian transpose times forces, exposed for tests that build forces by hand.
pub fn transmitted_torques(jacobian: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
    jacobian.transpose() * c
}
