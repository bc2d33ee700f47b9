mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Vector3, Vector6};
use passive_grasp::encoding::{encode, EquilibriumSolution, QueryConfig};
use passive_grasp::friction_cone::{edge_length, FrictionConeState, Refinement};
use passive_grasp::grasp_model::{
    assemble_grasp_map, load_grasp, relative_contact_motion, Contact, GraspDocument, GraspModel,
};
use passive_grasp::refinement::{analyze, RefinementOptions, RefinementStatus};
use passive_grasp::robustness::tangential_motion_estimate;
use passive_grasp::solver::bnb::{solve_mip, SolveOptions, SolveStatus};
use passive_grasp::solver::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use passive_grasp::solver::program::{BoundChange, BoundTarget, Disjunction, MixedIntegerProgram};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit3() -> impl Strategy<Value = Vector3<f64>> {
    (0.0..2.0 * PI, -1.0f64..1.0).prop_map(|(phi, z)| {
        let r = (1.0 - z * z).sqrt();
        Vector3::new(r * phi.cos(), r * phi.sin(), z)
    })
}

fn contact() -> impl Strategy<Value = Contact> {
    (prop::array::uniform3(-0.2f64..0.2), unit3(), 0.1f64..1.5)
        .prop_map(|(p, n, mu)| Contact::new(Vector3::from(p), n, mu))
}

/// Refines random active sectors `steps` times.
fn refined_cone(q_max: u32, picks: &[f64]) -> FrictionConeState {
    let mut cone = FrictionConeState::init(FRAC_PI_2, q_max).unwrap();
    for &t in picks {
        let k = ((t * cone.num_sectors() as f64) as usize).min(cone.num_sectors() - 1);
        if let Refinement::Refined(next) = cone.refine_sector(k).unwrap() {
            cone = next;
        }
    }
    cone
}

/// Writes the physical quantities of `sol` into an assignment of `enc`.
fn substitute(enc: &passive_grasp::encoding::Encoding, sol: &EquilibriumSolution) -> Vec<f64> {
    let layout = &enc.layout;
    let mut x = vec![0.0; enc.mip.lp.num_vars()];
    for k in 0..6 {
        x[layout.r[k]] = sol.object_motion[k];
    }
    for (j, &v) in layout.q.iter().enumerate() {
        x[v] = sol.joint_motions[j];
    }
    for (j, &v) in layout.tau_c.iter().enumerate() {
        x[v] = sol.commanded_torques[j];
    }
    if let (Some(s), Some(v)) = (layout.s, sol.scale) {
        x[s] = v;
    }
    for (i, (cl, cone)) in layout.contacts.iter().zip(&enc.cones).enumerate() {
        let st = sol.contact(i);
        x[cl.ct[0]] = st.friction[0];
        x[cl.ct[1]] = st.friction[1];
        x[cl.cn] = st.normal_force;
        let mut place = |vars: &[[usize; 2]], v: (f64, f64)| {
            if v.0.hypot(v.1) > 0.0 {
                let k = cone.sector_of_angle(v.1.atan2(v.0));
                let (a, b) = cone.decompose(k, v);
                x[vars[k][0]] = a.max(0.0);
                x[vars[k][1]] = b.max(0.0);
            }
        };
        place(&cl.beta, (st.friction[0], st.friction[1]));
        if let Some(alpha) = &cl.alpha {
            place(alpha, (-st.slip[0], -st.slip[1]));
        }
    }
    x
}

/// Exhaustive optimum over every branch combination of the disjunctions.
fn enumerate_disjunctions(mip: &MixedIntegerProgram) -> Option<f64> {
    let k = mip.disjunctions.len();
    let mut best: Option<f64> = None;
    for mask in 0..(1usize << k) {
        let mut lp = mip.lp.clone();
        for (d, disj) in mip.disjunctions.iter().enumerate() {
            for change in &disj.branches[(mask >> d) & 1] {
                let (lo, hi) = match change.target {
                    BoundTarget::Var(j) => (&mut lp.var_lower[j], &mut lp.var_upper[j]),
                    BoundTarget::Row(i) => (&mut lp.row_lower[i], &mut lp.row_upper[i]),
                };
                *lo = lo.max(change.lower);
                *hi = hi.min(change.upper);
            }
        }
        let sol = solve_lp(&lp);
        if sol.status == LpStatus::Optimal {
            best = Some(best.map_or(sol.objective, |b: f64| b.max(sol.objective)));
        }
    }
    best
}

/// Brute-force LP optimum: every vertex of `{x ≥ 0, A x ≤ b}` in two variables.
fn vertex_maximum(a: &[[f64; 2]], b: &[f64], c: [f64; 2]) -> Option<f64> {
    let mut lines: Vec<([f64; 2], f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    lines.push(([-1.0, 0.0], 0.0));
    lines.push(([0.0, -1.0], 0.0));
    let mut best: Option<f64> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (p, q) = (lines[i], lines[j]);
            let det = p.0[0] * q.0[1] - p.0[1] * q.0[0];
            if det.abs() < 1e-9 {
                continue;
            }
            let x = [(p.1 * q.0[1] - p.0[1] * q.1) / det, (p.0[0] * q.1 - p.1 * q.0[0]) / det];
            if lines.iter().all(|(row, rhs)| row[0] * x[0] + row[1] * x[1] <= rhs + 1e-7) {
                let v = c[0] * x[0] + c[1] * x[1];
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn grasp_map_is_adjoint_of_motion(
        contacts in prop::collection::vec(contact(), 1..5),
        r in prop::array::uniform6(-1.0f64..1.0),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = assemble_grasp_map(&contacts).unwrap();
        let c = DVector::from_fn(g.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        let r = Vector6::from(r);
        let q = DVector::zeros(0);
        let jac = DMatrix::zeros(g.ncols(), 0);
        let d = relative_contact_motion(&r, &q, &g, &jac).unwrap();
        let lhs = c.dot(&d);
        let rhs = (&g * &c).dot(&DVector::from_column_slice(r.as_slice()));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn pure_translation_projects_onto_frames(
        contacts in prop::collection::vec(contact(), 1..5),
        t in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let g = assemble_grasp_map(&contacts).unwrap();
        let t = Vector3::from(t);
        let r = Vector6::new(t.x, t.y, t.z, 0.0, 0.0, 0.0);
        let d = relative_contact_motion(&r, &DVector::zeros(0), &g, &DMatrix::zeros(g.ncols(), 0)).unwrap();
        for (i, c) in contacts.iter().enumerate() {
            for (f, axis) in c.frame().iter().enumerate() {
                prop_assert!((d[3 * i + f] - axis.dot(&t)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn refinement_nests_and_keeps_exact_law(
        q_max in 1u32..6,
        picks in prop::collection::vec(0.0f64..1.0, 0..10),
        last in 0.0f64..1.0,
        samples in prop::collection::vec((0.0..2.0 * PI, 0.0f64..1.2), 64),
    ) {
        let parent = refined_cone(q_max, &picks);
        let k = ((last * parent.num_sectors() as f64) as usize).min(parent.num_sectors() - 1);
        let child = match parent.refine_sector(k).unwrap() {
            Refinement::Refined(c) => c,
            Refinement::AtMaxDepth => return Ok(()),
        };
        for (theta, rho) in samples {
            let v = (rho * theta.cos(), rho * theta.sin());
            if child.stick_contains(v, 0.0) {
                prop_assert!(parent.stick_contains(v, 1e-12));
            }
            if child.slide_contains(v, 0.0) {
                prop_assert!(parent.slide_contains(v, 1e-12));
            }
            // the exact disc and circle stay inside
            let u = (theta.cos(), theta.sin());
            prop_assert!(child.stick_contains(u, 1e-12) && child.slide_contains(u, 1e-12));
        }
    }

    #[test]
    fn edge_lengths_follow_recurrence(q in 0u32..12, gamma_k in 0u32..3) {
        let gamma = FRAC_PI_2 / f64::from(1u32 << gamma_k);
        for p in 1..=q {
            let lp = edge_length(p, gamma, q).unwrap();
            let next = edge_length(p + 1, gamma, q).unwrap();
            prop_assert!((lp - next / (gamma / f64::from(1u32 << p)).cos()).abs() <= 1e-12);
        }
        let finest = edge_length(q + 1, gamma, q).unwrap();
        prop_assert!((finest - 1.0 / (gamma / f64::from(1u32 << (q + 1))).cos()).abs() <= 1e-12);
    }

    #[test]
    fn tangential_estimate_underestimates(delta in 1e-4f64..FRAC_PI_2, frac in 0.0f64..=1.0, mag in 1e-3f64..1e3) {
        let phi = frac * delta;
        let det = delta.sin();
        let a1 = mag * (delta - phi).sin() / det;
        let a2 = mag * phi.sin() / det;
        let est = tangential_motion_estimate(delta, a1, a2);
        prop_assert!(est <= mag * (1.0 + 1e-12));
        prop_assert!(est >= (0.5 * delta).cos() * mag * (1.0 - 1e-12));
    }

    #[test]
    fn document_round_trip(contacts in prop::collection::vec(contact(), 1..5), joints in 0usize..4, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = contacts.len();
        let jac = DMatrix::from_fn(3 * m, joints, |_, _| rng.gen_range(-0.1..0.1));
        let tau = DVector::from_fn(joints, |_, _| rng.gen_range(0.0..0.5));
        let w = Vector6::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let grasp = GraspModel::new(contacts, jac, tau, Some(w)).unwrap();
        let text = serde_json::to_string(&grasp.to_document()).unwrap();
        let doc: GraspDocument = serde_json::from_str(&text).unwrap();
        let back = load_grasp(&doc).unwrap();
        prop_assert_eq!(back.num_joints, grasp.num_joints);
        prop_assert!((&back.grasp_map - &grasp.grasp_map).amax() <= 1e-12);
        prop_assert!((&back.jacobian - &grasp.jacobian).amax() <= 1e-12);
        prop_assert_eq!(back.commanded_torques, grasp.commanded_torques);
        prop_assert_eq!(back.wrench, grasp.wrench);
    }

    #[test]
    fn simplex_matches_vertex_enumeration(
        a in prop::collection::vec(prop::array::uniform2(-1.0f64..2.0), 1..6),
        b in prop::collection::vec(0.0f64..3.0, 6),
        c in prop::array::uniform2(-1.0f64..1.0),
    ) {
        let b = &b[..a.len()];
        let mut lp = LinearProgram::new(Sense::Maximize);
        let x0 = lp.add_var(0.0, f64::INFINITY, c[0]);
        let x1 = lp.add_var(0.0, f64::INFINITY, c[1]);
        for (row, &rhs) in a.iter().zip(b) {
            lp.add_row(&[(x0, row[0]), (x1, row[1])], f64::NEG_INFINITY, rhs);
        }
        let sol = solve_lp(&lp);
        // the origin is feasible; the LP is unbounded iff some ray x ≥ 0 with A x ≤ 0 improves c·x
        let mut ray = lp.clone();
        ray.row_upper.iter_mut().for_each(|u| *u = 0.0);
        ray.var_upper = vec![1.0, 1.0];
        let bounded = solve_lp(&ray).objective <= 1e-9;
        if bounded {
            prop_assert_eq!(sol.status, LpStatus::Optimal);
            let v = vertex_maximum(&a, b, c).unwrap();
            prop_assert!((sol.objective - v).abs() <= 1e-7 * (1.0 + v.abs()));
        } else {
            prop_assert_eq!(sol.status, LpStatus::Unbounded);
        }
    }

    #[test]
    fn branch_and_bound_matches_enumeration(
        n in 2usize..5,
        seed in any::<u64>(),
        k in 1usize..5,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mip = MixedIntegerProgram::new(Sense::Maximize);
        let vars: Vec<usize> = (0..n).map(|j| mip.add_var(format!("x{j}"), 0.0, 10.0, rng.gen_range(-1.0..1.0))).collect();
        for i in 0..n {
            let coeffs: Vec<(usize, f64)> = vars.iter().map(|&v| (v, rng.gen_range(-1.0..1.0))).collect();
            mip.add_row(format!("r{i}"), &coeffs, f64::NEG_INFINITY, rng.gen_range(0.5..5.0));
        }
        for d in 0..k {
            let coeffs: Vec<(usize, f64)> = vars.iter().map(|&v| (v, rng.gen_range(-1.0..1.0))).collect();
            let row = mip.add_row(format!("d{d}"), &coeffs, f64::NEG_INFINITY, f64::INFINITY);
            let cut = rng.gen_range(-1.0..1.0);
            let var = vars[rng.gen_range(0..n)];
            mip.disjunctions.push(Disjunction {
                label: format!("d{d}"),
                branches: [
                    vec![BoundChange::row(row, f64::NEG_INFINITY, cut)],
                    vec![BoundChange::row(row, cut + 0.5, f64::INFINITY), BoundChange::var(var, 0.0, 0.0)],
                ],
            });
        }
        let first = solve_mip(&mip, &SolveOptions::default());
        let second = solve_mip(&mip, &SolveOptions::default());
        prop_assert_eq!(first.status, second.status);
        prop_assert_eq!(&first.assignment, &second.assignment);
        match enumerate_disjunctions(&mip) {
            Some(best) => {
                prop_assert_eq!(first.status, SolveStatus::Optimal);
                let x = first.assignment.as_ref().unwrap();
                prop_assert!(mip.is_satisfied(x, 1e-6));
                prop_assert!((first.objective.unwrap() - best).abs() <= 1e-6 * (1.0 + best.abs()));
            }
            None => prop_assert_eq!(first.status, SolveStatus::Infeasible),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    /// A refined witness substituted into coarser encodings satisfies them.
    #[test]
    fn refined_witness_is_feasible_for_coarser_rounds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_planar(&mut rng);
        let config = QueryConfig::stability(inst.wrench, inst.torques.clone());
        let options = RefinementOptions { q_max: 5, ..RefinementOptions::default() };
        let outcome = analyze(&inst.grasp, &config, &options).unwrap();
        let RefinementStatus::Feasible { solution, .. } = &outcome.status else {
            return Ok(());
        };
        let scale = 1.0 + solution.object_motion.amax() + solution.joint_motions.amax() + solution.contact_forces.amax();
        let m = inst.grasp.num_contacts();
        for depth in 1..=2 {
            let cones = vec![FrictionConeState::uniform(options.gamma, options.q_max, depth).unwrap(); m];
            let enc = encode(&inst.grasp, &cones, &config).unwrap();
            let x = substitute(&enc, solution);
            prop_assert!(enc.mip.is_satisfied(&x, 1e-6 * scale), "depth {}", depth);
        }
    }

    /// Rounds never increase the maximum disturbance.
    #[test]
    fn objective_sequence_is_non_increasing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = common::random_planar(&mut rng);
        let dir = inst.wrench.normalize();
        let config = QueryConfig {
            wrench: passive_grasp::encoding::WrenchMode::Scaled(dir),
            ..QueryConfig::stability(inst.wrench, inst.torques.clone())
        };
        let options = RefinementOptions { q_max: 5, ..RefinementOptions::default() };
        let outcome = analyze(&inst.grasp, &config, &options).unwrap();
        let seq = outcome.objectives();
        for w in seq.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * (1.0 + w[0].abs()), "{:?}", seq);
        }
    }
}
