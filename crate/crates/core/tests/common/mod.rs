#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3, Vector6};
use passive_grasp::fixtures::{chain_jacobian, Joint};
use passive_grasp::grasp_model::{Contact, GraspModel};
use rand::Rng;

/// Planar grasp instance: contacts in the z = 0 plane, joints about ±z, load in (fx, fy, mz).
#[derive(Debug, Clone)]
pub struct PlanarInstance {
    pub grasp: GraspModel,
    pub torques: DVector<f64>,
    pub wrench: Vector6<f64>,
}

/// Two or three single-joint fingers around an object of radius ~5 cm.
///
/// Contact angles are spread so that three contacts are never collinear.
pub fn random_planar<R: Rng>(rng: &mut R) -> PlanarInstance {
    let m = rng.gen_range(2..=3);
    let offset = rng.gen_range(0.0..2.0 * PI);
    let mut contacts = Vec::with_capacity(m);
    let mut joints = Vec::with_capacity(m);
    for i in 0..m {
        let phi = offset + 2.0 * PI * i as f64 / m as f64 + rng.gen_range(-0.4..0.4);
        let radius = rng.gen_range(0.03..0.06);
        let p = Vector3::new(radius * phi.cos(), radius * phi.sin(), 0.0);
        let tilt = rng.gen_range(-0.5..0.5);
        let inward = -Vector3::new((phi + tilt).cos(), (phi + tilt).sin(), 0.0);
        let mu = rng.gen_range(0.3..1.0);
        contacts.push(Contact::with_tangent(p, inward, Vector3::z().cross(&inward), mu));

        // Joint behind the contact and off its normal line.
        let back = rng.gen_range(0.04..0.1);
        let side = rng.gen_range(0.03..0.08) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let lateral = Vector3::z().cross(&inward);
        let jp = p - inward * back + lateral * side;
        let r = p - jp;
        let axis = if Vector3::z().cross(&r).dot(&inward) > 0.0 { Vector3::z() } else { -Vector3::z() };
        joints.push(Joint::new(jp, axis));
    }
    let drivers: Vec<Vec<usize>> = (0..m).map(|i| vec![i]).collect();
    let jac = chain_jacobian(&contacts, &joints, &drivers);
    let torques = DVector::from_fn(m, |_, _| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..0.2) });
    let grasp = GraspModel::new(contacts, jac, torques.clone(), None).expect("random grasp is valid");
    let mag = rng.gen_range(0.0..5.0);
    let theta = rng.gen_range(0.0..2.0 * PI);
    let wrench = Vector6::new(
        mag * theta.cos(),
        mag * theta.sin(),
        0.0,
        0.0,
        0.0,
        rng.gen_range(-0.05..0.05),
    );
    PlanarInstance { grasp, torques, wrench }
}
