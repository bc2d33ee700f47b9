//! Reference grasps used by the tests, the acceptance suite and the shipped fixture files.
//!
//! Joint axes are oriented so that a positive joint rate closes the finger onto
//! the object; a pressing normal force then loads every joint that drives the
//! contact with a positive torque.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::grasp_model::{Contact, GraspModel};

/// Revolute joint at `position` rotating about the unit `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub position: Vector3<f64>,
    pub axis: Vector3<f64>,
}

impl Joint {
    pub fn new(position: Vector3<f64>, axis: Vector3<f64>) -> Self {
        Joint {
            position,
            axis: axis.normalize(),
        }
    }
}

/// Contact-frame Jacobian of a set of revolute chains.
///
/// `drivers[i]` lists the joints whose rotation carries the hand point of contact `i`.
pub fn chain_jacobian(contacts: &[Contact], joints: &[Joint], drivers: &[Vec<usize>]) -> DMatrix<f64> {
    assert_eq!(contacts.len(), drivers.len(), "one driver list per contact");
    let mut jac = DMatrix::zeros(3 * contacts.len(), joints.len());
    for (i, (contact, list)) in contacts.iter().zip(drivers).enumerate() {
        let frame = contact.frame();
        for &j in list {
            let joint = &joints[j];
            let v = joint.axis.cross(&(contact.position - joint.position));
            for (f, axis) in frame.iter().enumerate() {
                jac[(3 * i + f, j)] = axis.dot(&v);
            }
        }
    }
    jac
}

/// In-plane tangent for a contact whose normal lies in the xy plane.
fn planar_tangent(normal: &Vector3<f64>) -> Vector3<f64> {
    Vector3::z().cross(normal).normalize()
}

fn planar_contact(x: f64, y: f64, nx: f64, ny: f64, mu: f64) -> Contact {
    let n = Vector3::new(nx, ny, 0.0).normalize();
    Contact::with_tangent(Vector3::new(x, y, 0.0), n, planar_tangent(&n), mu)
}

/// Distance between each distal contact and its proximal joint, in metres.
pub const CANONICAL_ARM: f64 = 0.09;

const HALF_WIDTH: f64 = 0.05;
/// Distal joints sit on the distal contact normals, so they take friction but cannot squeeze.
const DISTAL_JOINT_SETBACK: f64 = 0.04;
const PROXIMAL_CONTACT_HEIGHT: f64 = 0.03;

fn two_finger(distal_offset: f64, proximal_torque: f64) -> GraspModel {
    let w = HALF_WIDTH;
    let joints = vec![
        Joint::new(Vector3::new(-w, 0.0, 0.0), -Vector3::z()),
        Joint::new(Vector3::new(-w - DISTAL_JOINT_SETBACK, CANONICAL_ARM, 0.0), -Vector3::z()),
        Joint::new(Vector3::new(w, 0.0, 0.0), Vector3::z()),
        Joint::new(Vector3::new(w + DISTAL_JOINT_SETBACK, CANONICAL_ARM, 0.0), Vector3::z()),
    ];
    let mut contacts = vec![
        planar_contact(-w, CANONICAL_ARM, 1.0, 0.0, 1.0),
        planar_contact(-w, PROXIMAL_CONTACT_HEIGHT, 1.0, 1.0, 1.0),
        planar_contact(w, CANONICAL_ARM, -1.0, 0.0, 1.0),
        planar_contact(w, PROXIMAL_CONTACT_HEIGHT, -1.0, 1.0, 1.0),
    ];
    contacts[0].position.z = distal_offset;
    contacts[2].position.z = -distal_offset;
    let drivers = vec![vec![0, 1], vec![0], vec![2, 3], vec![2]];
    let jac = chain_jacobian(&contacts, &joints, &drivers);
    let tau = DVector::from_vec(vec![proximal_torque, 0.0, proximal_torque, 0.0]);
    GraspModel::new(contacts, jac, tau, None).expect("canonical fixture is valid")
}

/// Planar two-finger hand, two links per finger, μ = 1.
///
/// Distal contacts sit `CANONICAL_ARM` above the proximal joints with opposed
/// normals along ±x; proximal contacts have slanted normals that support the
/// object against −y. Joint order: left proximal, left distal, right proximal,
/// right distal. Commanded torques are zero.
pub fn canonical_two_finger() -> GraspModel {
    two_finger(0.0, 0.0)
}

/// Proximal preload used by the canonical spot checks, in N·m.
pub const CANONICAL_PRELOAD: f64 = 0.1;

pub fn canonical_preload() -> DVector<f64> {
    DVector::from_vec(vec![CANONICAL_PRELOAD, 0.0, CANONICAL_PRELOAD, 0.0])
}

/// Distal contact offset of the wedging fixture, in metres.
pub const OFFSET: f64 = 0.01;

/// Canonical hand with the distal contacts displaced ±`OFFSET` along z.
///
/// Rotating the object about y then drives both distal contacts into the
/// fingers at once, which lets a model without maximum dissipation wedge it.
pub fn offset_two_finger() -> GraspModel {
    two_finger(OFFSET, 0.0)
}

pub const THREE_FINGER_MU: f64 = 0.45;
pub const THREE_FINGER_PRELOAD: f64 = 0.1;
/// Lever arm of every finger joint, in metres.
pub const THREE_FINGER_ARM: f64 = 0.1;
/// Depth of the third contact below the opposed pair, in metres.
pub const THREE_FINGER_DEPTH: f64 = 0.05;

/// Single-joint fingers: two opposed along x at the origin plane, a third pushing +z from below.
///
/// Fingers one and two carry `THREE_FINGER_PRELOAD`; the third finger's torque is `tau3`.
pub fn three_finger(tau3: f64) -> GraspModel {
    let a = 0.04;
    let arm = THREE_FINGER_ARM;
    let h = THREE_FINGER_DEPTH;
    let mu = THREE_FINGER_MU;
    let contacts = vec![
        Contact::with_tangent(Vector3::new(-a, 0.0, 0.0), Vector3::x(), Vector3::y(), mu),
        Contact::with_tangent(Vector3::new(a, 0.0, 0.0), -Vector3::x(), Vector3::y(), mu),
        Contact::with_tangent(Vector3::new(0.0, 0.0, -h), Vector3::z(), Vector3::x(), mu),
    ];
    let joints = vec![
        Joint::new(Vector3::new(-a, 0.0, -arm), Vector3::y()),
        Joint::new(Vector3::new(a, 0.0, -arm), -Vector3::y()),
        Joint::new(Vector3::new(-arm, 0.0, -h), -Vector3::y()),
    ];
    let drivers = vec![vec![0], vec![1], vec![2]];
    let jac = chain_jacobian(&contacts, &joints, &drivers);
    let p = THREE_FINGER_PRELOAD;
    GraspModel::new(contacts, jac, DVector::from_vec(vec![p, p, tau3]), None).expect("three-finger fixture is valid")
}

/// Four single-joint fingers around a non-planar object, μ = 0.5, preload 0.2 N·m each.
///
/// Each joint axis is `(p − joint) × n`, so the closing rotation drives the contact along its normal.
pub fn four_contact_spatial() -> GraspModel {
    let mu = 0.5;
    let spec: [([f64; 3], [f64; 3], [f64; 3]); 4] = [
        // contact position, inward normal, joint position
        ([-0.05, 0.0, 0.02], [1.0, 0.0, 0.3], [-0.05, -0.1, 0.02]),
        ([0.05, 0.0, 0.02], [-1.0, 0.0, 0.3], [0.05, -0.1, 0.02]),
        ([0.0, 0.04, -0.04], [0.2, -0.5, 1.0], [0.0, 0.04, -0.12]),
        ([0.01, -0.04, 0.05], [0.0, 0.4, -1.0], [0.01, -0.04, 0.13]),
    ];
    let mut contacts = Vec::new();
    let mut joints = Vec::new();
    for (p, n, jp) in spec {
        let (p, n, jp) = (Vector3::from(p), Vector3::from(n).normalize(), Vector3::from(jp));
        contacts.push(Contact::new(p, n, mu));
        joints.push(Joint::new(jp, (p - jp).cross(&n)));
    }
    let drivers = (0..4).map(|i| vec![i]).collect::<Vec<_>>();
    let jac = chain_jacobian(&contacts, &joints, &drivers);
    GraspModel::new(contacts, jac, DVector::from_element(4, 0.2), None).expect("spatial fixture is valid")
}
