//! Grasp geometry: contact frames, the grasp map and the hand Jacobian.
//!
//! Contact forces are stacked per contact as `(t1, t2, n)` and describe the
//! force the hand applies to the object. The normal `n` is the direction of a
//! positive normal force on the object, so it points from the hand into the
//! object. The Jacobian maps joint rates to the velocity of the hand's contact
//! point, expressed in the same contact frame; a joint rotating in its positive
//! (commanded) sense drives the finger into the object.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const UNIT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraspError {
    #[error("cannot read grasp file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed grasp document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("contact {index}: {message}")]
    Contact { index: usize, message: String },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("joint {index}: commanded torque {value} is negative")]
    NegativeTorque { index: usize, value: f64 },
    #[error("a grasp needs at least one contact")]
    NoContacts,
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub position: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub tangent1: Vector3<f64>,
    pub tangent2: Vector3<f64>,
    pub mu: f64,
}

impl Contact {
    /// Builds a contact with the default tangent frame.
    pub fn new(position: Vector3<f64>, normal: Vector3<f64>, mu: f64) -> Self {
        let tangent1 = default_tangent(&normal);
        let tangent2 = normal.cross(&tangent1);
        Contact {
            position,
            normal,
            tangent1,
            tangent2,
            mu,
        }
    }

    pub fn with_tangent(position: Vector3<f64>, normal: Vector3<f64>, tangent1: Vector3<f64>, mu: f64) -> Self {
        let tangent2 = normal.cross(&tangent1);
        Contact {
            position,
            normal,
            tangent1,
            tangent2,
            mu,
        }
    }

    /// Frame vectors in stacking order `(t1, t2, n)`.
    pub fn frame(&self) -> [Vector3<f64>; 3] {
        [self.tangent1, self.tangent2, self.normal]
    }

    fn validate(&self, index: usize) -> Result<(), GraspError> {
        let err = |message: String| GraspError::Contact { index, message };
        let finite = self.position.iter().chain(self.normal.iter()).chain(self.tangent1.iter()).all(|v| v.is_finite());
        if !finite || !self.mu.is_finite() {
            return Err(err("non-finite entry".into()));
        }
        if (self.normal.norm() - 1.0).abs() > UNIT_TOL {
            return Err(err(format!("normal has norm {}, expected 1", self.normal.norm())));
        }
        if (self.tangent1.norm() - 1.0).abs() > UNIT_TOL {
            return Err(err(format!("tangent1 has norm {}, expected 1", self.tangent1.norm())));
        }
        if self.tangent1.dot(&self.normal).abs() > UNIT_TOL {
            return Err(err("tangent1 is not orthogonal to the normal".into()));
        }
        if self.mu < 0.0 {
            return Err(err(format!("friction coefficient mu = {} is negative", self.mu)));
        }
        Ok(())
    }
}

/// `normalize(n × e_a)` with `e_a` the coordinate axis least aligned with `n`.
pub fn default_tangent(normal: &Vector3<f64>) -> Vector3<f64> {
    let mut axis = 0;
    for k in 1..3 {
        if normal[k].abs() < normal[axis].abs() {
            axis = k;
        }
    }
    let e = Vector3::ith(axis, 1.0);
    normal.cross(&e).normalize()
}

/// Object wrench (force, torque about the origin) per unit force along each frame vector.
pub fn contact_wrench_basis(contact: &Contact) -> Matrix6x3<f64> {
    let mut b = Matrix6x3::zeros();
    for (k, f) in contact.frame().iter().enumerate() {
        let m = contact.position.cross(f);
        for r in 0..3 {
            b[(r, k)] = f[r];
            b[(r + 3, k)] = m[r];
        }
    }
    b
}

pub fn assemble_grasp_map(contacts: &[Contact]) -> Result<DMatrix<f64>, GraspError> {
    if contacts.is_empty() {
        return Err(GraspError::NoContacts);
    }
    let mut g = DMatrix::zeros(6, 3 * contacts.len());
    for (i, c) in contacts.iter().enumerate() {
        g.view_mut((0, 3 * i), (6, 3)).copy_from(&contact_wrench_basis(c));
    }
    Ok(g)
}

/// `d = Gᵀ r − J q`.
pub fn relative_contact_motion(
    r: &Vector6<f64>,
    q: &DVector<f64>,
    g: &DMatrix<f64>,
    j: &DMatrix<f64>,
) -> Result<DVector<f64>, GraspError> {
    if g.nrows() != 6 || j.nrows() != g.ncols() || j.ncols() != q.len() {
        return Err(GraspError::Shape(format!(
            "G is {}x{}, J is {}x{}, q has {} entries",
            g.nrows(),
            g.ncols(),
            j.nrows(),
            j.ncols(),
            q.len()
        )));
    }
    Ok(g.transpose() * r - j * q)
}

/// Object and joint equilibrium residuals `(G c + w, Jᵀ c − τ)`.
pub fn residuals(
    c: &DVector<f64>,
    w: &Vector6<f64>,
    tau: &DVector<f64>,
    g: &DMatrix<f64>,
    j: &DMatrix<f64>,
) -> Result<(Vector6<f64>, DVector<f64>), GraspError> {
    if g.nrows() != 6 || g.ncols() != c.len() || j.nrows() != c.len() || j.ncols() != tau.len() {
        return Err(GraspError::Shape(format!(
            "G is {}x{}, J is {}x{}, c has {}, tau has {}",
            g.nrows(),
            g.ncols(),
            j.nrows(),
            j.ncols(),
            c.len(),
            tau.len()
        )));
    }
    let object = Vector6::from_iterator((g * c).iter().copied()) + w;
    let joint = j.transpose() * c - tau;
    Ok((object, joint))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspModel {
    pub contacts: Vec<Contact>,
    pub num_joints: usize,
    pub grasp_map: DMatrix<f64>,
    pub jacobian: DMatrix<f64>,
    pub commanded_torques: DVector<f64>,
    /// Wrench stored with the grasp, if the document supplied one.
    pub wrench: Option<Vector6<f64>>,
}

impl GraspModel {
    pub fn new(
        contacts: Vec<Contact>,
        jacobian: DMatrix<f64>,
        commanded_torques: DVector<f64>,
        wrench: Option<Vector6<f64>>,
    ) -> Result<Self, GraspError> {
        for (i, c) in contacts.iter().enumerate() {
            c.validate(i)?;
        }
        let grasp_map = assemble_grasp_map(&contacts)?;
        let num_joints = commanded_torques.len();
        if jacobian.nrows() != 3 * contacts.len() || jacobian.ncols() != num_joints {
            return Err(GraspError::Shape(format!(
                "jacobian is {}x{}, expected {}x{}",
                jacobian.nrows(),
                jacobian.ncols(),
                3 * contacts.len(),
                num_joints
            )));
        }
        if jacobian.iter().any(|v| !v.is_finite()) {
            return Err(GraspError::NonFinite("jacobian".into()));
        }
        for (index, &value) in commanded_torques.iter().enumerate() {
            if !value.is_finite() {
                return Err(GraspError::NonFinite("commanded_torques".into()));
            }
            if value < 0.0 {
                return Err(GraspError::NegativeTorque { index, value });
            }
        }
        if let Some(w) = &wrench {
            if w.iter().any(|v| !v.is_finite()) {
                return Err(GraspError::NonFinite("wrench".into()));
            }
        }
        Ok(GraspModel {
            contacts,
            num_joints,
            grasp_map,
            jacobian,
            commanded_torques,
            wrench,
        })
    }

    pub fn num_contacts(&self) -> usize {
        self.contacts.len()
    }

    /// Same geometry with different commanded torques.
    pub fn with_torques(&self, torques: &[f64]) -> Result<Self, GraspError> {
        GraspModel::new(
            self.contacts.clone(),
            self.jacobian.clone(),
            DVector::from_column_slice(torques),
            self.wrench,
        )
    }

    pub fn to_document(&self) -> GraspDocument {
        GraspDocument {
            contacts: self
                .contacts
                .iter()
                .map(|c| ContactDocument {
                    position: c.position.iter().copied().collect(),
                    normal: c.normal.iter().copied().collect(),
                    tangent1: Some(c.tangent1.iter().copied().collect()),
                    mu: c.mu,
                })
                .collect(),
            num_joints: self.num_joints,
            jacobian: (0..self.jacobian.nrows())
                .map(|r| self.jacobian.row(r).iter().copied().collect())
                .collect(),
            commanded_torques: self.commanded_torques.iter().copied().collect(),
            wrench: self.wrench.map(|w| w.iter().copied().collect()),
        }
    }
}

/// On-disk grasp description (JSON).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GraspDocument {
    pub contacts: Vec<ContactDocument>,
    pub num_joints: usize,
    pub jacobian: Vec<Vec<f64>>,
    pub commanded_torques: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrench: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ContactDocument {
    pub position: Vec<f64>,
    pub normal: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tangent1: Option<Vec<f64>>,
    pub mu: f64,
}

fn vec3(v: &[f64], what: &str, index: usize) -> Result<Vector3<f64>, GraspError> {
    if v.len() != 3 {
        return Err(GraspError::Shape(format!(
            "contact {index}: {what} has {} components, expected 3",
            v.len()
        )));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

pub fn load_grasp(doc: &GraspDocument) -> Result<GraspModel, GraspError> {
    let mut contacts = Vec::with_capacity(doc.contacts.len());
    for (i, c) in doc.contacts.iter().enumerate() {
        let position = vec3(&c.position, "position", i)?;
        let normal = vec3(&c.normal, "normal", i)?;
        let contact = match &c.tangent1 {
            Some(t) => Contact::with_tangent(position, normal, vec3(t, "tangent1", i)?, c.mu),
            None => {
                if (normal.norm() - 1.0).abs() > UNIT_TOL {
                    return Err(GraspError::Contact {
                        index: i,
                        message: format!("normal has norm {}, expected 1", normal.norm()),
                    });
                }
                Contact::new(position, normal, c.mu)
            }
        };
        contacts.push(contact);
    }
    if doc.commanded_torques.len() != doc.num_joints {
        return Err(GraspError::Shape(format!(
            "commanded_torques has {} entries, num_joints is {}",
            doc.commanded_torques.len(),
            doc.num_joints
        )));
    }
    let rows = 3 * contacts.len();
    if doc.jacobian.len() != rows || doc.jacobian.iter().any(|r| r.len() != doc.num_joints) {
        return Err(GraspError::Shape(format!(
            "jacobian must be {}x{} (rows t1,t2,n per contact)",
            rows, doc.num_joints
        )));
    }
    let jacobian = DMatrix::from_fn(rows, doc.num_joints, |r, c| doc.jacobian[r][c]);
    let wrench = match &doc.wrench {
        Some(w) if w.len() != 6 => {
            return Err(GraspError::Shape(format!("wrench has {} components, expected 6", w.len())))
        }
        Some(w) => Some(Vector6::from_column_slice(w)),
        None => None,
    };
    GraspModel::new(
        contacts,
        jacobian,
        DVector::from_vec(doc.commanded_torques.clone()),
        wrench,
    )
}

pub fn parse_grasp(text: &str) -> Result<GraspModel, GraspError> {
    let doc: GraspDocument = serde_json::from_str(text)?;
    load_grasp(&doc)
}

pub fn read_grasp_file(path: &Path) -> Result<GraspModel, GraspError> {
    let text = fs::read_to_string(path).map_err(|source| GraspError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_grasp(&text)
}
