//! Passive stability analysis for multi-finger grasps.

pub mod cli;
pub mod encoding;
pub mod fixtures;
pub mod friction_cone;
pub mod grasp_model;
pub mod oracle;
pub mod queries;
pub mod refinement;
pub mod robustness;
pub mod solver;
