//! Worst-case correction for uncertain contact normals.
//!
//! A normal tilted by at most `eta` towards the tangential motion turns the gap
//! into `d̂_n = d_n cos(eta) + ‖d_t‖ sin(eta)` — sliding unloads the contact.
//! The tangential magnitude is replaced by a linear estimate over the motion
//! weights of the active sector: for unit edge directions bounding an angle
//! `delta`, `cos(delta/2)·(a_1 + a_2)` equals `‖d_t‖ cos(phi)` where `phi` is the angle between `d_t` and the sector
//! bisector. It never exceeds `‖d_t‖` and is exact on the bisector.

use crate::friction_cone::FrictionConeState;

/// Per-weight coefficient of the tangential estimate for a sector of angle `delta`.
pub fn sector_estimate_coefficient(delta: f64) -> f64 {
    (0.5 * delta).cos()
}

/// Estimate of `‖a_1 u_1 + a_2 u_2‖` for unit edges `delta` apart.
pub fn tangential_motion_estimate(delta: f64, a1: f64, a2: f64) -> f64 {
    sector_estimate_coefficient(delta) * (a1 + a2)
}

/// Linear form of `d̂_n`: `normal · d_n + Σ_s alpha[s] · (a_s1 + a_s2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapTerms {
    pub normal: f64,
    pub alpha: Vec<f64>,
}

pub fn effective_normal_gap_terms(cone: &FrictionConeState, eta: f64) -> GapTerms {
    let (s, c) = eta.sin_cos();
    GapTerms {
        normal: c,
        alpha: (0..cone.num_sectors())
            .map(|i| s * sector_estimate_coefficient(cone.sector_angle(i)))
            .collect(),
    }
}

/// Exact worst-case gap for a given tangential motion.
pub fn worst_case_gap(d_n: f64, d_t_norm: f64, eta: f64) -> f64 {
    d_n * eta.cos() + d_t_norm * eta.sin()
}
