//! Hierarchically refined polyhedral friction cones.
//!
//! Angles live on an integer lattice: the initial sector angle `gamma` spans
//! `2^q_max` ticks, so every sector boundary is an exact dyadic fraction of
//! `gamma`. A sector of depth `p` spans `gamma / 2^(p-1)`.
//!
//! Each sector carries its own edge length `l_p`. Two sectors sharing a
//! boundary direction may therefore scale that direction differently; the
//! encoding gives every sector its own pair of weights for this reason.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

pub const DEFAULT_GAMMA: f64 = PI / 2.0;
pub const DEFAULT_Q_MAX: u32 = 9;
const MAX_Q: u32 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum ConeError {
    #[error("depth {p} outside 1..={max}")]
    DepthOutOfRange { p: u32, max: u32 },
    #[error("gamma = {0} rad must divide 2*pi into at least three sectors")]
    BadGamma(f64),
    #[error("q_max = {0} exceeds the supported maximum")]
    BadQMax(u32),
    #[error("sector index {index} out of range ({count} sectors)")]
    BadSector { index: usize, count: usize },
    #[error("weights have length {got}, expected {expected}")]
    WeightLength { got: usize, expected: usize },
    #[error("nonzero weights do not form an admissible pattern: {0}")]
    Pattern(String),
    #[error("angle {0} rad is not gamma / 2^j")]
    NotDyadic(f64),
}

/// `l_p = ∏_{r=p}^{q_max+1} sec(gamma / 2^r)`.
pub fn edge_length(p: u32, gamma: f64, q_max: u32) -> Result<f64, ConeError> {
    if p < 1 || p > q_max + 1 {
        return Err(ConeError::DepthOutOfRange { p, max: q_max + 1 });
    }
    Ok((p..=q_max + 1).map(|r| 1.0 / (gamma / f64::powi(2.0, r as i32)).cos()).product())
}

/// `p = log2(gamma / delta) + 2`, the depth one level below a sector of angle `delta`.
pub fn target_depth(delta: f64, gamma: f64) -> Result<u32, ConeError> {
    if !(delta > 0.0) || delta > gamma * (1.0 + 1e-12) {
        return Err(ConeError::NotDyadic(delta));
    }
    let j = (gamma / delta).log2();
    let jr = j.round();
    if (j - jr).abs() > 1e-9 || jr > MAX_Q as f64 {
        return Err(ConeError::NotDyadic(delta));
    }
    Ok(jr as u32 + 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sector {
    /// Start angle in ticks.
    pub start: u64,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionEdge {
    pub angle: f64,
    pub length: f64,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveSector {
    pub index: usize,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Refinement {
    Refined(FrictionConeState),
    AtMaxDepth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionConeState {
    gamma: f64,
    q_max: u32,
    base: usize,
    lengths: Vec<f64>,
    sectors: Vec<Sector>,
}

impl FrictionConeState {
    /// Uniform cone of `2*pi / gamma` sectors at depth 1.
    pub fn init(gamma: f64, q_max: u32) -> Result<Self, ConeError> {
        Self::uniform(gamma, q_max, 1)
    }

    /// Uniform cone with every sector at `depth`.
    pub fn uniform(gamma: f64, q_max: u32, depth: u32) -> Result<Self, ConeError> {
        if q_max > MAX_Q {
            return Err(ConeError::BadQMax(q_max));
        }
        if !(gamma > 0.0) {
            return Err(ConeError::BadGamma(gamma));
        }
        let ratio = 2.0 * PI / gamma;
        let base = ratio.round();
        if (ratio - base).abs() > 1e-9 || base < 3.0 {
            return Err(ConeError::BadGamma(gamma));
        }
        if depth < 1 || depth > q_max + 1 {
            return Err(ConeError::DepthOutOfRange { p: depth, max: q_max + 1 });
        }
        let lengths = (1..=q_max + 1)
            .map(|p| edge_length(p, gamma, q_max))
            .collect::<Result<Vec<_>, _>>()?;
        let base = base as usize;
        let width = 1u64 << (q_max + 1 - depth);
        let count = (base as u64) << (depth - 1);
        let sectors = (0..count).map(|k| Sector { start: k * width, depth }).collect();
        Ok(FrictionConeState {
            gamma,
            q_max,
            base,
            lengths,
            sectors,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q_max(&self) -> u32 {
        self.q_max
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    pub fn num_sectors(&self) -> usize {
        self.sectors.len()
    }

    fn total_ticks(&self) -> u64 {
        (self.base as u64) << self.q_max
    }

    fn tick_angle(&self, t: u64) -> f64 {
        self.gamma * t as f64 / f64::powi(2.0, self.q_max as i32)
    }

    fn width(&self, depth: u32) -> u64 {
        1u64 << (self.q_max + 1 - depth)
    }

    fn check(&self, index: usize) -> Result<&Sector, ConeError> {
        self.sectors.get(index).ok_or(ConeError::BadSector {
            index,
            count: self.sectors.len(),
        })
    }

    /// Length `l_p` shared by both edges of a sector at depth `p`.
    pub fn length_at(&self, depth: u32) -> f64 {
        self.lengths[depth as usize - 1]
    }

    pub fn sector_length(&self, index: usize) -> f64 {
        self.length_at(self.sectors[index].depth)
    }

    pub fn sector_angle(&self, index: usize) -> f64 {
        self.gamma / f64::powi(2.0, self.sectors[index].depth as i32 - 1)
    }

    pub fn sector_bounds(&self, index: usize) -> (f64, f64) {
        let s = self.sectors[index];
        (self.tick_angle(s.start), self.tick_angle(s.start + self.width(s.depth)))
    }

    /// Unit directions of the two edges bounding a sector, in the tangent-plane basis.
    pub fn sector_directions(&self, index: usize) -> [(f64, f64); 2] {
        let (a, b) = self.sector_bounds(index);
        [(a.cos(), a.sin()), (b.cos(), b.sin())]
    }

    pub fn finest_angle(&self) -> f64 {
        self.gamma / f64::powi(2.0, self.q_max as i32)
    }

    pub fn is_finest(&self, index: usize) -> bool {
        self.sectors[index].depth == self.q_max + 1
    }

    /// Index of the sector containing direction `theta`; boundaries belong to the sector they start.
    pub fn sector_of_angle(&self, theta: f64) -> usize {
        let turn = theta.rem_euclid(2.0 * PI);
        let t = turn / self.gamma * f64::powi(2.0, self.q_max as i32);
        let t = (t.floor() as u64).min(self.total_ticks() - 1);
        match self.sectors.binary_search_by(|s| s.start.cmp(&t)) {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// Bisects one sector. The cone itself is left untouched.
    pub fn refine_sector(&self, index: usize) -> Result<Refinement, ConeError> {
        let s = *self.check(index)?;
        if s.depth > self.q_max {
            return Ok(Refinement::AtMaxDepth);
        }
        let depth = s.depth + 1;
        let half = self.width(depth);
        let mut sectors = Vec::with_capacity(self.sectors.len() + 1);
        sectors.extend_from_slice(&self.sectors[..index]);
        sectors.push(Sector { start: s.start, depth });
        sectors.push(Sector {
            start: s.start + half,
            depth,
        });
        sectors.extend_from_slice(&self.sectors[index + 1..]);
        Ok(Refinement::Refined(FrictionConeState {
            sectors,
            ..self.clone()
        }))
    }

    /// Edge view: one edge per sector boundary, reporting the deeper neighbouring sector.
    pub fn edges(&self) -> Vec<FrictionEdge> {
        let k = self.sectors.len();
        (0..k)
            .map(|i| {
                let prev = self.sectors[(i + k - 1) % k].depth;
                let depth = prev.max(self.sectors[i].depth);
                FrictionEdge {
                    angle: self.tick_angle(self.sectors[i].start),
                    length: self.length_at(depth),
                    depth,
                }
            })
            .collect()
    }

    /// Active sector from per-sector weights (at most one sector nonzero).
    pub fn active_sector(&self, weights: &[f64], tol: f64) -> Result<Option<ActiveSector>, ConeError> {
        if weights.len() != self.sectors.len() {
            return Err(ConeError::WeightLength {
                got: weights.len(),
                expected: self.sectors.len(),
            });
        }
        let nonzero: Vec<usize> = (0..weights.len()).filter(|&i| weights[i].abs() > tol).collect();
        match nonzero.as_slice() {
            [] => Ok(None),
            [i] => Ok(Some(ActiveSector {
                index: *i,
                delta: self.sector_angle(*i),
            })),
            _ => Err(ConeError::Pattern(format!("sectors {nonzero:?} are all nonzero"))),
        }
    }

    /// Active sector from per-edge weights in cyclic SOS2 form.
    ///
    /// A single nonzero edge touches two sectors; the one with the lower start angle wins.
    pub fn active_sector_from_edges(&self, weights: &[f64], tol: f64) -> Result<Option<ActiveSector>, ConeError> {
        let k = self.sectors.len();
        if weights.len() != k {
            return Err(ConeError::WeightLength { got: weights.len(), expected: k });
        }
        let nonzero: Vec<usize> = (0..k).filter(|&i| weights[i].abs() > tol).collect();
        let index = match nonzero.as_slice() {
            [] => return Ok(None),
            [e] => {
                if *e == 0 {
                    0
                } else {
                    e - 1
                }
            }
            [a, b] if b - a == 1 => *a,
            [a, b] if *a == 0 && *b == k - 1 => k - 1,
            _ => return Err(ConeError::Pattern(format!("edges {nonzero:?} are not adjacent"))),
        };
        Ok(Some(ActiveSector {
            index,
            delta: self.sector_angle(index),
        }))
    }

    /// Weights `(b_a, b_b)` with `b_a u_a + b_b u_b = v` for the sector's unit edge directions.
    pub fn decompose(&self, index: usize, v: (f64, f64)) -> (f64, f64) {
        let [ua, ub] = self.sector_directions(index);
        let det = ua.0 * ub.1 - ua.1 * ub.0;
        ((v.0 * ub.1 - v.1 * ub.0) / det, (ua.0 * v.1 - ua.1 * v.0) / det)
    }

    /// Whether `v` lies in the sticking polygon for unit `mu c_n`.
    pub fn stick_contains(&self, v: (f64, f64), tol: f64) -> bool {
        let i = self.sector_of_angle(v.1.atan2(v.0));
        let (a, b) = self.decompose(i, v);
        (a + b) / self.sector_length(i) <= 1.0 + tol
    }

    /// Whether `v` satisfies both friction-bound inequalities of a sliding contact for unit `mu c_n`.
    pub fn slide_contains(&self, v: (f64, f64), tol: f64) -> bool {
        let i = self.sector_of_angle(v.1.atan2(v.0));
        let (a, b) = self.decompose(i, v);
        a + b >= 1.0 - tol && (a + b) / self.sector_length(i) <= 1.0 + tol
    }

    /// One line per edge: `angle_deg length depth`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for e in self.edges() {
            let _ = writeln!(out, "{:.6} {:.12} {}", e.angle.to_degrees(), e.length, e.depth);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn edge_length_values() {
        assert_relative_eq!(edge_length(1, PI / 2.0, 0).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        let expected = [45.0f64, 22.5, 11.25, 5.625]
            .iter()
            .map(|d| 1.0 / d.to_radians().cos())
            .product::<f64>();
        assert_relative_eq!(edge_length(1, PI / 2.0, 3).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(
            edge_length(4, PI / 2.0, 3).unwrap(),
            1.0 / (PI / 32.0).cos(),
            epsilon = 1e-15
        );
        assert_eq!(
            edge_length(0, PI / 2.0, 3),
            Err(ConeError::DepthOutOfRange { p: 0, max: 4 })
        );
        assert!(edge_length(5, PI / 2.0, 3).is_err());
    }

    #[test]
    fn init_uniform() {
        let c = FrictionConeState::init(PI / 2.0, 2).unwrap();
        let edges = c.edges();
        assert_eq!(edges.len(), 4);
        for (k, e) in edges.iter().enumerate() {
            assert_relative_eq!(e.angle, k as f64 * PI / 2.0, epsilon = 1e-15);
            assert_relative_eq!(e.length, 1.560_722_576_129_026, epsilon = 1e-12);
            assert_eq!(e.depth, 1);
        }
        let c0 = FrictionConeState::init(PI / 2.0, 0).unwrap();
        assert_relative_eq!(c0.edges()[0].length, 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(FrictionConeState::init(1.0, 2), Err(ConeError::BadGamma(1.0)));
        assert_eq!(FrictionConeState::init(PI, 2), Err(ConeError::BadGamma(PI)));
    }

    #[test]
    fn refine_first_quadrant() {
        let c = FrictionConeState::init(PI / 2.0, 2).unwrap();
        let Refinement::Refined(r) = c.refine_sector(0).unwrap() else { panic!() };
        let got: Vec<(f64, u32)> = r.edges().iter().map(|e| (e.angle.to_degrees(), e.depth)).collect();
        let want = [(0.0, 2), (45.0, 2), (90.0, 2), (180.0, 1), (270.0, 1)];
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g.0 - w.0).abs() < 1e-9 && g.1 == w.1, "{got:?}");
        }
        assert_eq!(c.num_sectors(), 4, "refinement must not mutate the original");
    }

    #[test]
    fn refine_at_max_depth_is_noop() {
        let c = FrictionConeState::uniform(PI / 2.0, 2, 3).unwrap();
        assert_eq!(c.refine_sector(0).unwrap(), Refinement::AtMaxDepth);
        assert!(matches!(c.refine_sector(99), Err(ConeError::BadSector { .. })));
    }

    #[test]
    fn target_depths() {
        let g = PI / 2.0;
        assert_eq!(target_depth(g, g).unwrap(), 2);
        assert_eq!(target_depth(g / 2.0, g).unwrap(), 3);
        assert_eq!(target_depth(g / 512.0, g).unwrap(), 11);
        assert!(target_depth(g / 3.0, g).is_err());
        assert!(target_depth(0.0, g).is_err());
    }

    #[test]
    fn active_sector_rules() {
        let c = FrictionConeState::init(PI / 2.0, 2).unwrap();
        assert_eq!(c.active_sector(&[0.0; 4], 1e-9).unwrap(), None);
        let a = c.active_sector(&[0.0, 0.0, 0.3, 0.0], 1e-9).unwrap().unwrap();
        assert_eq!(a.index, 2);
        assert_relative_eq!(a.delta, PI / 2.0);
        assert!(c.active_sector(&[0.1, 0.0, 0.3, 0.0], 1e-9).is_err());

        let e = c.active_sector_from_edges(&[0.4, 0.6, 0.0, 0.0], 1e-9).unwrap().unwrap();
        assert_eq!(e.index, 0);
        assert_eq!(c.active_sector_from_edges(&[0.4, 0.0, 0.0, 0.6], 1e-9).unwrap().unwrap().index, 3);
        assert!(c.active_sector_from_edges(&[0.4, 0.0, 0.6, 0.0], 1e-9).is_err());

        // single edge at 45 degrees after refinement: lower-angle sector wins
        let Refinement::Refined(r) = c.refine_sector(0).unwrap() else { panic!() };
        let mut w = vec![0.0; r.num_sectors()];
        w[1] = 1.0;
        let a = r.active_sector_from_edges(&w, 1e-9).unwrap().unwrap();
        assert_eq!(a.index, 0);
        assert_relative_eq!(a.delta, PI / 4.0);
        assert_eq!(r.active_sector_from_edges(&w, 1e-9), r.active_sector_from_edges(&w, 1e-9));
    }

    #[test]
    fn sector_lookup() {
        let c = FrictionConeState::init(PI / 2.0, 3).unwrap();
        assert_eq!(c.sector_of_angle(0.0), 0);
        assert_eq!(c.sector_of_angle(PI / 2.0 + 1e-9), 1);
        assert_eq!(c.sector_of_angle(-1e-9), 3);
        assert_eq!(c.sector_of_angle(2.0 * PI - 1e-15), 3);
    }

    #[test]
    fn dump_format() {
        let c = FrictionConeState::init(PI / 2.0, 0).unwrap();
        let text = c.dump();
        let first = text.lines().next().unwrap();
        assert_eq!(first, format!("0.000000 {:.12} 1", 2f64.sqrt()));
        assert_eq!(text.lines().count(), 4);
    }
}
