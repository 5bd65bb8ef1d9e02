//! Dynamic cell planning for uncoordinated access.
//!
//! The cell is cut into `N̂` equal-area rings and `N̂` equal-angle sectors.
//! Segment `(ring, sector)` gets ratio index `(ring + sector + rotation) mod N̂`,
//! a cyclic Latin square: every ratio appears once per ring and once per
//! sector. The rotation advances by one every slot so each segment cycles
//! through all ratios.
//!
//! Ring `i` covers distances `(r_{i-1}, r_i]` and sector `s` covers angles
//! `[2πs/N̂, 2π(s+1)/N̂)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outer radii `r_i = sqrt(i/N̂) R_o` of the `N̂` equal-area rings.
pub fn ring_radii(n_hat: usize, r_outer: f64) -> Result<Vec<f64>> {
    if n_hat == 0 {
        return Err(Error::InvalidConfig("the plan needs at least one ring".into()));
    }
    if !(r_outer.is_finite() && r_outer > 0.0) {
        return Err(Error::InvalidConfig(format!("cell radius must be positive, got {r_outer}")));
    }
    let mut radii: Vec<f64> = (1..=n_hat).map(|i| (i as f64 / n_hat as f64).sqrt() * r_outer).collect();
    // pin the boundary exactly
    radii[n_hat - 1] = r_outer;
    Ok(radii)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPosition {
    /// Distance to the base station in meters.
    pub distance: f64,
    /// Angle in radians, `[0, 2π)`.
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub ring: usize,
    pub sector: usize,
    /// Index into [`CellPlan::alphas`].
    pub ratio: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPlan {
    pub n_hat: usize,
    pub r_outer: f64,
    pub ring_radii: Vec<f64>,
    /// Ratios in ascending order; `assignment` indexes into this.
    pub alphas: Vec<f64>,
    /// `assignment[ring][sector]` is a ratio index.
    pub assignment: Vec<Vec<usize>>,
    pub rotation: usize,
}

impl CellPlan {
    pub fn new(n_hat: usize, r_outer: f64, alphas: &[f64], rotation: usize) -> Result<Self> {
        if alphas.len() != n_hat {
            return Err(Error::InvalidConfig(format!("{} ratios given for {n_hat} segments per ring", alphas.len())));
        }
        let ring_radii = ring_radii(n_hat, r_outer)?;
        let mut sorted = alphas.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rotation = rotation % n_hat;
        let assignment = (0..n_hat)
            .map(|ring| (0..n_hat).map(|sector| (ring + sector + rotation) % n_hat).collect())
            .collect();
        Ok(Self { n_hat, r_outer, ring_radii, alphas: sorted, assignment, rotation })
    }

    /// The plan of the next slot.
    pub fn rotated(&self) -> Self {
        self.rotated_by(1)
    }

    pub fn rotated_by(&self, steps: usize) -> Self {
        let n = self.n_hat;
        let rotation = (self.rotation + steps) % n;
        let assignment = (0..n).map(|ring| (0..n).map(|sector| (ring + sector + rotation) % n).collect()).collect();
        Self { rotation, assignment, ..self.clone() }
    }

    pub fn ratio_index(&self, ring: usize, sector: usize) -> usize {
        self.assignment[ring][sector]
    }

    pub fn alpha(&self, ring: usize, sector: usize) -> f64 {
        self.alphas[self.ratio_index(ring, sector)]
    }

    /// Segment containing `pos` and its current ratio.
    pub fn locate(&self, pos: &UserPosition) -> Result<Segment> {
        let (ring, sector) = locate_ring_sector(&self.ring_radii, self.n_hat, pos)?;
        Ok(Segment { ring, sector, ratio: self.ratio_index(ring, sector) })
    }

    /// Segment area, equal for all segments.
    pub fn segment_area(&self) -> f64 {
        std::f64::consts::PI * self.r_outer * self.r_outer / (self.n_hat * self.n_hat) as f64
    }
}

pub fn build_plan(n_hat: usize, r_outer: f64, alphas: &[f64], rotation: usize) -> Result<CellPlan> {
    CellPlan::new(n_hat, r_outer, alphas, rotation)
}

pub fn locate_segment(pos: &UserPosition, plan: &CellPlan) -> Result<Segment> {
    plan.locate(pos)
}

fn locate_ring_sector(radii: &[f64], n_hat: usize, pos: &UserPosition) -> Result<(usize, usize)> {
    let r_outer = radii[radii.len() - 1];
    if !(pos.distance >= 0.0 && pos.distance <= r_outer) {
        return Err(Error::OutOfCell { distance: pos.distance, r_outer });
    }
    if !pos.angle.is_finite() {
        return Err(Error::Domain(format!("angle must be finite, got {}", pos.angle)));
    }
    let ring = radii.partition_point(|&r| r < pos.distance);
    let angle = pos.angle.rem_euclid(TAU);
    let sector = ((angle * n_hat as f64 / TAU).floor() as usize).min(n_hat - 1);
    Ok((ring, sector))
}
