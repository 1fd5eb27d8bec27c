//! Follow-the-gap over a polar depth scan.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("no gap clears the safety distance")]
    NoGap,
    #[error("depth scan needs at least 2 rays")]
    TooFewRays,
}

/// Scan rays in the standard perception scan: 180° at 0.5°.
pub const SCAN_RAYS: usize = 361;

/// Polar free-distance scan. Angles are uniform over `[-π/2, π/2]`,
/// counter-clockwise from the vehicle heading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthScan<T> {
    pub distances: Vec<T>,
    pub angles: Vec<T>,
    pub max_range: T,
}

impl<T: Real> DepthScan<T> {
    pub fn new(distances: Vec<T>, max_range: T) -> Result<Self, PlanningError> {
        let n = distances.len();
        if n < 2 {
            return Err(PlanningError::TooFewRays);
        }
        Ok(DepthScan { angles: scan_angles(n), distances, max_range })
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// Scan with rays in reverse order (mirrored about the heading).
    pub fn mirrored(&self) -> Self {
        let mut distances = self.distances.clone();
        distances.reverse();
        DepthScan { angles: self.angles.clone(), distances, max_range: self.max_range }
    }
}

/// `a_i = (i − (n−1)/2) · π/(n−1)`, so the center ray is exactly zero and
/// mirrored rays have exactly opposite angles.
pub fn scan_angles<T: Real>(n: usize) -> Vec<T> {
    let step = T::PI() / T::from_usize_lossy(n - 1);
    let two = T::lit(2.0);
    (0..n)
        .map(|i| (two * T::from_usize_lossy(i) - T::from_usize_lossy(n - 1)) / two * step)
        .collect()
}

/// Inclusive index range `[i, j]` of rays all at or beyond the safety distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub i: usize,
    pub j: usize,
    pub width: usize,
}

impl Gap {
    pub fn new(i: usize, j: usize) -> Self {
        Gap { i, j, width: j - i + 1 }
    }

    /// `floor((i + j) / 2)`
    pub fn midpoint(&self) -> usize {
        (self.i + self.j) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeedLaw {
    /// Slow down with steering magnitude.
    Corrected,
    /// `v_min + (δ/δ_max)(v_max − v_min)` taken literally.
    AsWritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtgParams<T> {
    pub epsilon: T,
    pub v_min: T,
    pub v_max: T,
    pub delta_max: T,
    pub law: SpeedLaw,
}

impl<T: Real> Default for FtgParams<T> {
    fn default() -> Self {
        FtgParams { epsilon: T::lit(2.5), v_min: T::lit(2.0), v_max: T::lit(5.0), delta_max: T::lit(1.0), law: SpeedLaw::Corrected }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtgCommand<T> {
    pub steering: T,
    pub speed: T,
    pub chosen_gap: Option<Gap>,
    /// Set when no gap exists; steering and speed are then zero.
    pub safety_stop: bool,
}

/// Maximal runs of consecutive rays with `s_k ≥ epsilon`, ascending.
pub fn find_gaps<T: Real>(distances: &[T], epsilon: T) -> Vec<Gap> {
    let mut gaps = Vec::new();
    let mut start = None;
    for (k, &s) in distances.iter().enumerate() {
        match (s >= epsilon, start) {
            (true, None) => start = Some(k),
            (false, Some(i)) => {
                gaps.push(Gap::new(i, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(i) = start {
        gaps.push(Gap::new(i, distances.len() - 1));
    }
    gaps
}

/// Widest gap; ties go to the midpoint nearest the center ray, then to the
/// lower index.
pub fn select_largest_gap(gaps: &[Gap], rays: usize) -> Result<Gap, PlanningError> {
    let center = rays.saturating_sub(1);
    let off_center = |g: &Gap| (2 * g.midpoint()).abs_diff(center);
    let mut best: Option<Gap> = None;
    for g in gaps {
        best = match best {
            None => Some(*g),
            Some(b) if g.width > b.width || (g.width == b.width && off_center(g) < off_center(&b)) => Some(*g),
            keep => keep,
        };
    }
    best.ok_or(PlanningError::NoGap)
}

/// Angle of the gap midpoint ray, clamped to `±delta_max`.
pub fn gap_steering<T: Real>(gap: &Gap, scan: &DepthScan<T>, delta_max: T) -> T {
    scan.angles[gap.midpoint()].max(-delta_max).min(delta_max)
}

pub fn ftg_speed<T: Real>(delta: T, params: &FtgParams<T>) -> T {
    let span = params.v_max - params.v_min;
    let v = match params.law {
        SpeedLaw::Corrected => params.v_max - delta.abs() / params.delta_max * span,
        SpeedLaw::AsWritten => params.v_min + delta / params.delta_max * span,
    };
    v.max(params.v_min).min(params.v_max)
}

pub fn ftg_step<T: Real>(scan: &DepthScan<T>, params: &FtgParams<T>) -> FtgCommand<T> {
    let gaps = find_gaps(&scan.distances, params.epsilon);
    match select_largest_gap(&gaps, scan.len()) {
        Ok(gap) => {
            let steering = gap_steering(&gap, scan, params.delta_max);
            FtgCommand { steering, speed: ftg_speed(steering, params), chosen_gap: Some(gap), safety_stop: false }
        }
        Err(_) => FtgCommand { steering: T::zero(), speed: T::zero(), chosen_gap: None, safety_stop: true },
    }
}
