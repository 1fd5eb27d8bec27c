//! Track representation, min-curvature raceline optimization and velocity
//! profile generation.
//!
//! A raceline is parameterized by lateral offsets `alpha_i` along the unit
//! left normals of the centerline knots, `r_i = p_i + alpha_i * n_i`. Positive
//! alpha is left of the direction of travel.

mod optimize;
mod profile;
pub mod shapes;
pub mod spline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localization::LocalPoint;
use crate::scalar::Real;

pub use optimize::{objective, optimize_min_curvature, sum_squared_curvature, OptimizeError, OptimizerOptions};
pub use profile::{estimate_lap_time, velocity_profile};
pub use spline::{signed_curvature, CurvePoint, Spline2, SplineError};

pub const MIN_TRACK_POINTS: usize = 8;
pub const MIN_POINT_SPACING: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("track needs at least {MIN_TRACK_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("points {0} and {1} are closer than {MIN_POINT_SPACING} m")]
    PointsTooClose(usize, usize),
    #[error("point {0}: widths must be positive and exceed the vehicle half width")]
    BadWidth(usize),
    #[error("vehicle half width must be non-negative")]
    BadHalfWidth,
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterlinePoint<T> {
    pub p: LocalPoint<T>,
    pub w_left: T,
    pub w_right: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    points: Vec<CenterlinePoint<T>>,
    closed: bool,
    vehicle_half_width: T,
}

impl<T: Real> Track<T> {
    pub fn new(points: Vec<CenterlinePoint<T>>, closed: bool, vehicle_half_width: T) -> Result<Self, TrackError> {
        if points.len() < MIN_TRACK_POINTS {
            return Err(TrackError::TooFewPoints(points.len()));
        }
        if !(vehicle_half_width >= T::zero()) {
            return Err(TrackError::BadHalfWidth);
        }
        let n = points.len();
        let pairs = if closed { n } else { n - 1 };
        for i in 0..pairs {
            let j = (i + 1) % n;
            if points[i].p.distance(&points[j].p) <= T::lit(MIN_POINT_SPACING) {
                return Err(TrackError::PointsTooClose(i, j));
            }
        }
        for (i, c) in points.iter().enumerate() {
            if !(c.w_left > vehicle_half_width && c.w_right > vehicle_half_width && c.w_left > T::zero() && c.w_right > T::zero()) {
                return Err(TrackError::BadWidth(i));
            }
        }
        Ok(Track { points, closed, vehicle_half_width })
    }

    pub fn points(&self) -> &[CenterlinePoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn vehicle_half_width(&self) -> T {
        self.vehicle_half_width
    }

    pub fn centerline(&self) -> Vec<LocalPoint<T>> {
        self.points.iter().map(|c| c.p).collect()
    }

    pub fn centerline_spline(&self) -> Result<Spline2<T>, SplineError> {
        Spline2::fit(&self.centerline(), self.closed)
    }

    /// Box bounds `(alpha_min, alpha_max)` per point.
    pub fn alpha_bounds(&self) -> Vec<(T, T)> {
        self.points
            .iter()
            .map(|c| (-(c.w_right - self.vehicle_half_width), c.w_left - self.vehicle_half_width))
            .collect()
    }
}

/// Unit left normals of the centerline spline at each knot.
pub fn normals<T: Real>(track: &Track<T>) -> Result<Vec<LocalPoint<T>>, TrackError> {
    let spline = track.centerline_spline()?;
    spline
        .knot_tangents()
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let norm = t.x.hypot(t.y);
            if norm < T::lit(spline::MIN_TANGENT) {
                return Err(SplineError::DegenerateTangent(spline.knot(i).to_f64_lossy()).into());
            }
            Ok(LocalPoint::new(-t.y / norm, t.x / norm))
        })
        .collect()
}

/// Per-point lateral offsets along the centerline normals.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector<T> {
    pub alpha: Vec<T>,
}

impl<T: Real> AlphaVector<T> {
    pub fn zeros(n: usize) -> Self {
        AlphaVector { alpha: vec![T::zero(); n] }
    }

    pub fn within(&self, bounds: &[(T, T)]) -> bool {
        self.alpha.len() == bounds.len() && self.alpha.iter().zip(bounds).all(|(&a, &(lo, hi))| a >= lo && a <= hi)
    }
}

/// `p_i + alpha_i * n_i`
pub fn offset_points<T: Real>(track: &Track<T>, normals: &[LocalPoint<T>], alpha: &[T]) -> Vec<LocalPoint<T>> {
    track
        .points
        .iter()
        .zip(normals)
        .zip(alpha)
        .map(|((c, n), &a)| LocalPoint::new(c.p.x + a * n.x, c.p.y + a * n.y))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleLimits<T> {
    pub a_lat_max: T,
    pub a_lon_max: T,
    pub v_max: T,
}

impl<T: Real> Default for VehicleLimits<T> {
    fn default() -> Self {
        VehicleLimits { a_lat_max: T::lit(3.0), a_lon_max: T::lit(2.0), v_max: T::lit(5.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint<T> {
    pub pos: LocalPoint<T>,
    pub kappa: T,
    pub v: T,
    pub s: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raceline<T> {
    pub waypoints: Vec<Waypoint<T>>,
    pub closed: bool,
    /// Total arc length; for closed racelines this includes the seam.
    pub length: T,
}

impl<T: Real> Raceline<T> {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    /// Arc length from waypoint `i` to its successor (seam included when closed).
    pub fn segment_lengths(&self) -> Vec<T> {
        let n = self.waypoints.len();
        let mut ds: Vec<T> = self.waypoints.windows(2).map(|w| w[1].s - w[0].s).collect();
        if self.closed && n > 0 {
            ds.push(self.length - self.waypoints[n - 1].s);
        }
        ds
    }

    pub fn positions(&self) -> Vec<LocalPoint<T>> {
        self.waypoints.iter().map(|w| w.pos).collect()
    }
}

/// Samples `spline` at uniform arc-length spacing and attaches curvature and
/// the limit-respecting speed profile.
pub fn resample_raceline<T: Real>(spline: &Spline2<T>, spacing: T, limits: &VehicleLimits<T>) -> Result<Raceline<T>, SplineError> {
    assert!(spacing > T::zero(), "spacing must be positive");
    let table = spline.arc_length_table(16);
    let length = table.last().map(|p| p.1).unwrap_or_else(T::zero);
    let closed = spline.is_closed();
    let raw = (length / spacing).round().to_usize().unwrap_or(0);
    let count = if closed { raw.max(4) } else { raw.max(1) + 1 };
    let step = if closed { length / T::from_usize_lossy(count) } else { length / T::from_usize_lossy(count - 1) };
    let mut waypoints = Vec::with_capacity(count);
    for k in 0..count {
        let s = step * T::from_usize_lossy(k);
        let t = spline::param_at_length(spline, &table, s);
        let c = spline.eval(t);
        let kappa = signed_curvature(&c.d1, &c.d2).ok_or(SplineError::DegenerateTangent(t.to_f64_lossy()))?;
        waypoints.push(Waypoint { pos: c.pos, kappa, v: limits.v_max, s });
    }
    let mut raceline = Raceline { waypoints, closed, length };
    let kappa: Vec<T> = raceline.waypoints.iter().map(|w| w.kappa).collect();
    let speeds = velocity_profile(&kappa, &raceline.segment_lengths(), closed, limits);
    for (w, v) in raceline.waypoints.iter_mut().zip(speeds) {
        w.v = v;
    }
    Ok(raceline)
}

/// Fits the offset line for `alpha` and resamples it into a raceline.
pub fn build_raceline<T: Real>(
    track: &Track<T>,
    alpha: &AlphaVector<T>,
    spacing: T,
    limits: &VehicleLimits<T>,
) -> Result<Raceline<T>, TrackError> {
    let n = normals(track)?;
    let pts = offset_points(track, &n, &alpha.alpha);
    let spline = Spline2::fit(&pts, track.closed)?;
    Ok(resample_raceline(&spline, spacing, limits)?)
}
