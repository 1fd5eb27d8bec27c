//! Adaptive pure pursuit with PD steering on the pursuit curvature.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::track::{Raceline, Waypoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("raceline is empty")]
    EmptyRaceline,
    #[error("reached the end of an open raceline")]
    EndOfPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PursuitParams<T> {
    pub l_min: T,
    pub l_max: T,
    pub v_max: T,
    pub kp: T,
    pub kd: T,
    pub delta_max: T,
}

impl<T: Real> Default for PursuitParams<T> {
    fn default() -> Self {
        PursuitParams {
            l_min: T::lit(2.0),
            l_max: T::lit(5.0),
            v_max: T::lit(5.0),
            kp: T::lit(2.0),
            kd: T::lit(1.0),
            delta_max: T::lit(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehiclePose<T> {
    pub x: T,
    pub y: T,
    pub psi: T,
    pub v: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PursuitCommand<T> {
    pub steering: T,
    pub target_speed: T,
    pub lookahead_index: usize,
    /// Pursuit curvature that produced `steering`, 1/m.
    pub gamma: T,
}

/// Per-vehicle controller memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PursuitState<T> {
    pub gamma_prev: Option<T>,
    pub nearest_hint: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookaheadPoint<T> {
    pub index: usize,
    pub waypoint: Waypoint<T>,
    /// Lateral coordinate of the target in the vehicle frame, left positive.
    pub lateral: T,
}

/// `L = L_min + (v / v_max)(L_max − L_min)`, clamped to `[L_min, L_max]`.
pub fn lookahead_distance<T: Real>(v: T, params: &PursuitParams<T>) -> T {
    let l = params.l_min + v / params.v_max * (params.l_max - params.l_min);
    l.max(params.l_min).min(params.l_max)
}

fn dist2<T: Real>(w: &Waypoint<T>, pose: &VehiclePose<T>) -> T {
    let dx = w.pos.x - pose.x;
    let dy = w.pos.y - pose.y;
    dx * dx + dy * dy
}

/// Index of the waypoint nearest to the pose. With a hint, walks downhill
/// from it in both directions; otherwise scans everything.
pub fn nearest_waypoint<T: Real>(raceline: &Raceline<T>, pose: &VehiclePose<T>, hint: Option<usize>) -> usize {
    let n = raceline.len();
    let wp = &raceline.waypoints;
    match hint.filter(|&h| h < n) {
        None => (0..n).min_by(|&a, &b| dist2(&wp[a], pose).partial_cmp(&dist2(&wp[b], pose)).expect("finite")).unwrap_or(0),
        Some(h) => {
            let step = |i: usize, fwd: bool| -> Option<usize> {
                match (fwd, raceline.closed) {
                    (true, true) => Some((i + 1) % n),
                    (false, true) => Some((i + n - 1) % n),
                    (true, false) => (i + 1 < n).then_some(i + 1),
                    (false, false) => i.checked_sub(1),
                }
            };
            let mut best = h;
            let mut best_d = dist2(&wp[h], pose);
            for fwd in [true, false] {
                let mut i = h;
                let mut d = dist2(&wp[h], pose);
                for _ in 0..n {
                    let Some(j) = step(i, fwd) else { break };
                    let dj = dist2(&wp[j], pose);
                    if dj >= d {
                        break;
                    }
                    i = j;
                    d = dj;
                }
                if d < best_d {
                    best = i;
                    best_d = d;
                }
            }
            best
        }
    }
}

/// First waypoint at least `lookahead` of arc length ahead of the waypoint
/// nearest to the pose.
pub fn find_lookahead_point<T: Real>(
    raceline: &Raceline<T>,
    pose: &VehiclePose<T>,
    lookahead: T,
    hint: Option<usize>,
) -> Result<(LookaheadPoint<T>, usize), ControlError> {
    let n = raceline.len();
    if n == 0 {
        return Err(ControlError::EmptyRaceline);
    }
    let nearest = nearest_waypoint(raceline, pose, hint);
    let ds = raceline.segment_lengths();
    let mut idx = nearest;
    let mut travelled = T::zero();
    while travelled < lookahead {
        if !raceline.closed && idx + 1 >= n {
            return Err(ControlError::EndOfPath);
        }
        travelled = travelled + ds[idx];
        idx = (idx + 1) % n;
        if idx == nearest {
            // lookahead longer than a lap
            break;
        }
    }
    let w = raceline.waypoints[idx];
    let dx = w.pos.x - pose.x;
    let dy = w.pos.y - pose.y;
    let lateral = -pose.psi.sin() * dx + pose.psi.cos() * dy;
    Ok((LookaheadPoint { index: idx, waypoint: w, lateral }, nearest))
}

/// Signed pursuit curvature `2y / L²` (magnitude `2|y|/L²`, left positive).
pub fn pursuit_curvature<T: Real>(lateral: T, lookahead: T) -> T {
    T::lit(2.0) * lateral / (lookahead * lookahead)
}

/// `δ = Kp γ + Kd dγ/dt` with a backward difference, clamped to `±δ_max`.
/// Without a previous sample the derivative term is zero.
pub fn pd_steering<T: Real>(gamma: T, gamma_prev: Option<T>, dt: T, params: &PursuitParams<T>) -> T {
    let derivative = match gamma_prev {
        Some(prev) if dt > T::zero() => (gamma - prev) / dt,
        _ => T::zero(),
    };
    let raw = params.kp * gamma + params.kd * derivative;
    raw.max(-params.delta_max).min(params.delta_max)
}

/// One controller tick.
pub fn pursuit_step<T: Real>(
    raceline: &Raceline<T>,
    pose: &VehiclePose<T>,
    state: &mut PursuitState<T>,
    dt: T,
    params: &PursuitParams<T>,
) -> Result<PursuitCommand<T>, ControlError> {
    let lookahead = lookahead_distance(pose.v.max(T::zero()), params);
    let (target, nearest) = find_lookahead_point(raceline, pose, lookahead, state.nearest_hint)?;
    let gamma = pursuit_curvature(target.lateral, lookahead);
    let steering = pd_steering(gamma, state.gamma_prev, dt, params);
    state.gamma_prev = Some(gamma);
    state.nearest_hint = Some(nearest);
    Ok(PursuitCommand { steering, target_speed: target.waypoint.v.max(T::zero()), lookahead_index: target.index, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::LocalPoint;

    fn line(n: usize, spacing: f64, closed: bool) -> Raceline<f64> {
        let waypoints = (0..n)
            .map(|i| Waypoint { pos: LocalPoint::new(i as f64 * spacing, 0.0), kappa: 0.0, v: 4.0, s: i as f64 * spacing })
            .collect();
        Raceline { waypoints, closed, length: n as f64 * spacing }
    }

    fn ring(radius: f64, n: usize) -> Raceline<f64> {
        let length = 2.0 * std::f64::consts::PI * radius;
        let waypoints = (0..n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                Waypoint { pos: LocalPoint::new(radius * a.cos(), radius * a.sin()), kappa: 1.0 / radius, v: 3.0, s: length * i as f64 / n as f64 }
            })
            .collect();
        Raceline { waypoints, closed: true, length }
    }

    #[test]
    fn lookahead_examples() {
        let p = PursuitParams::<f64>::default();
        assert_eq!(lookahead_distance(0.0, &p), 2.0);
        assert_eq!(lookahead_distance(5.0, &p), 5.0);
        assert_eq!(lookahead_distance(2.5, &p), 3.5);
        assert_eq!(lookahead_distance(50.0, &p), 5.0);
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(pursuit_curvature(0.0, 2.0), 0.0);
        assert_eq!(pursuit_curvature(1.0, 2.0), 0.5);
        assert_eq!(pursuit_curvature(-1.0, 2.0), -0.5);
    }

    #[test]
    fn pd_examples() {
        let p = PursuitParams::<f64>::default();
        assert!((pd_steering(0.1, Some(0.1), 0.05, &p) - 0.2).abs() < 1e-15);
        assert_eq!(pd_steering(0.0, Some(0.0), 0.05, &p), 0.0);
        assert_eq!(pd_steering(1.0, Some(0.0), 0.1, &p), 1.0);
        assert_eq!(pd_steering(0.1, None, 0.1, &p), 0.2);
    }

    #[test]
    fn on_straight_line() {
        let r = line(50, 0.5, false);
        let pose = VehiclePose { x: 3.0, y: 0.0, psi: 0.0, v: 2.5 };
        let (la, _) = find_lookahead_point(&r, &pose, 3.5, None).unwrap();
        assert_eq!(la.lateral, 0.0);
        let mut st = PursuitState::default();
        let cmd = pursuit_step(&r, &pose, &mut st, 0.05, &PursuitParams::default()).unwrap();
        assert_eq!(cmd.steering, 0.0);
        assert_eq!(cmd.target_speed, 4.0);
    }

    #[test]
    fn offset_right_gives_positive_lateral() {
        let r = line(50, 0.5, false);
        let pose = VehiclePose { x: 3.0, y: -1.0, psi: 0.0, v: 0.0 };
        let (la, _) = find_lookahead_point(&r, &pose, 2.0, None).unwrap();
        assert!((la.lateral - 1.0).abs() < 1e-12);
    }

    #[test]
    fn open_end_signals() {
        let r = line(10, 0.5, false);
        let pose = VehiclePose { x: 4.0, y: 0.0, psi: 0.0, v: 0.0 };
        assert_eq!(find_lookahead_point(&r, &pose, 2.0, None), Err(ControlError::EndOfPath));
    }

    #[test]
    fn closed_wraps_over_seam() {
        let r = ring(10.0, 100);
        // just before the seam at (10, 0), heading CCW
        let a = -0.05f64;
        let pose = VehiclePose { x: 10.0 * a.cos(), y: 10.0 * a.sin(), psi: a + std::f64::consts::FRAC_PI_2, v: 0.0 };
        let (la, nearest) = find_lookahead_point(&r, &pose, 2.0, None).unwrap();
        assert!(nearest > 90);
        assert!(la.index < 10, "index {}", la.index);
    }

    #[test]
    fn hint_tracks_nearest() {
        let r = ring(10.0, 100);
        let pose = VehiclePose { x: 0.0, y: 10.0, psi: std::f64::consts::PI, v: 0.0 };
        assert_eq!(nearest_waypoint(&r, &pose, Some(20)), 25);
        assert_eq!(nearest_waypoint(&r, &pose, None), 25);
    }

    #[test]
    fn circle_curvature_consistency() {
        let radius = 21.5;
        let r = ring(radius, 400);
        let pose = VehiclePose { x: radius, y: 0.0, psi: std::f64::consts::FRAC_PI_2, v: 5.0 };
        let mut st = PursuitState::default();
        let p = PursuitParams::default();
        let mut cmd = pursuit_step(&r, &pose, &mut st, 0.05, &p).unwrap();
        for _ in 0..5 {
            cmd = pursuit_step(&r, &pose, &mut st, 0.05, &p).unwrap();
        }
        assert!((cmd.gamma - 1.0 / radius).abs() < 0.2 / radius, "gamma {}", cmd.gamma);
    }
}
