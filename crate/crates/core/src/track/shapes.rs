//! Parametric track builders used for fixtures and tests.

use std::f64::consts::PI;

use crate::localization::LocalPoint;
use crate::scalar::Real;

use super::{CenterlinePoint, Track};

fn point<T: Real>(x: f64, y: f64, half_width: f64) -> CenterlinePoint<T> {
    CenterlinePoint { p: LocalPoint::new(T::lit(x), T::lit(y)), w_left: T::lit(half_width), w_right: T::lit(half_width) }
}

/// Open straight along +x from the origin.
pub fn straight<T: Real>(length: f64, n: usize, half_width: f64, vehicle_half_width: f64) -> Track<T> {
    let pts = (0..n).map(|i| point(length * i as f64 / (n - 1) as f64, 0.0, half_width)).collect();
    Track::new(pts, false, T::lit(vehicle_half_width)).expect("valid straight")
}

/// Closed circle centered at the origin starting at `(radius, 0)`.
pub fn circle<T: Real>(radius: f64, n: usize, half_width: f64, vehicle_half_width: f64, ccw: bool) -> Track<T> {
    let sign = if ccw { 1.0 } else { -1.0 };
    let pts = (0..n)
        .map(|i| {
            let a = sign * 2.0 * PI * i as f64 / n as f64;
            point(radius * a.cos(), radius * a.sin(), half_width)
        })
        .collect();
    Track::new(pts, true, T::lit(vehicle_half_width)).expect("valid circle")
}

/// Closed counter-clockwise stadium: two straights of `straight_len` joined by
/// semicircles of `radius`, sampled every `spacing` meters. Starts at the
/// beginning of the bottom straight, heading +x.
pub fn oval<T: Real>(straight_len: f64, radius: f64, spacing: f64, half_width: f64, vehicle_half_width: f64) -> Track<T> {
    let arc = PI * radius;
    let total = 2.0 * straight_len + 2.0 * arc;
    let n = (total / spacing).round() as usize;
    let pts = (0..n)
        .map(|i| {
            let s = total * i as f64 / n as f64;
            let (x, y) = if s < straight_len {
                (s, -radius)
            } else if s < straight_len + arc {
                let a = -PI / 2.0 + (s - straight_len) / radius;
                (straight_len + radius * a.cos(), radius * a.sin())
            } else if s < 2.0 * straight_len + arc {
                (straight_len - (s - straight_len - arc), radius)
            } else {
                let a = PI / 2.0 + (s - 2.0 * straight_len - arc) / radius;
                (radius * a.cos(), radius * a.sin())
            };
            point(x, y, half_width)
        })
        .collect();
    Track::new(pts, true, T::lit(vehicle_half_width)).expect("valid oval")
}

/// Closed counter-clockwise circle with a radial ripple of `lobes` periods.
pub fn lobed<T: Real>(radius: f64, amplitude: f64, lobes: usize, n: usize, half_width: f64, vehicle_half_width: f64) -> Track<T> {
    let pts = (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            let r = radius + amplitude * (lobes as f64 * a).sin();
            point(r * a.cos(), r * a.sin(), half_width)
        })
        .collect();
    Track::new(pts, true, T::lit(vehicle_half_width)).expect("valid lobed track")
}
