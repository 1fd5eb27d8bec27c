//! Speed profile under lateral and longitudinal acceleration limits.

use crate::scalar::Real;

use super::VehicleLimits;

/// Speed per waypoint.
///
/// Starts from `min(v_max, sqrt(a_lat / |κ|))`, then alternates forward and
/// backward passes enforcing `v_next² ≤ v² + 2 a_lon Δs` until nothing
/// changes. `ds[i]` is the arc length from waypoint `i` to `i + 1`; closed
/// profiles pass one extra entry for the seam and are swept with wrap-around.
pub fn velocity_profile<T: Real>(kappa: &[T], ds: &[T], closed: bool, limits: &VehicleLimits<T>) -> Vec<T> {
    let n = kappa.len();
    let mut v: Vec<T> = kappa
        .iter()
        .map(|&k| {
            let k = k.abs();
            if k > T::zero() {
                limits.v_max.min((limits.a_lat_max / k).sqrt())
            } else {
                limits.v_max
            }
        })
        .collect();
    if n < 2 {
        return v;
    }
    let two_a = T::lit(2.0) * limits.a_lon_max;
    let edges = if closed { n } else { n - 1 };
    // each full sweep is one forward and one backward pass
    for _ in 0..(2 * n + 4) {
        let mut changed = false;
        for e in 0..edges {
            let (i, j) = (e, (e + 1) % n);
            let cap = (v[i] * v[i] + two_a * ds[e]).sqrt();
            if v[j] > cap {
                v[j] = cap;
                changed = true;
            }
        }
        for e in (0..edges).rev() {
            let (i, j) = (e, (e + 1) % n);
            let cap = (v[j] * v[j] + two_a * ds[e]).sqrt();
            if v[i] > cap {
                v[i] = cap;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    v
}

/// Lap (or run) time assuming linear speed change between waypoints.
pub fn estimate_lap_time<T: Real>(v: &[T], ds: &[T], closed: bool) -> T {
    let n = v.len();
    let edges = if closed { n } else { n.saturating_sub(1) };
    (0..edges)
        .map(|e| {
            let mean = (v[e] + v[(e + 1) % n]) * T::lit(0.5);
            ds[e] / mean
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_is_vmax() {
        let lim = VehicleLimits::<f64>::default();
        let v = velocity_profile(&[0.0; 10], &[1.0; 9], false, &lim);
        assert!(v.iter().all(|&x| x == 5.0));
    }

    #[test]
    fn constant_curvature() {
        let lim: VehicleLimits<f64> = VehicleLimits { a_lat_max: 3.2, a_lon_max: 2.0, v_max: 5.0 };
        let v = velocity_profile(&[0.2; 10], &[1.0; 10], true, &lim);
        assert!(v.iter().all(|&x| (x - 4.0).abs() < 1e-12));
    }

    #[test]
    fn seam_constraint_holds() {
        let lim: VehicleLimits<f64> = VehicleLimits { a_lat_max: 3.0, a_lon_max: 0.5, v_max: 8.0 };
        let mut kappa = vec![0.0; 40];
        kappa[39] = 1.0;
        let ds = vec![0.5; 40];
        let v = velocity_profile(&kappa, &ds, true, &lim);
        for e in 0..40 {
            let j = (e + 1) % 40;
            assert!((v[j] * v[j] - v[e] * v[e]).abs() <= 2.0 * lim.a_lon_max * ds[e] + 1e-9);
        }
        // braking into index 39 wraps back through index 0
        assert!(v[0] < 8.0);
    }

    #[test]
    fn lap_time_of_constant_speed() {
        let t: f64 = estimate_lap_time(&[2.0; 4], &[1.0; 4], true);
        assert!((t - 2.0).abs() < 1e-12);
    }
}
