//! Box-constrained minimization of the summed squared knot curvature of the
//! offset line.
//!
//! Every iterate refits the cubic spline through `r_i = p_i + alpha_i n_i`
//! with its own chord-length parameterization. Derivatives treat that
//! parameterization as fixed for the current iterate, which makes the knot
//! derivatives linear in the points; the line search always evaluates the
//! exact objective, so accepted steps strictly decrease it.

use thiserror::Error;

use crate::localization::LocalPoint;
use crate::scalar::Real;

use super::spline::{chord_lengths, knot_slopes, second_derivatives, Spline2};
use super::{normals, offset_points, AlphaVector, Track, TrackError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions<T> {
    /// Weight of the `‖alpha‖²` tie-breaking term.
    pub reg: T,
    pub max_iter: usize,
    /// Stop once the relative objective decrease of an iteration falls below this.
    pub rel_tol: T,
}

impl<T: Real> Default for OptimizerOptions<T> {
    fn default() -> Self {
        OptimizerOptions { reg: T::lit(1e-6), max_iter: 500, rel_tol: T::lit(1e-8) }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError<T: std::fmt::Debug> {
    #[error("optimizer did not converge in {iterations} iterations (objective {objective:?})")]
    NotConverged { iterations: usize, objective: T, best: AlphaVector<T> },
    #[error(transparent)]
    Track(#[from] TrackError),
}

/// `Σ κ_i²` over the knots of the spline through `points`.
pub fn sum_squared_curvature<T: Real>(points: &[LocalPoint<T>], closed: bool) -> Option<T> {
    let spline = Spline2::fit(points, closed).ok()?;
    let k = spline.knot_curvatures().ok()?;
    Some(k.iter().map(|&v| v * v).sum())
}

/// `Σ κ_i² + reg ‖alpha‖²`; infinite when the offset line is degenerate.
pub fn objective<T: Real>(track: &Track<T>, normals: &[LocalPoint<T>], alpha: &[T], reg: T) -> T {
    let pts = offset_points(track, normals, alpha);
    match sum_squared_curvature(&pts, track.is_closed()) {
        Some(k2) => k2 + reg * alpha.iter().map(|&a| a * a).sum::<T>(),
        None => T::infinity(),
    }
}

/// Knot curvatures and their Jacobian with respect to `alpha`, with the
/// chord parameterization frozen at the current iterate. Row-major `n × n`.
fn curvature_jacobian<T: Real>(track: &Track<T>, normals: &[LocalPoint<T>], alpha: &[T]) -> Option<(Vec<T>, Vec<T>)> {
    let closed = track.is_closed();
    let pts = offset_points(track, normals, alpha);
    let n = pts.len();
    let h = chord_lengths(&pts, closed).ok()?;
    let xs: Vec<T> = pts.iter().map(|p| p.x).collect();
    let ys: Vec<T> = pts.iter().map(|p| p.y).collect();
    let mx = second_derivatives(&xs, &h, closed);
    let my = second_derivatives(&ys, &h, closed);
    let dx = knot_slopes(&xs, &mx, &h, closed);
    let dy = knot_slopes(&ys, &my, &h, closed);

    // partials of κ_i with respect to x'_i, y'_i, x''_i, y''_i
    let three = T::lit(3.0);
    let mut kappa = vec![T::zero(); n];
    let mut p_dx = vec![T::zero(); n];
    let mut p_dy = vec![T::zero(); n];
    let mut p_ddx = vec![T::zero(); n];
    let mut p_ddy = vec![T::zero(); n];
    for i in 0..n {
        let s2 = dx[i] * dx[i] + dy[i] * dy[i];
        let s = s2.sqrt();
        if s < T::lit(super::spline::MIN_TANGENT) {
            return None;
        }
        let s3 = s2 * s;
        let s5 = s3 * s2;
        let num = dx[i] * my[i] - dy[i] * mx[i];
        kappa[i] = num / s3;
        p_dx[i] = my[i] / s3 - three * num * dx[i] / s5;
        p_dy[i] = -mx[i] / s3 - three * num * dy[i] / s5;
        p_ddx[i] = -dy[i] / s3;
        p_ddy[i] = dx[i] / s3;
    }

    // The knot-derivative operators are linear and shared by both axes, so
    // the response to a unit impulse at knot k gives column k of each.
    let mut jac = vec![T::zero(); n * n];
    let mut impulse = vec![T::zero(); n];
    for k in 0..n {
        impulse[k] = T::one();
        let m = second_derivatives(&impulse, &h, closed);
        let d = knot_slopes(&impulse, &m, &h, closed);
        impulse[k] = T::zero();
        let (nx, ny) = (normals[k].x, normals[k].y);
        for i in 0..n {
            jac[i * n + k] = (p_dx[i] * nx + p_dy[i] * ny) * d[i] + (p_ddx[i] * nx + p_ddy[i] * ny) * m[i];
        }
    }
    Some((kappa, jac))
}

/// Gradient of the objective with the chord parameterization frozen at `alpha`.
#[cfg(test)]
fn gradient<T: Real>(track: &Track<T>, normals: &[LocalPoint<T>], alpha: &[T], reg: T) -> Option<Vec<T>> {
    let (kappa, jac) = curvature_jacobian(track, normals, alpha)?;
    Some(gradient_from(&kappa, &jac, alpha, reg))
}

fn gradient_from<T: Real>(kappa: &[T], jac: &[T], alpha: &[T], reg: T) -> Vec<T> {
    let n = alpha.len();
    let two = T::lit(2.0);
    (0..n)
        .map(|k| two * ((0..n).map(|i| jac[i * n + k] * kappa[i]).sum::<T>() + reg * alpha[k]))
        .collect()
}

fn project<T: Real>(alpha: &mut [T], bounds: &[(T, T)]) {
    for (a, &(lo, hi)) in alpha.iter_mut().zip(bounds) {
        *a = a.max(lo).min(hi);
    }
}

/// In-place Cholesky solve of `a x = b` for a dense SPD matrix of order `n`.
fn cholesky_solve<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d = d - a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v = v - a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v = v - a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in (i + 1)..n {
            v = v - a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    true
}

/// Search direction: Gauss–Newton on the free variables, scaled gradient on
/// variables held at a bound by a gradient pointing outward.
fn search_direction<T: Real>(jac: &[T], g: &[T], alpha: &[T], bounds: &[(T, T)], reg: T, damping: T) -> Vec<T> {
    let n = alpha.len();
    let two = T::lit(2.0);
    let tiny = T::lit(1e-12);
    let held: Vec<bool> = (0..n)
        .map(|i| (alpha[i] <= bounds[i].0 + tiny && g[i] > T::zero()) || (alpha[i] >= bounds[i].1 - tiny && g[i] < T::zero()))
        .collect();
    let free: Vec<usize> = (0..n).filter(|&i| !held[i]).collect();
    let m = free.len();
    // H = 2 (JᵀJ + reg I)
    let hess = |a: usize, b: usize| -> T {
        let jtj: T = (0..n).map(|i| jac[i * n + a] * jac[i * n + b]).sum();
        two * (jtj + if a == b { reg } else { T::zero() })
    };
    let mut dir = vec![T::zero(); n];
    for i in 0..n {
        if held[i] {
            dir[i] = -g[i] / (hess(i, i) + damping);
        }
    }
    if m > 0 {
        let mut a = vec![T::zero(); m * m];
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate().skip(r) {
                let v = hess(i, j);
                a[r * m + c] = v;
                a[c * m + r] = v;
            }
            a[r * m + r] = a[r * m + r] + damping;
        }
        let mut b: Vec<T> = free.iter().map(|&i| -g[i]).collect();
        if cholesky_solve(&mut a, &mut b, m) {
            for (r, &i) in free.iter().enumerate() {
                dir[i] = b[r];
            }
        } else {
            for &i in &free {
                dir[i] = -g[i];
            }
        }
    }
    dir
}

/// Returns offsets minimizing `Σ κ_i² + reg ‖alpha‖²` inside the track
/// bounds, starting from the centerline.
///
/// Each iteration takes a projected step along a Gauss–Newton-scaled
/// descent direction and backtracks on the exact objective until the Armijo
/// condition holds; when that fails a plain projected gradient step is
/// tried before declaring the point stationary.
pub fn optimize_min_curvature<T: Real>(track: &Track<T>, opts: &OptimizerOptions<T>) -> Result<AlphaVector<T>, OptimizeError<T>> {
    let normals = normals(track)?;
    let bounds = track.alpha_bounds();
    let n = track.len();
    let mut alpha = vec![T::zero(); n];
    project(&mut alpha, &bounds);
    let mut f = objective(track, &normals, &alpha, opts.reg);
    let armijo = T::lit(1e-4);

    for _ in 0..opts.max_iter {
        let Some((kappa, jac)) = curvature_jacobian(track, &normals, &alpha) else {
            return Ok(AlphaVector { alpha });
        };
        let g = gradient_from(&kappa, &jac, &alpha, opts.reg);
        let g_max = g.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if g_max == T::zero() {
            return Ok(AlphaVector { alpha });
        }
        let trace: T = (0..n).map(|k| (0..n).map(|i| jac[i * n + k] * jac[i * n + k]).sum::<T>()).sum();
        let damping = T::lit(1e-9) * trace / T::from_usize_lossy(n) + T::min_positive_value();
        let newton = search_direction(&jac, &g, &alpha, &bounds, opts.reg, damping);
        let gradient_dir: Vec<T> = g.iter().map(|&v| -v * T::lit(0.1) / g_max).collect();

        let mut accepted = None;
        'dirs: for dir in [&newton, &gradient_dir] {
            let mut step = T::one();
            for _ in 0..50 {
                let mut cand: Vec<T> = alpha.iter().zip(dir.iter()).map(|(&a, &d)| a + step * d).collect();
                project(&mut cand, &bounds);
                let decrease: T = alpha.iter().zip(&cand).zip(&g).map(|((&a, &c), &gi)| gi * (a - c)).sum();
                if decrease <= T::zero() {
                    // no predicted descent left along this direction
                    continue 'dirs;
                }
                let fc = objective(track, &normals, &cand, opts.reg);
                if fc <= f - armijo * decrease {
                    accepted = Some((cand, fc));
                    break 'dirs;
                }
                step = step * T::lit(0.5);
            }
        }
        let Some((cand, fc)) = accepted else {
            return Ok(AlphaVector { alpha });
        };
        let rel = (f - fc) / f.abs().max(T::min_positive_value());
        alpha = cand;
        f = fc;
        if rel < opts.rel_tol {
            return Ok(AlphaVector { alpha });
        }
    }
    Err(OptimizeError::NotConverged { iterations: opts.max_iter, objective: f, best: AlphaVector { alpha } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::shapes::{circle, lobed, oval, straight};
    use crate::track::{build_raceline, VehicleLimits};

    #[test]
    fn straight_stays_on_centerline() {
        let t = straight::<f64>(30.0, 16, 2.0, 0.5);
        let a = optimize_min_curvature(&t, &OptimizerOptions::default()).unwrap();
        assert!(a.alpha.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn circle_hugs_outer_edge() {
        // usable half-width 1.5 m
        let t = circle::<f64>(20.0, 64, 2.0, 0.5, true);
        let a = optimize_min_curvature(&t, &OptimizerOptions::default()).unwrap();
        // CCW: left normal points inward, so outward is negative alpha
        for &v in &a.alpha {
            assert!((v + 1.5).abs() < 1e-6, "alpha {v}");
        }
        let line = build_raceline(&t, &a, 1.0, &VehicleLimits::default()).unwrap();
        for w in &line.waypoints {
            assert!((w.kappa - 1.0 / 21.5).abs() <= 0.02 / 21.5);
        }
    }

    #[test]
    fn improves_on_oval_and_lobed() {
        let opts = OptimizerOptions::default();
        for t in [oval::<f64>(30.0, 15.0, 2.0, 3.0, 0.6), lobed::<f64>(25.0, 3.0, 3, 60, 2.5, 0.6)] {
            let nrm = normals(&t).unwrap();
            let base = objective(&t, &nrm, &vec![0.0; t.len()], opts.reg);
            let a = optimize_min_curvature(&t, &opts).unwrap();
            assert!(a.within(&t.alpha_bounds()));
            let best = objective(&t, &nrm, &a.alpha, opts.reg);
            assert!(best < base, "{best} vs {base}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_fixed_parameterization() {
        // With alpha = 0 and a symmetric circle the chord lengths are stationary
        // to first order, so the frozen gradient equals the true one.
        let t = circle::<f64>(10.0, 24, 2.0, 0.5, true);
        let nrm = normals(&t).unwrap();
        let alpha = vec![0.0; t.len()];
        let g = gradient(&t, &nrm, &alpha, 0.0).unwrap();
        let h = 1e-6;
        for k in [0, 5, 11] {
            let mut ap = alpha.clone();
            ap[k] += h;
            let mut am = alpha.clone();
            am[k] -= h;
            let fd = (objective(&t, &nrm, &ap, 0.0) - objective(&t, &nrm, &am, 0.0)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-3 * fd.abs().max(1e-6), "k={k} fd={fd} g={}", g[k]);
        }
    }
}
