//! Planar interpolating cubic splines, one per axis, sharing a chord-length
//! parameterization. Closed curves use periodic end conditions, open curves
//! natural ones. Both are C² at every knot.

use thiserror::Error;

use crate::localization::LocalPoint;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("spline needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("consecutive points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),
    #[error("tangent vanishes at parameter {0}")]
    DegenerateTangent(f64),
}

/// Smallest admissible tangent norm for curvature evaluation.
pub const MIN_TANGENT: f64 = 1e-9;

/// Solves for second derivatives at the knots given segment lengths `h`.
///
/// Closed: `values.len() == h.len()`, indices wrap. Open: `h.len() == values.len() - 1`.
pub(crate) fn second_derivatives<T: Real>(values: &[T], h: &[T], closed: bool) -> Vec<T> {
    let n = values.len();
    let six = T::lit(6.0);
    let two = T::lit(2.0);
    if closed {
        let mut lower = vec![T::zero(); n];
        let mut diag = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        let mut rhs = vec![T::zero(); n];
        for i in 0..n {
            let prev = (i + n - 1) % n;
            let next = (i + 1) % n;
            lower[i] = h[prev];
            diag[i] = two * (h[prev] + h[i]);
            upper[i] = h[i];
            rhs[i] = six * ((values[next] - values[i]) / h[i] - (values[i] - values[prev]) / h[prev]);
        }
        solve_cyclic(&lower, &diag, &upper, &rhs)
    } else {
        let mut m = vec![T::zero(); n];
        if n < 3 {
            return m;
        }
        let k = n - 2;
        let mut lower = vec![T::zero(); k];
        let mut diag = vec![T::zero(); k];
        let mut upper = vec![T::zero(); k];
        let mut rhs = vec![T::zero(); k];
        for r in 0..k {
            let i = r + 1;
            lower[r] = h[i - 1];
            diag[r] = two * (h[i - 1] + h[i]);
            upper[r] = h[i];
            rhs[r] = six * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
        }
        let interior = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        m[1..=k].copy_from_slice(&interior);
        m
    }
}

/// First derivative at every knot from values and second derivatives.
pub(crate) fn knot_slopes<T: Real>(values: &[T], second: &[T], h: &[T], closed: bool) -> Vec<T> {
    let n = values.len();
    let six = T::lit(6.0);
    let two = T::lit(2.0);
    (0..n)
        .map(|i| {
            if closed || i + 1 < n {
                let next = (i + 1) % n;
                (values[next] - values[i]) / h[i] - h[i] * (two * second[i] + second[next]) / six
            } else {
                // right end of an open spline, evaluated from the last segment
                let j = i - 1;
                (values[i] - values[j]) / h[j] + h[j] * (two * second[i] + second[j]) / six
            }
        })
        .collect()
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub(crate) fn solve_tridiagonal<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    if n == 0 {
        return d;
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { T::zero() };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    d
}

/// Cyclic tridiagonal solve via Sherman–Morrison. `lower[0]` couples row 0
/// to column n-1 and `upper[n-1]` couples row n-1 to column 0.
pub(crate) fn solve_cyclic<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Vec<T> {
    let n = diag.len();
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut b = diag.to_vec();
    b[0] = diag[0] - gamma;
    b[n - 1] = diag[n - 1] - alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &b, upper, rhs);
    let mut u = vec![T::zero(); n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &b, upper, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (T::one() + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(&xi, &zi)| xi - fact * zi).collect()
}

/// Chord lengths between consecutive points (including the closing segment
/// when `closed`).
pub(crate) fn chord_lengths<T: Real>(points: &[LocalPoint<T>], closed: bool) -> Result<Vec<T>, SplineError> {
    let n = points.len();
    let segs = if closed { n } else { n - 1 };
    (0..segs)
        .map(|i| {
            let j = (i + 1) % n;
            let h = points[i].distance(&points[j]);
            if h <= T::lit(1e-12) {
                Err(SplineError::DuplicatePoints(i, j))
            } else {
                Ok(h)
            }
        })
        .collect()
}

/// Value and two derivatives of one axis at local coordinate `u ∈ [0, h]` of a segment.
#[inline]
fn segment_eval<T: Real>(y0: T, y1: T, m0: T, m1: T, h: T, u: T) -> (T, T, T) {
    let six = T::lit(6.0);
    let two = T::lit(2.0);
    let a = h - u;
    let b = u;
    let value = m0 * a * a * a / (six * h) + m1 * b * b * b / (six * h) + (y0 / h - m0 * h / six) * a + (y1 / h - m1 * h / six) * b;
    let d1 = -m0 * a * a / (two * h) + m1 * b * b / (two * h) - (y0 / h - m0 * h / six) + (y1 / h - m1 * h / six);
    let d2 = m0 * a / h + m1 * b / h;
    (value, d1, d2)
}

/// Position, first and second derivative of a planar curve at one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint<T> {
    pub pos: LocalPoint<T>,
    pub d1: LocalPoint<T>,
    pub d2: LocalPoint<T>,
}

/// Signed curvature `(x'y'' − y'x'') / (x'² + y'²)^{3/2}`.
pub fn signed_curvature<T: Real>(d1: &LocalPoint<T>, d2: &LocalPoint<T>) -> Option<T> {
    let speed2 = d1.x * d1.x + d1.y * d1.y;
    if speed2.sqrt() < T::lit(MIN_TANGENT) {
        return None;
    }
    Some((d1.x * d2.y - d1.y * d2.x) / (speed2 * speed2.sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spline2<T> {
    points: Vec<LocalPoint<T>>,
    /// Knot parameters; for closed splines one extra entry holds the period.
    knots: Vec<T>,
    h: Vec<T>,
    mx: Vec<T>,
    my: Vec<T>,
    closed: bool,
}

impl<T: Real> Spline2<T> {
    pub fn fit(points: &[LocalPoint<T>], closed: bool) -> Result<Self, SplineError> {
        if points.len() < 4 {
            return Err(SplineError::TooFewPoints(points.len()));
        }
        let h = chord_lengths(points, closed)?;
        let xs: Vec<T> = points.iter().map(|p| p.x).collect();
        let ys: Vec<T> = points.iter().map(|p| p.y).collect();
        let mx = second_derivatives(&xs, &h, closed);
        let my = second_derivatives(&ys, &h, closed);
        let mut knots = Vec::with_capacity(h.len() + 1);
        let mut t = T::zero();
        knots.push(t);
        for &hi in &h {
            t = t + hi;
            knots.push(t);
        }
        Ok(Spline2 { points: points.to_vec(), knots, h, mx, my, closed })
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn points(&self) -> &[LocalPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Parameter of knot `i`.
    pub fn knot(&self, i: usize) -> T {
        self.knots[i]
    }

    pub fn segment_lengths(&self) -> &[T] {
        &self.h
    }

    pub fn segment_count(&self) -> usize {
        self.h.len()
    }

    /// Parameter domain `[0, end]`; the period for closed splines.
    pub fn domain_end(&self) -> T {
        *self.knots.last().expect("non-empty knots")
    }

    fn locate(&self, t: T) -> (usize, T) {
        let end = self.domain_end();
        let t = if self.closed {
            let r = t % end;
            if r < T::zero() {
                r + end
            } else {
                r
            }
        } else {
            t.max(T::zero()).min(end)
        };
        let segs = self.h.len();
        // first knot strictly greater than t
        let idx = self.knots.partition_point(|&k| k <= t);
        let seg = idx.saturating_sub(1).min(segs - 1);
        (seg, t - self.knots[seg])
    }

    pub fn eval(&self, t: T) -> CurvePoint<T> {
        let (seg, u) = self.locate(t);
        let n = self.points.len();
        let next = (seg + 1) % n;
        let h = self.h[seg];
        let (x, dx, ddx) = segment_eval(self.points[seg].x, self.points[next].x, self.mx[seg], self.mx[next], h, u);
        let (y, dy, ddy) = segment_eval(self.points[seg].y, self.points[next].y, self.my[seg], self.my[next], h, u);
        CurvePoint { pos: LocalPoint::new(x, y), d1: LocalPoint::new(dx, dy), d2: LocalPoint::new(ddx, ddy) }
    }

    pub fn position(&self, t: T) -> LocalPoint<T> {
        self.eval(t).pos
    }

    pub fn curvature_at(&self, t: T) -> Result<T, SplineError> {
        let c = self.eval(t);
        signed_curvature(&c.d1, &c.d2).ok_or(SplineError::DegenerateTangent(t.to_f64_lossy()))
    }

    /// First derivatives at every knot.
    pub fn knot_tangents(&self) -> Vec<LocalPoint<T>> {
        let xs: Vec<T> = self.points.iter().map(|p| p.x).collect();
        let ys: Vec<T> = self.points.iter().map(|p| p.y).collect();
        let dx = knot_slopes(&xs, &self.mx, &self.h, self.closed);
        let dy = knot_slopes(&ys, &self.my, &self.h, self.closed);
        dx.into_iter().zip(dy).map(|(x, y)| LocalPoint::new(x, y)).collect()
    }

    /// Signed curvature at each knot.
    pub fn knot_curvatures(&self) -> Result<Vec<T>, SplineError> {
        self.knot_tangents()
            .iter()
            .enumerate()
            .map(|(i, d1)| {
                let d2 = LocalPoint::new(self.mx[i], self.my[i]);
                signed_curvature(d1, &d2).ok_or(SplineError::DegenerateTangent(self.knots[i].to_f64_lossy()))
            })
            .collect()
    }

    fn speed(&self, t: T) -> T {
        let d = self.eval(t).d1;
        d.x.hypot(d.y)
    }

    /// Arc length of `[a, b]` inside one segment by 5-point Gauss–Legendre.
    fn gauss_length(&self, a: T, b: T) -> T {
        const NODES: [f64; 5] = [0.0, -0.538_469_310_105_683, 0.538_469_310_105_683, -0.906_179_845_938_664, 0.906_179_845_938_664];
        const WEIGHTS: [f64; 5] = [0.568_888_888_888_889, 0.478_628_670_499_366, 0.478_628_670_499_366, 0.236_926_885_056_189, 0.236_926_885_056_189];
        let half = (b - a) * T::lit(0.5);
        let mid = (a + b) * T::lit(0.5);
        NODES.iter().zip(WEIGHTS.iter()).map(|(&x, &w)| T::lit(w) * self.speed(mid + half * T::lit(x))).sum::<T>() * half
    }

    /// Dense arc-length table: `(parameter, cumulative length)` pairs, with
    /// `subdiv` Gauss panels per segment.
    pub fn arc_length_table(&self, subdiv: usize) -> Vec<(T, T)> {
        let subdiv = subdiv.max(1);
        let mut table = Vec::with_capacity(self.h.len() * subdiv + 1);
        let mut s = T::zero();
        table.push((T::zero(), s));
        for seg in 0..self.h.len() {
            let t0 = self.knots[seg];
            let step = self.h[seg] / T::from_usize_lossy(subdiv);
            for k in 0..subdiv {
                let a = t0 + step * T::from_usize_lossy(k);
                let b = if k + 1 == subdiv { self.knots[seg + 1] } else { a + step };
                // stay inside the segment so the integrand is a single polynomial
                let eps = step * T::lit(1e-12);
                s = s + self.gauss_length(a + eps, b - eps);
                table.push((b, s));
            }
        }
        table
    }

    pub fn total_length(&self) -> T {
        self.arc_length_table(8).last().map(|p| p.1).unwrap_or_else(T::zero)
    }
}

/// Maps arc length to parameter using a table from [`Spline2::arc_length_table`]
/// with Newton refinement.
pub(crate) fn param_at_length<T: Real>(spline: &Spline2<T>, table: &[(T, T)], s: T) -> T {
    let idx = table.partition_point(|&(_, cum)| cum <= s).clamp(1, table.len() - 1);
    let (t0, s0) = table[idx - 1];
    let (t1, s1) = table[idx];
    let span = s1 - s0;
    let mut t = if span > T::zero() { t0 + (t1 - t0) * (s - s0) / span } else { t0 };
    for _ in 0..3 {
        let len = s0 + spline.gauss_length(t0, t);
        let speed = spline.speed(t);
        if speed <= T::lit(MIN_TANGENT) {
            break;
        }
        t = (t - (len - s) / speed).max(t0).min(t1);
    }
    t
}
