use crate::localization::LocalPoint;
use crate::perception::{BevConfig, BinaryMask, CameraModel, Point, RgbImage};
use crate::track::{Track, TrackError};

use super::VehicleState;

pub const GRASS_RGB: [u8; 3] = [0, 200, 0];
pub const TRACK_RGB: [u8; 3] = [120, 120, 120];

/// Closest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub segment: usize,
    /// Position along the segment in `[0, 1]`.
    pub t: f64,
    /// Arc length of the foot point.
    pub s: f64,
    /// Signed offset, left of the direction of travel positive.
    pub lateral: f64,
    pub distance: f64,
    pub w_left: f64,
    pub w_right: f64,
    /// The point lies before the start or past the end of an open polyline.
    pub beyond_end: bool,
}

impl Projection {
    pub fn on_track(&self) -> bool {
        !self.beyond_end && self.lateral <= self.w_left && self.lateral >= -self.w_right
    }
}

/// Uniform grid of segment indices for nearest-segment queries.
#[derive(Debug, Clone)]
struct SegmentGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

/// Dense polyline with boundary widths, queried by the renderer and the
/// closed-loop metrics.
#[derive(Debug, Clone)]
pub struct TrackGeometry {
    pts: Vec<[f64; 2]>,
    w_left: Vec<f64>,
    w_right: Vec<f64>,
    s: Vec<f64>,
    closed: bool,
    length: f64,
    /// Largest query distance answered exactly by the grid.
    reach: f64,
    grid: SegmentGrid,
}

impl TrackGeometry {
    /// Samples the centerline spline about every `spacing` meters, widths
    /// interpolated linearly between knots.
    pub fn from_track(track: &Track<f64>, spacing: f64) -> Result<Self, TrackError> {
        let spline = track.centerline_spline()?;
        let cps = track.points();
        let n = cps.len();
        let mut pts = Vec::new();
        let (mut wl, mut wr) = (Vec::new(), Vec::new());
        for seg in 0..spline.segment_count() {
            let (t0, t1) = (spline.knot(seg), spline.knot(seg + 1));
            let len = spline.segment_lengths()[seg];
            let m = (len / spacing).ceil().max(1.0) as usize;
            let (a, b) = (&cps[seg], &cps[(seg + 1) % n]);
            for k in 0..m {
                let f = k as f64 / m as f64;
                let p = spline.position(t0 + f * (t1 - t0));
                pts.push([p.x, p.y]);
                wl.push(a.w_left + f * (b.w_left - a.w_left));
                wr.push(a.w_right + f * (b.w_right - a.w_right));
            }
        }
        if !track.is_closed() {
            let last = &cps[n - 1];
            pts.push([last.p.x, last.p.y]);
            wl.push(last.w_left);
            wr.push(last.w_right);
        }
        Ok(Self::from_polyline(pts, wl, wr, track.is_closed(), 0.0))
    }

    /// Polyline through `points` with zero width; `reach` bounds the
    /// distance answered by [`TrackGeometry::nearest`].
    pub fn from_points(points: &[LocalPoint<f64>], closed: bool, reach: f64) -> Self {
        let pts: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
        let zeros = vec![0.0; pts.len()];
        Self::from_polyline(pts, zeros.clone(), zeros, closed, reach)
    }

    fn from_polyline(pts: Vec<[f64; 2]>, w_left: Vec<f64>, w_right: Vec<f64>, closed: bool, min_reach: f64) -> Self {
        let mut s = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        for i in 0..pts.len() {
            s.push(acc);
            if i + 1 < pts.len() {
                acc += dist(pts[i], pts[i + 1]);
            }
        }
        if closed {
            acc += dist(pts[pts.len() - 1], pts[0]);
        }
        let w_max = w_left.iter().chain(&w_right).fold(0.0f64, |m, &w| m.max(w));
        let reach = w_max.max(min_reach) + 0.5;
        let mut geom = TrackGeometry {
            pts,
            w_left,
            w_right,
            s,
            closed,
            length: acc,
            reach,
            grid: SegmentGrid { x0: 0.0, y0: 0.0, cell: 1.0, nx: 0, ny: 0, cells: Vec::new() },
        };
        geom.grid = geom.build_grid();
        geom
    }

    fn build_grid(&self) -> SegmentGrid {
        let cell = 1.0;
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &self.pts {
            xmin = xmin.min(p[0]);
            ymin = ymin.min(p[1]);
            xmax = xmax.max(p[0]);
            ymax = ymax.max(p[1]);
        }
        let (x0, y0) = (xmin - self.reach - cell, ymin - self.reach - cell);
        let nx = ((xmax + self.reach + cell - x0) / cell).ceil() as usize + 1;
        let ny = ((ymax + self.reach + cell - y0) / cell).ceil() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        for seg in 0..self.segment_count() {
            let (a, b) = self.segment(seg);
            let lo = ((a[0].min(b[0]) - self.reach - x0) / cell).floor() as usize;
            let hi = ((a[0].max(b[0]) + self.reach - x0) / cell).floor() as usize;
            let lo_y = ((a[1].min(b[1]) - self.reach - y0) / cell).floor() as usize;
            let hi_y = ((a[1].max(b[1]) + self.reach - y0) / cell).floor() as usize;
            for cy in lo_y..=hi_y.min(ny - 1) {
                for cx in lo..=hi.min(nx - 1) {
                    cells[cy * nx + cx].push(seg as u32);
                }
            }
        }
        SegmentGrid { x0, y0, cell, nx, ny, cells }
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.pts.len()
        } else {
            self.pts.len() - 1
        }
    }

    fn segment(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        (self.pts[i], self.pts[(i + 1) % self.pts.len()])
    }

    fn segment_dist2(&self, seg: usize, p: [f64; 2]) -> f64 {
        let (a, b) = self.segment(seg);
        let d = [b[0] - a[0], b[1] - a[1]];
        let r = [p[0] - a[0], p[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 { ((r[0] * d[0] + r[1] * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let (ex, ey) = (r[0] - t * d[0], r[1] - t * d[1]);
        ex * ex + ey * ey
    }

    fn project_segment(&self, seg: usize, p: [f64; 2]) -> Projection {
        let (a, b) = self.segment(seg);
        let d = [b[0] - a[0], b[1] - a[1]];
        let r = [p[0] - a[0], p[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let raw = if len2 > 0.0 { (r[0] * d[0] + r[1] * d[1]) / len2 } else { 0.0 };
        let last = self.segment_count() - 1;
        let beyond_end = !self.closed && ((seg == 0 && raw < 0.0) || (seg == last && raw > 1.0));
        let t = raw.clamp(0.0, 1.0);
        let foot = [a[0] + t * d[0], a[1] + t * d[1]];
        let distance = dist(p, foot);
        let cross = d[0] * r[1] - d[1] * r[0];
        let lateral = if cross < 0.0 { -distance } else { distance };
        let next = (seg + 1) % self.pts.len();
        Projection {
            segment: seg,
            t,
            s: self.s[seg] + t * len2.sqrt(),
            lateral,
            distance,
            w_left: self.w_left[seg] + t * (self.w_left[next] - self.w_left[seg]),
            w_right: self.w_right[seg] + t * (self.w_right[next] - self.w_right[seg]),
            beyond_end,
        }
    }

    fn better(best: Option<Projection>, cand: Projection) -> Option<Projection> {
        match best {
            Some(b) if b.distance <= cand.distance => Some(b),
            _ => Some(cand),
        }
    }

    /// Nearest segment over the whole polyline, or `None` when every segment
    /// is farther than the grid reach.
    pub fn nearest(&self, p: &LocalPoint<f64>) -> Option<Projection> {
        let g = &self.grid;
        let cx = ((p.x - g.x0) / g.cell).floor();
        let cy = ((p.y - g.y0) / g.cell).floor();
        if cx < 0.0 || cy < 0.0 || cx as usize >= g.nx || cy as usize >= g.ny {
            return None;
        }
        let mut best: Option<(f64, usize)> = None;
        for &seg in &g.cells[cy as usize * g.nx + cx as usize] {
            let d2 = self.segment_dist2(seg as usize, [p.x, p.y]);
            if best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, seg as usize));
            }
        }
        best.filter(|&(d2, _)| d2 <= self.reach * self.reach).map(|(_, seg)| self.project_segment(seg, [p.x, p.y]))
    }

    /// Nearest segment within `window` segments of `hint`.
    pub fn nearest_local(&self, p: &LocalPoint<f64>, hint: usize, window: usize) -> Projection {
        let count = self.segment_count();
        let mut best = None;
        if self.closed && 2 * window + 1 >= count {
            for seg in 0..count {
                best = Self::better(best, self.project_segment(seg, [p.x, p.y]));
            }
        } else if self.closed {
            for k in 0..=2 * window {
                let seg = (hint + count + k - window) % count;
                best = Self::better(best, self.project_segment(seg, [p.x, p.y]));
            }
        } else {
            let lo = hint.saturating_sub(window);
            let hi = (hint + window).min(count - 1);
            for seg in lo..=hi {
                best = Self::better(best, self.project_segment(seg, [p.x, p.y]));
            }
        }
        best.expect("polyline has at least one segment")
    }

    pub fn contains(&self, p: &LocalPoint<f64>) -> bool {
        self.nearest(p).is_some_and(|pr| pr.on_track())
    }

    /// Start point and unit direction of the first segment.
    pub fn start_pose(&self) -> (LocalPoint<f64>, f64) {
        let (a, b) = self.segment(0);
        (LocalPoint::new(a[0], a[1]), (b[1] - a[1]).atan2(b[0] - a[0]))
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn vehicle_to_world(pose: &VehicleState, forward: f64, left: f64) -> LocalPoint<f64> {
    let (s, c) = pose.psi.sin_cos();
    LocalPoint::new(pose.x + forward * c - left * s, pose.y + forward * s + left * c)
}

fn ground_is_grass(geom: &TrackGeometry, pose: &VehicleState, bev: &BevConfig, g: &Point) -> bool {
    let (forward, left) = bev.ground_to_vehicle(g);
    !geom.contains(&vehicle_to_world(pose, forward, left))
}

/// Top-down grass mask around `pose` sampled at BEV pixel centers.
pub fn ground_truth_bev(geom: &TrackGeometry, pose: &VehicleState, bev: &BevConfig) -> BinaryMask {
    let m = bev.meters_per_px;
    let mut mask = BinaryMask::zeros(bev.width, bev.height);
    for v in 0..bev.height {
        for u in 0..bev.width {
            let g = Point::new((u as f64 + 0.5) * m, (v as f64 + 0.5) * m);
            mask.set(u, v, ground_is_grass(geom, pose, bev, &g));
        }
    }
    mask
}

/// Synthetic front-camera view: each pixel center is mapped to the ground by
/// the camera homography and colored by track membership. Pixels that do
/// not reach the ground plane are colored as grass.
pub fn render_scene(geom: &TrackGeometry, pose: &VehicleState, camera: &CameraModel, bev: &BevConfig) -> RgbImage {
    let mut img = RgbImage::filled(camera.image_width, camera.image_height, GRASS_RGB);
    for v in 0..camera.image_height {
        for u in 0..camera.image_width {
            let px = Point::new(u as f64 + 0.5, v as f64 + 0.5);
            let grass = match camera.homography.apply(&px) {
                Some(g) => ground_is_grass(geom, pose, bev, &g),
                None => true,
            };
            if !grass {
                img.set(u, v, TRACK_RGB);
            }
        }
    }
    img
}
