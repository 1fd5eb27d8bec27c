//! Grass-boundary perception: blur, green/blue threshold, morphological
//! cleanup, bird's-eye-view warp and conversion to a polar depth scan.
//!
//! Pixel `(u, v)` covers `[u, u+1) × [v, v+1)`; its center is `(u+0.5, v+0.5)`.
//! Homographies map front-view pixel coordinates to BEV ground coordinates in
//! meters, with the BEV origin at its top-left corner, x to the right and y
//! down (vehicle forward is −y).

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat3;
use crate::localization::LocalPoint;
use crate::planning::{scan_angles, DepthScan, SCAN_RAYS};

pub type Point = LocalPoint<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("image buffer holds {got} bytes, expected {expected}")]
    BadBuffer { expected: usize, got: usize },
    #[error("degenerate point configuration: three of the four points are collinear")]
    Degenerate,
    #[error("homography is not invertible")]
    Singular,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major `r, g, b` triples.
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, PerceptionError> {
        if pixels.len() != width * height * 3 {
            return Err(PerceptionError::BadBuffer { expected: width * height * 3, got: pixels.len() });
        }
        Ok(RgbImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        RgbImage { width, height, pixels }
    }

    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * self.width + u);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = 3 * (v * self.width + u);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    /// Row-major 0/1 values.
    pub bits: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask { width, height, bits: vec![0; width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        BinaryMask { width, height, bits: vec![1; width * height] }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> bool {
        self.bits[v * self.width + u] != 0
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: bool) {
        self.bits[v * self.width + u] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    /// Fraction of pixels with equal values; masks must share dimensions.
    pub fn agreement(&self, other: &BinaryMask) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        let same = self.bits.iter().zip(&other.bits).filter(|(a, b)| a == b).count();
        same as f64 / self.bits.len().max(1) as f64
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable Gaussian blur with kernel radius `⌈3σ⌉` and clamped edges.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    assert!(sigma > 0.0, "sigma must be positive");
    let kernel = gaussian_kernel(sigma);
    let r = kernel.len() / 2;
    let (w, h) = (img.width, img.height);
    let mut out = vec![0u8; img.pixels.len()];
    let mut padded = vec![0.0f64; w + 2 * r];
    let mut plane = vec![0.0f64; w * h];
    let mut acc = vec![0.0f64; w];
    for c in 0..3 {
        for v in 0..h {
            for (i, p) in padded.iter_mut().enumerate() {
                let u = i.saturating_sub(r).min(w - 1);
                *p = img.pixels[3 * (v * w + u) + c] as f64;
            }
            for (u, dst) in plane[v * w..(v + 1) * w].iter_mut().enumerate() {
                let mut a = 0.0;
                for (x, wt) in padded[u..u + kernel.len()].iter().zip(&kernel) {
                    a += wt * x;
                }
                *dst = a;
            }
        }
        for v in 0..h {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (k, wt) in kernel.iter().enumerate() {
                let vv = (v + k).saturating_sub(r).min(h - 1);
                for (a, x) in acc.iter_mut().zip(&plane[vv * w..(vv + 1) * w]) {
                    *a += wt * x;
                }
            }
            for (u, a) in acc.iter().enumerate() {
                out[3 * (v * w + u) + c] = a.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RgbImage { width: w, height: h, pixels: out }
}

/// Grass score `0.6·g − b`, computed as `(3g − 5b)/5` so it is the correctly
/// rounded value of the exact rational score.
#[inline]
pub fn grass_score(g: u8, b: u8) -> f64 {
    (3 * g as i32 - 5 * b as i32) as f64 / 5.0
}

/// `G(u, v) = 1` iff `0.6·g − b ≥ tau`.
pub fn grass_mask(img: &RgbImage, tau: f64) -> BinaryMask {
    let bits = img.pixels.chunks_exact(3).map(|px| (grass_score(px[1], px[2]) >= tau) as u8).collect();
    BinaryMask { width: img.width, height: img.height, bits }
}

/// Square-element erosion (`min`) or dilation (`max`) of side `2r+1`.
/// Pixels outside the frame are neutral: 1 for erosion and 0 for dilation.
fn morph(mask: &BinaryMask, radius: usize, erode: bool) -> BinaryMask {
    let (w, h, r) = (mask.width, mask.height, radius);
    let pick = |acc: u8, x: &u8| if erode { acc.min(*x) } else { acc.max(*x) };
    let init = if erode { 1u8 } else { 0u8 };
    let mut rows = vec![0u8; w * h];
    let mut padded = vec![init; w + 2 * r];
    for v in 0..h {
        padded[r..r + w].copy_from_slice(&mask.bits[v * w..(v + 1) * w]);
        for (u, dst) in rows[v * w..(v + 1) * w].iter_mut().enumerate() {
            *dst = padded[u..=u + 2 * r].iter().fold(init, pick);
        }
    }
    let mut out = vec![init; w * h];
    for v in 0..h {
        let dst = &mut out[v * w..(v + 1) * w];
        for vv in v.saturating_sub(r)..(v + r + 1).min(h) {
            for (d, x) in dst.iter_mut().zip(&rows[vv * w..(vv + 1) * w]) {
                *d = pick(*d, x);
            }
        }
    }
    BinaryMask { width: w, height: h, bits: out }
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, radius, true)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    morph(mask, radius, false)
}

/// Opening followed by closing.
pub fn morph_open_close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    assert!(radius >= 1, "radius must be at least 1");
    let opened = dilate(&erode(mask, radius), radius);
    erode(&dilate(&opened, radius), radius)
}

/// Projective map, normalized so `h[2][2] = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography {
    pub h: [[f64; 3]; 3],
}

fn collinear(a: &Point, b: &Point, c: &Point) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = a.distance(b).max(a.distance(c)).max(b.distance(c)).max(1e-300);
    cross.abs() <= 1e-9 * scale * scale
}

fn any_three_collinear(p: &[Point; 4]) -> bool {
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)].iter().any(|&(i, j, k)| collinear(&p[i], &p[j], &p[k]))
}

impl Homography {
    pub fn identity() -> Self {
        Homography { h: Mat3::<f64>::identity().0 }
    }

    pub fn from_matrix(h: [[f64; 3]; 3]) -> Result<Self, PerceptionError> {
        if h[2][2].abs() < 1e-300 || !h.iter().flatten().all(|v| v.is_finite()) {
            return Err(PerceptionError::Singular);
        }
        let s = h[2][2];
        let mut n = h;
        n.iter_mut().flatten().for_each(|v| *v /= s);
        if Mat3(n).determinant().abs() <= 1e-12 {
            return Err(PerceptionError::Singular);
        }
        Ok(Homography { h: n })
    }

    /// Exact 8-DOF map taking each `src[i]` to `dst[i]`.
    pub fn from_points(src: &[Point; 4], dst: &[Point; 4]) -> Result<Self, PerceptionError> {
        if any_three_collinear(src) || any_three_collinear(dst) {
            return Err(PerceptionError::Degenerate);
        }
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = (src[i].x, src[i].y);
            let (u, v) = (dst[i].x, dst[i].y);
            let r = 2 * i;
            a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let sol = a.full_piv_lu().solve(&b).ok_or(PerceptionError::Degenerate)?;
        Self::from_matrix([[sol[0], sol[1], sol[2]], [sol[3], sol[4], sol[5]], [sol[6], sol[7], 1.0]])
    }

    /// `None` when the point maps to (or behind) the line at infinity.
    pub fn apply(&self, p: &Point) -> Option<Point> {
        let [x, y, w] = Mat3(self.h).mul_vec(&[p.x, p.y, 1.0]);
        (w > 1e-12).then(|| Point::new(x / w, y / w))
    }

    pub fn inverse(&self) -> Result<Self, PerceptionError> {
        let inv = Mat3(self.h).try_inverse(1e-300).ok_or(PerceptionError::Singular)?;
        Self::from_matrix(inv.0)
    }
}

/// BEV raster geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevConfig {
    pub width: usize,
    pub height: usize,
    pub meters_per_px: f64,
    /// Vehicle position in BEV pixel coordinates.
    pub vehicle_px: (f64, f64),
    pub max_range: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        BevConfig { width: 200, height: 200, meters_per_px: 0.05, vehicle_px: (100.0, 200.0), max_range: 10.0 }
    }
}

impl BevConfig {
    /// BEV ground coordinates (meters) of a point in the vehicle frame
    /// (forward, left).
    pub fn vehicle_to_ground(&self, forward: f64, left: f64) -> Point {
        let m = self.meters_per_px;
        Point::new(self.vehicle_px.0 * m - left, self.vehicle_px.1 * m - forward)
    }

    /// Inverse of [`BevConfig::vehicle_to_ground`]; returns `(forward, left)`.
    pub fn ground_to_vehicle(&self, g: &Point) -> (f64, f64) {
        let m = self.meters_per_px;
        (self.vehicle_px.1 * m - g.y, self.vehicle_px.0 * m - g.x)
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.meters_per_px
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.meters_per_px
    }
}

/// Resamples a front-view mask into the BEV frame by inverse mapping each BEV
/// pixel center through `H⁻¹`, nearest neighbor; unmapped pixels are 0.
pub fn warp_to_bev(mask: &BinaryMask, h: &Homography, bev_width: usize, bev_height: usize, meters_per_px: f64) -> Result<BinaryMask, PerceptionError> {
    let inv = h.inverse()?;
    let mut out = BinaryMask::zeros(bev_width, bev_height);
    for v in 0..bev_height {
        for u in 0..bev_width {
            let g = Point::new((u as f64 + 0.5) * meters_per_px, (v as f64 + 0.5) * meters_per_px);
            if let Some(s) = inv.apply(&g) {
                let (su, sv) = (s.x.floor(), s.y.floor());
                if su >= 0.0 && sv >= 0.0 && (su as usize) < mask.width && (sv as usize) < mask.height && mask.get(su as usize, sv as usize) {
                    out.set(u, v, true);
                }
            }
        }
    }
    Ok(out)
}

/// Ray marching step in pixels.
pub const RAY_STEP_PX: f64 = 0.5;

/// Casts the 361 scan rays from `vehicle_px` through the BEV mask and reports
/// the distance to the first grass pixel, or `max_range` without a hit.
pub fn mask_to_depth(bev: &BinaryMask, vehicle_px: (f64, f64), meters_per_px: f64, max_range: f64) -> DepthScan<f64> {
    let angles: Vec<f64> = scan_angles(SCAN_RAYS);
    let max_steps = (max_range / (RAY_STEP_PX * meters_per_px)).floor() as usize;
    let distances = angles
        .iter()
        .map(|&a| {
            let (du, dv) = (-a.sin(), -a.cos());
            for k in 1..=max_steps {
                let t = k as f64 * RAY_STEP_PX;
                let (x, y) = (vehicle_px.0 + t * du, vehicle_px.1 + t * dv);
                if x < 0.0 || y < 0.0 || x > bev.width as f64 || y > bev.height as f64 {
                    break;
                }
                // the far raster edges belong to the last row and column
                let (u, v) = ((x.floor() as usize).min(bev.width - 1), (y.floor() as usize).min(bev.height - 1));
                if bev.get(u, v) {
                    return (t * meters_per_px).min(max_range);
                }
            }
            max_range
        })
        .collect();
    DepthScan { distances, angles, max_range }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionParams {
    pub tau: f64,
    pub sigma: f64,
    pub morph_radius: usize,
}

impl Default for PerceptionParams {
    fn default() -> Self {
        PerceptionParams { tau: 20.0, sigma: 2.0, morph_radius: 2 }
    }
}

/// Intermediate products of one perception pass.
#[derive(Debug, Clone)]
pub struct PerceptionOutput {
    pub mask: BinaryMask,
    pub bev: BinaryMask,
    pub scan: DepthScan<f64>,
}

/// Runs blur → threshold → open/close → BEV warp → depth scan.
pub fn perceive(img: &RgbImage, h: &Homography, params: &PerceptionParams, bev_cfg: &BevConfig) -> Result<PerceptionOutput, PerceptionError> {
    let blurred = gaussian_blur(img, params.sigma);
    let mask = morph_open_close(&grass_mask(&blurred, params.tau), params.morph_radius);
    let bev = warp_to_bev(&mask, h, bev_cfg.width, bev_cfg.height, bev_cfg.meters_per_px)?;
    let scan = mask_to_depth(&bev, bev_cfg.vehicle_px, bev_cfg.meters_per_px, bev_cfg.max_range);
    Ok(PerceptionOutput { mask, bev, scan })
}

/// Image dimensions and calibration of the simulated front camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub image_width: usize,
    pub image_height: usize,
    pub homography: Homography,
}

impl CameraModel {
    /// A forward camera whose view trapezoid covers the whole BEV frame:
    /// the image bottom edge sees ground just behind the vehicle, the top
    /// edge ground just beyond the far BEV edge, widening with distance.
    pub fn covering(bev: &BevConfig, image_width: usize, image_height: usize) -> Self {
        let (w, h) = (image_width as f64, image_height as f64);
        let (bw, bh) = (bev.width_m(), bev.height_m());
        let margin = 0.5;
        let near_half = 0.5 * bw + 0.3 * bw;
        let far_half = 0.5 * bw + 1.0 * bw;
        let cx = 0.5 * bw;
        let src = [Point::new(0.0, h), Point::new(w, h), Point::new(w, 0.0), Point::new(0.0, 0.0)];
        let dst = [
            Point::new(cx - near_half, bh + margin),
            Point::new(cx + near_half, bh + margin),
            Point::new(cx + far_half, -margin),
            Point::new(cx - far_half, -margin),
        ];
        let homography = Homography::from_points(&src, &dst).expect("trapezoid is non-degenerate");
        CameraModel { image_width, image_height, homography }
    }
}
