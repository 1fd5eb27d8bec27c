//! GNSS projection into a local metric frame and GNSS + IMU fusion with an
//! extended Kalman filter over the velocity (unicycle) motion model.
//!
//! State is `[x, y, psi]`; inputs are forward speed and yaw rate. The
//! observation is the state itself (projected GNSS position plus IMU yaw),
//! so the observation Jacobian is the identity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Diagonal of the constant process noise.
pub const DEFAULT_PROCESS_NOISE: f64 = 0.1;
/// Variance given to position rows when no GNSS fix is available.
pub const DROPOUT_VARIANCE: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("gnss fix invalid (dropout)")]
    Dropout,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadTimeStep(f64),
    #[error("innovation covariance is singular")]
    Singular,
    #[error("replay log is empty")]
    EmptyLog,
    #[error("replay log has no valid GNSS fix")]
    NoFix,
    #[error("timestamps must increase strictly (row {0})")]
    NonMonotonic(usize),
}

pub type Result<T> = std::result::Result<T, LocalizationError>;

/// Geographic fix in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix<T> {
    pub lat: T,
    pub lon: T,
    /// Per-axis position variance reported by the receiver, m².
    pub pos_variance: T,
    pub valid: bool,
}

impl<T: Real> GeoFix<T> {
    pub fn new(lat: T, lon: T, pos_variance: T) -> Self {
        GeoFix { lat, lon, pos_variance, valid: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> LocalPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        LocalPoint { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading<T> {
    pub yaw: T,
    pub yaw_rate: T,
    pub yaw_variance: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionInput<T> {
    pub v: T,
    pub omega: T,
    pub dt: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfParams<T> {
    /// Diagonal entry of the process noise R, applied to x, y and psi alike.
    pub process_noise_scale: T,
    pub earth_radius: T,
}

impl<T: Real> Default for EkfParams<T> {
    fn default() -> Self {
        EkfParams {
            process_noise_scale: T::lit(DEFAULT_PROCESS_NOISE),
            earth_radius: T::lit(EARTH_RADIUS_M),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState<T> {
    /// `[x, y, psi]`
    pub mean: Vec3<T>,
    pub cov: Mat3<T>,
}

impl<T: Real> EkfState<T> {
    /// Identity covariance at the given pose.
    pub fn new(x: T, y: T, psi: T) -> Self {
        EkfState { mean: [x, y, psi.wrap_angle()], cov: Mat3::identity() }
    }

    /// Initial state from the first valid fix and the IMU yaw.
    pub fn from_first_fix(fix: &GeoFix<T>, origin: &GeoFix<T>, imu: &ImuReading<T>, params: &EkfParams<T>) -> Result<Self> {
        let p = project_to_local(fix, origin, params.earth_radius)?;
        Ok(Self::new(p.x, p.y, imu.yaw))
    }

    pub fn position(&self) -> LocalPoint<T> {
        LocalPoint::new(self.mean[0], self.mean[1])
    }

    pub fn heading(&self) -> T {
        self.mean[2]
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && self.cov.is_finite()
    }
}

/// Maps a fix to local meters around `origin` with an equirectangular
/// projection. The cosine is taken at the origin latitude so the map is
/// affine and has an exact inverse ([`local_to_geo`]).
pub fn project_to_local<T: Real>(fix: &GeoFix<T>, origin: &GeoFix<T>, earth_radius: T) -> Result<LocalPoint<T>> {
    if !fix.valid || !origin.valid {
        return Err(LocalizationError::Dropout);
    }
    if !(fix.lat.is_finite() && fix.lon.is_finite() && origin.lat.is_finite() && origin.lon.is_finite()) {
        return Err(LocalizationError::NonFinite("fix"));
    }
    Ok(LocalPoint {
        x: earth_radius * origin.lat.cos() * (fix.lon - origin.lon),
        y: earth_radius * (fix.lat - origin.lat),
    })
}

/// Inverse of [`project_to_local`].
pub fn local_to_geo<T: Real>(p: &LocalPoint<T>, origin: &GeoFix<T>, earth_radius: T, pos_variance: T) -> GeoFix<T> {
    GeoFix {
        lat: origin.lat + p.y / earth_radius,
        lon: origin.lon + p.x / (earth_radius * origin.lat.cos()),
        pos_variance,
        valid: true,
    }
}

/// Unicycle prediction of the mean (heading not wrapped).
pub fn motion_model<T: Real>(mean: &Vec3<T>, u: &MotionInput<T>) -> Vec3<T> {
    let step = u.v * u.dt;
    [mean[0] + step * mean[2].cos(), mean[1] + step * mean[2].sin(), mean[2] + u.dt * u.omega]
}

/// Jacobian of [`motion_model`] with respect to the state.
pub fn ekf_jacobian<T: Real>(psi: T, v: T, dt: T) -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    Mat3([[o, z, -dt * v * psi.sin()], [z, o, dt * v * psi.cos()], [z, z, o]])
}

pub fn ekf_predict<T: Real>(state: &EkfState<T>, u: &MotionInput<T>, params: &EkfParams<T>) -> Result<EkfState<T>> {
    if !(u.v.is_finite() && u.omega.is_finite() && u.dt.is_finite()) || !state.is_finite() {
        return Err(LocalizationError::NonFinite("predict input"));
    }
    if u.dt <= T::zero() {
        return Err(LocalizationError::BadTimeStep(u.dt.to_f64_lossy()));
    }
    let j = ekf_jacobian(state.mean[2], u.v, u.dt);
    let mut mean = motion_model(&state.mean, u);
    mean[2] = mean[2].wrap_angle();
    let cov = (j * state.cov * j.transpose() + Mat3::scaled_identity(params.process_noise_scale)).symmetrized();
    Ok(EkfState { mean, cov })
}

/// Kalman update with identity observation model and diagonal observation
/// covariance `obs_var = diag(M)`. The heading residual is wrapped onto the
/// circle.
pub fn ekf_update<T: Real>(state: &EkfState<T>, obs: &Vec3<T>, obs_var: &Vec3<T>) -> Result<EkfState<T>> {
    if !obs.iter().chain(obs_var.iter()).all(|v| v.is_finite()) || !state.is_finite() {
        return Err(LocalizationError::NonFinite("update input"));
    }
    let p = state.cov;
    let s = p + Mat3::diag(obs_var[0], obs_var[1], obs_var[2]);
    // relative singularity threshold
    let scale = (0..3).map(|i| s[(i, i)].abs()).fold(T::zero(), T::max);
    let min_det = T::epsilon() * scale * scale * scale;
    let s_inv = s.try_inverse(min_det).ok_or(LocalizationError::Singular)?;
    let k = p * s_inv;
    let residual = [obs[0] - state.mean[0], obs[1] - state.mean[1], (obs[2] - state.mean[2]).wrap_angle()];
    let correction = k.mul_vec(&residual);
    let mean = [
        state.mean[0] + correction[0],
        state.mean[1] + correction[1],
        (state.mean[2] + correction[2]).wrap_angle(),
    ];
    let cov = ((Mat3::identity() - k) * p).symmetrized();
    Ok(EkfState { mean, cov })
}

/// One filter cycle: predict with `u`, then update with IMU yaw and, when a
/// valid fix is available, the projected GNSS position. Without a fix the
/// position rows get [`DROPOUT_VARIANCE`] so the same update path runs.
pub fn fuse_step<T: Real>(
    state: &EkfState<T>,
    u: &MotionInput<T>,
    gnss: Option<&GeoFix<T>>,
    imu: &ImuReading<T>,
    origin: &GeoFix<T>,
    params: &EkfParams<T>,
) -> Result<EkfState<T>> {
    let predicted = ekf_predict(state, u, params)?;
    let (obs, obs_var) = match gnss.filter(|f| f.valid) {
        Some(fix) => {
            let p = project_to_local(fix, origin, params.earth_radius)?;
            ([p.x, p.y, imu.yaw], [fix.pos_variance, fix.pos_variance, imu.yaw_variance])
        }
        None => {
            let big = T::lit(DROPOUT_VARIANCE);
            ([predicted.mean[0], predicted.mean[1], imu.yaw], [big, big, imu.yaw_variance])
        }
    };
    ekf_update(&predicted, &obs, &obs_var)
}

/// One row of a recorded sensor log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub t_s: f64,
    pub lat_rad: f64,
    pub lon_rad: f64,
    pub gnss_valid: u8,
    pub gnss_var_m2: f64,
    pub imu_yaw_rad: f64,
    pub imu_yaw_var_rad2: f64,
    pub v_mps: f64,
    pub omega_radps: f64,
}

/// Estimated pose with the diagonal of its covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub psi_rad: f64,
    pub cov_xx: f64,
    pub cov_yy: f64,
    pub cov_pp: f64,
}

impl PoseRow {
    pub fn from_state(t_s: f64, s: &EkfState<f64>) -> Self {
        PoseRow { t_s, x_m: s.mean[0], y_m: s.mean[1], psi_rad: s.mean[2], cov_xx: s.cov[(0, 0)], cov_yy: s.cov[(1, 1)], cov_pp: s.cov[(2, 2)] }
    }
}

/// Replays a sensor log through [`fuse_step`]. The first valid fix is the
/// local origin and the initial position; every later row yields one pose.
/// The speed and yaw rate of a row drive the prediction up to the next row.
pub fn replay_log(rows: &[ReplayRow], params: &EkfParams<f64>) -> Result<Vec<PoseRow>> {
    if rows.is_empty() {
        return Err(LocalizationError::EmptyLog);
    }
    if let Some(i) = rows.windows(2).position(|w| !(w[1].t_s > w[0].t_s)) {
        return Err(LocalizationError::NonMonotonic(i + 1));
    }
    let fix_of = |r: &ReplayRow| GeoFix { lat: r.lat_rad, lon: r.lon_rad, pos_variance: r.gnss_var_m2, valid: r.gnss_valid != 0 };
    let imu_of = |r: &ReplayRow| ImuReading { yaw: r.imu_yaw_rad, yaw_rate: r.omega_radps, yaw_variance: r.imu_yaw_var_rad2 };
    let first = rows.iter().position(|r| r.gnss_valid != 0).ok_or(LocalizationError::NoFix)?;
    let origin = fix_of(&rows[first]);
    let mut state = EkfState::from_first_fix(&origin, &origin, &imu_of(&rows[first]), params)?;
    let mut out = Vec::with_capacity(rows.len() - first);
    out.push(PoseRow::from_state(rows[first].t_s, &state));
    for w in rows[first..].windows(2) {
        let (prev, row) = (&w[0], &w[1]);
        let u = MotionInput { v: prev.v_mps, omega: prev.omega_radps, dt: row.t_s - prev.t_s };
        let fix = fix_of(row);
        state = fuse_step(&state, &u, fix.valid.then_some(&fix), &imu_of(row), &origin, params)?;
        out.push(PoseRow::from_state(row.t_s, &state));
    }
    Ok(out)
}
