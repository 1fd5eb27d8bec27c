//! Vehicle model, sensor emulation, synthetic camera scenes and the
//! closed-loop stepper.

mod closed_loop;
mod scene;

pub use closed_loop::{build_reference, run_closed_loop, CommandRow, RunLogs, RunReport, ScanRow, SimError, TrajectoryRow};
pub use scene::{ground_truth_bev, render_scene, Projection, TrackGeometry, GRASS_RGB, TRACK_RGB};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::localization::{local_to_geo, GeoFix, ImuReading, LocalPoint};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn position(&self) -> LocalPoint<f64> {
        LocalPoint::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    /// Time constant of the first-order speed response, s.
    pub v_time_constant: f64,
    /// Speed reached at full throttle duty, m/s.
    pub max_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams { wheelbase: 1.05, v_time_constant: 1.0, max_speed: 8.0 }
    }
}

/// Yaw rate of the kinematic bicycle.
pub fn yaw_rate(v: f64, steering: f64, params: &VehicleParams) -> f64 {
    v / params.wheelbase * steering.tan()
}

/// Advances the kinematic bicycle by `dt` with RK4. The speed relaxes toward
/// `speed_cmd · (1 − brake)`.
pub fn bicycle_step(state: &VehicleState, steering: f64, speed_cmd: f64, brake: f64, params: &VehicleParams, dt: f64) -> VehicleState {
    let target = speed_cmd.clamp(0.0, params.max_speed) * (1.0 - brake.clamp(0.0, 1.0));
    let tan_d = steering.tan();
    let f = |s: [f64; 4]| -> [f64; 4] {
        let (psi, v) = (s[2], s[3]);
        [v * psi.cos(), v * psi.sin(), v / params.wheelbase * tan_d, (target - v) / params.v_time_constant]
    };
    let s0 = [state.x, state.y, state.psi, state.v];
    let add = |a: [f64; 4], b: [f64; 4], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2], a[3] + h * b[3]];
    let k1 = f(s0);
    let k2 = f(add(s0, k1, dt / 2.0));
    let k3 = f(add(s0, k2, dt / 2.0));
    let k4 = f(add(s0, k3, dt));
    let mut s = s0;
    for i in 0..4 {
        s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    VehicleState { x: s[0], y: s[1], psi: s[2].wrap_angle(), v: s[3].max(0.0) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub gnss_sigma: f64,
    pub gnss_rate: f64,
    /// Half-open `[start, end)` intervals without GNSS, s.
    pub gnss_dropout_windows: Vec<(f64, f64)>,
    pub imu_sigma_yaw: f64,
    pub imu_sigma_rate: f64,
    pub imu_rate: f64,
    pub seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            gnss_sigma: 0.02,
            gnss_rate: 10.0,
            gnss_dropout_windows: Vec::new(),
            imu_sigma_yaw: 0.01,
            imu_sigma_rate: 0.01,
            imu_rate: 100.0,
            seed: 0,
        }
    }
}

impl SensorConfig {
    pub fn in_dropout(&self, t: f64) -> bool {
        self.gnss_dropout_windows.iter().any(|&(a, b)| t >= a && t < b)
    }

    /// Zero-noise copy.
    pub fn noiseless(&self) -> Self {
        SensorConfig { gnss_sigma: 0.0, imu_sigma_yaw: 0.0, imu_sigma_rate: 0.0, ..self.clone() }
    }
}

/// GNSS receiver and IMU with independent seeded noise streams.
#[derive(Debug, Clone)]
pub struct Sensors {
    pub config: SensorConfig,
    pub origin: GeoFix<f64>,
    pub earth_radius: f64,
    gnss_rng: ChaCha8Rng,
    imu_rng: ChaCha8Rng,
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("finite sigma")
}

impl Sensors {
    pub fn new(config: SensorConfig, origin: GeoFix<f64>, earth_radius: f64) -> Self {
        let gnss_rng = ChaCha8Rng::seed_from_u64(config.seed);
        let imu_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
        Sensors { config, origin, earth_radius, gnss_rng, imu_rng }
    }

    /// A fix of the noisy true position, or `None` inside a dropout window.
    pub fn gnss_sample(&mut self, state: &VehicleState, t: f64) -> Option<GeoFix<f64>> {
        if self.config.in_dropout(t) {
            return None;
        }
        let n = normal(self.config.gnss_sigma);
        let p = LocalPoint::new(state.x + self.gnss_rng.sample(n), state.y + self.gnss_rng.sample(n));
        Some(local_to_geo(&p, &self.origin, self.earth_radius, self.config.gnss_sigma.powi(2)))
    }

    pub fn imu_sample(&mut self, state: &VehicleState, omega_true: f64) -> ImuReading<f64> {
        let yaw = state.psi + self.imu_rng.sample(normal(self.config.imu_sigma_yaw));
        let rate = omega_true + self.imu_rng.sample(normal(self.config.imu_sigma_rate));
        ImuReading { yaw: yaw.wrap_angle(), yaw_rate: rate, yaw_variance: self.config.imu_sigma_yaw.powi(2) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{project_to_local, EARTH_RADIUS_M};
    use std::f64::consts::PI;

    #[test]
    fn straight_line() {
        let p = VehicleParams::default();
        let mut s = VehicleState { v: 3.0, ..Default::default() };
        for _ in 0..100 {
            s = bicycle_step(&s, 0.0, 3.0, 0.0, &p, 0.01);
        }
        assert!((s.x - 3.0).abs() < 1e-12 && s.y == 0.0 && s.psi == 0.0);
    }

    #[test]
    fn constant_steering_traces_circle() {
        let p = VehicleParams::default();
        let (delta, v, dt) = (0.2, 3.0, 0.01);
        let radius = p.wheelbase / f64::tan(delta);
        let period = 2.0 * PI * radius / v;
        let mut s = VehicleState { v, ..Default::default() };
        let mut worst: f64 = 0.0;
        for _ in 0..(period / dt).ceil() as usize {
            s = bicycle_step(&s, delta, v, 0.0, &p, dt);
            let r = s.x.hypot(s.y - radius);
            worst = worst.max((r - radius).abs() / radius);
        }
        assert!(worst < 0.005, "{worst}");
    }

    #[test]
    fn braking_and_coasting() {
        let p = VehicleParams::default();
        let mut s = VehicleState { v: 4.0, ..Default::default() };
        for _ in 0..2000 {
            let next = bicycle_step(&s, 0.1, 0.0, 0.0, &p, 0.01);
            assert!(next.v <= s.v && next.v >= 0.0);
            s = next;
        }
        let mut s = VehicleState { v: 4.0, ..Default::default() };
        for _ in 0..1000 {
            s = bicycle_step(&s, 0.0, 6.0, 1.0, &p, 0.05);
            assert!(s.v >= 0.0);
        }
        assert!(s.v < 1e-6);
    }

    #[test]
    fn noiseless_gnss_round_trips() {
        let origin = GeoFix::new(0.70, -1.31, 0.0);
        let cfg = SensorConfig { gnss_dropout_windows: vec![(1.0, 2.0)], ..SensorConfig::default().noiseless() };
        let mut sensors = Sensors::new(cfg, origin, EARTH_RADIUS_M);
        let s = VehicleState { x: 123.4, y: -56.7, psi: 0.3, v: 2.0 };
        let fix = sensors.gnss_sample(&s, 0.5).unwrap();
        let p = project_to_local(&fix, &origin, EARTH_RADIUS_M).unwrap();
        assert!((p.x - s.x).abs() < 1e-9 && (p.y - s.y).abs() < 1e-9);
        assert!(sensors.gnss_sample(&s, 1.5).is_none());
        assert!(sensors.gnss_sample(&s, 2.0).is_some());
        let imu = sensors.imu_sample(&s, 0.25);
        assert_eq!((imu.yaw, imu.yaw_rate), (0.3, 0.25));
    }

    #[test]
    fn gnss_noise_statistics() {
        let origin = GeoFix::new(0.70, -1.31, 0.0);
        let cfg = SensorConfig { seed: 7, ..SensorConfig::default() };
        let mut sensors = Sensors::new(cfg.clone(), origin, EARTH_RADIUS_M);
        let s = VehicleState::default();
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| project_to_local(&sensors.gnss_sample(&s, 0.0).unwrap(), &origin, EARTH_RADIUS_M).unwrap().x)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((std / cfg.gnss_sigma - 1.0).abs() < 0.05, "{std}");

        let yaws: Vec<f64> = (0..n).map(|_| sensors.imu_sample(&s, 0.0).yaw).collect();
        let std = (yaws.iter().map(|y| y * y).sum::<f64>() / n as f64).sqrt();
        assert!((std / cfg.imu_sigma_yaw - 1.0).abs() < 0.05, "{std}");
    }

    #[test]
    fn sensors_are_deterministic() {
        let origin = GeoFix::new(0.70, -1.31, 0.0);
        let cfg = SensorConfig { seed: 42, ..SensorConfig::default() };
        let mut a = Sensors::new(cfg.clone(), origin, EARTH_RADIUS_M);
        let mut b = Sensors::new(cfg, origin, EARTH_RADIUS_M);
        let s = VehicleState::default();
        for _ in 0..50 {
            assert_eq!(a.gnss_sample(&s, 0.0), b.gnss_sample(&s, 0.0));
            assert_eq!(a.imu_sample(&s, 0.1), b.imu_sample(&s, 0.1));
        }
    }
}
