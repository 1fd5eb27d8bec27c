//! Scenario configuration: a flat `key = value` text format with dotted keys
//! covering every tunable parameter. Unknown keys are rejected.
//!
//! ```text
//! # pursuit run on the test oval
//! track = oval.csv
//! mode = pursuit
//! duration_s = 40
//! ftg.epsilon = 3.0
//! sensors.gnss_dropout = 10:12, 20:20.5
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::PursuitParams;
use crate::drivebus::DrivebusParams;
use crate::localization::EkfParams;
use crate::perception::{BevConfig, PerceptionParams};
use crate::planning::{FtgParams, SpeedLaw};
use crate::sim::{SensorConfig, VehicleParams};
use crate::track::{OptimizerOptions, VehicleLimits};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value {value:?} for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{key}: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pursuit,
    Ftg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub physics: f64,
    pub control: f64,
    pub perception: f64,
    pub command: f64,
    pub feedback: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { physics: 100.0, control: 20.0, perception: 10.0, command: 50.0, feedback: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub track: Option<PathBuf>,
    pub closed: bool,
    pub mode: Mode,
    pub duration_s: f64,
    pub start_speed: f64,
    /// Time at which the kill switch is pressed, if ever.
    pub kill_at_s: Option<f64>,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub rates: Rates,
    pub vehicle: VehicleParams,
    pub vehicle_half_width: f64,
    pub limits: VehicleLimits<f64>,
    pub raceline_spacing: f64,
    pub optimize: bool,
    pub optimizer: OptimizerOptions<f64>,
    pub pursuit: PursuitParams<f64>,
    pub ftg: FtgParams<f64>,
    pub ekf: EkfParams<f64>,
    pub sensors: SensorConfig,
    pub perception: PerceptionParams,
    pub bev: BevConfig,
    pub camera_width: usize,
    pub camera_height: usize,
    pub drivebus: DrivebusParams,
    pub record_frames: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            track: None,
            closed: true,
            mode: Mode::Pursuit,
            duration_s: 60.0,
            start_speed: 0.0,
            kill_at_s: None,
            // 40.4274° N, 86.9132° W
            origin_lat: 0.705_593_7,
            origin_lon: -1.516_922_8,
            rates: Rates::default(),
            vehicle: VehicleParams::default(),
            vehicle_half_width: 0.5,
            limits: VehicleLimits::default(),
            raceline_spacing: 0.5,
            optimize: true,
            optimizer: OptimizerOptions::default(),
            pursuit: PursuitParams::default(),
            ftg: FtgParams::default(),
            ekf: EkfParams::default(),
            sensors: SensorConfig::default(),
            perception: PerceptionParams::default(),
            bev: BevConfig::default(),
            camera_width: 320,
            camera_height: 240,
            drivebus: DrivebusParams::default(),
            record_frames: true,
        }
    }
}

/// Textual form of one configuration value.
trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! via_fromstr {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

via_fromstr!(f64, u64, usize, bool);

impl ConfigValue for Option<f64> {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "" | "none" => Ok(None),
            _ => f64::parse_value(s).map(Some),
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "none".to_string(), |v| v.to_string())
    }
}

impl ConfigValue for Option<PathBuf> {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn render(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl ConfigValue for Mode {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "pursuit" => Ok(Mode::Pursuit),
            "ftg" => Ok(Mode::Ftg),
            _ => Err("expected pursuit or ftg".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            Mode::Pursuit => "pursuit",
            Mode::Ftg => "ftg",
        }
        .into()
    }
}

impl ConfigValue for SpeedLaw {
    fn parse_value(s: &str) -> Result<Self, String> {
        match s {
            "corrected" => Ok(SpeedLaw::Corrected),
            "as-written" => Ok(SpeedLaw::AsWritten),
            _ => Err("expected corrected or as-written".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            SpeedLaw::Corrected => "corrected",
            SpeedLaw::AsWritten => "as-written",
        }
        .into()
    }
}

/// `start:end` pairs separated by commas.
impl ConfigValue for Vec<(f64, f64)> {
    fn parse_value(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(str::trim)
            .filter(|w| !w.is_empty() && *w != "none")
            .map(|w| {
                let (a, b) = w.split_once(':').ok_or_else(|| format!("expected start:end, got {w:?}"))?;
                let (a, b) = (f64::parse_value(a.trim())?, f64::parse_value(b.trim())?);
                if b < a {
                    return Err(format!("window {w:?} ends before it starts"));
                }
                Ok((a, b))
            })
            .collect()
    }
    fn render(&self) -> String {
        if self.is_empty() {
            return "none".into();
        }
        self.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(",")
    }
}

macro_rules! scenario_keys {
    ($($key:literal => $($field:tt).+;)*) => {
        /// Every accepted key, in dump order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl Scenario {
            fn set_raw(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                let bad = |reason: String| ConfigError::BadValue { key: key.into(), value: value.into(), reason };
                match key {
                    $($key => self.$($field).+ = ConfigValue::parse_value(value).map_err(bad)?,)*
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                Ok(())
            }

            /// All keys with their current values, one `key = value` per line.
            pub fn dump(&self) -> String {
                let mut out = String::new();
                $(let _ = writeln!(out, "{} = {}", $key, self.$($field).+.render());)*
                out
            }
        }
    };
}

scenario_keys! {
    "track" => track;
    "track.closed" => closed;
    "mode" => mode;
    "duration_s" => duration_s;
    "seed" => sensors.seed;
    "start_speed" => start_speed;
    "kill_at_s" => kill_at_s;
    "origin.lat_rad" => origin_lat;
    "origin.lon_rad" => origin_lon;
    "rates.physics_hz" => rates.physics;
    "rates.control_hz" => rates.control;
    "rates.perception_hz" => rates.perception;
    "rates.command_hz" => rates.command;
    "rates.feedback_hz" => rates.feedback;
    "vehicle.wheelbase" => vehicle.wheelbase;
    "vehicle.v_time_constant" => vehicle.v_time_constant;
    "vehicle.max_speed" => vehicle.max_speed;
    "vehicle.half_width" => vehicle_half_width;
    "limits.a_lat_max" => limits.a_lat_max;
    "limits.a_lon_max" => limits.a_lon_max;
    "limits.v_max" => limits.v_max;
    "raceline.spacing" => raceline_spacing;
    "raceline.optimize" => optimize;
    "optimizer.reg" => optimizer.reg;
    "optimizer.max_iter" => optimizer.max_iter;
    "optimizer.rel_tol" => optimizer.rel_tol;
    "pursuit.l_min" => pursuit.l_min;
    "pursuit.l_max" => pursuit.l_max;
    "pursuit.v_max" => pursuit.v_max;
    "pursuit.kp" => pursuit.kp;
    "pursuit.kd" => pursuit.kd;
    "pursuit.delta_max" => pursuit.delta_max;
    "ftg.epsilon" => ftg.epsilon;
    "ftg.v_min" => ftg.v_min;
    "ftg.v_max" => ftg.v_max;
    "ftg.delta_max" => ftg.delta_max;
    "ftg.speed_law" => ftg.law;
    "ekf.process_noise" => ekf.process_noise_scale;
    "ekf.earth_radius" => ekf.earth_radius;
    "sensors.gnss_sigma" => sensors.gnss_sigma;
    "sensors.gnss_rate" => sensors.gnss_rate;
    "sensors.gnss_dropout" => sensors.gnss_dropout_windows;
    "sensors.imu_sigma_yaw" => sensors.imu_sigma_yaw;
    "sensors.imu_sigma_rate" => sensors.imu_sigma_rate;
    "sensors.imu_rate" => sensors.imu_rate;
    "perception.tau" => perception.tau;
    "perception.sigma" => perception.sigma;
    "perception.morph_radius" => perception.morph_radius;
    "bev.width" => bev.width;
    "bev.height" => bev.height;
    "bev.meters_per_px" => bev.meters_per_px;
    "bev.vehicle_u" => bev.vehicle_px.0;
    "bev.vehicle_v" => bev.vehicle_px.1;
    "bev.max_range" => bev.max_range;
    "camera.width" => camera_width;
    "camera.height" => camera_height;
    "drivebus.tbws_kp" => drivebus.tbws_kp;
    "drivebus.tbws_ki" => drivebus.tbws_ki;
    "drivebus.sbws_rate_max" => drivebus.sbws_rate_max;
    "drivebus.sbws_time_constant" => drivebus.sbws_time_constant;
    "drivebus.ebs_time_constant" => drivebus.ebs_time_constant;
    "drivebus.source_timeout" => drivebus.source_timeout;
    "log.frames" => record_frames;
}

impl Scenario {
    /// Sets one key. A relative `track` path is resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        self.set_raw(key, value)?;
        if key == "track" {
            if let (Some(base), Some(p)) = (base, self.track.as_ref()) {
                if p.is_relative() {
                    self.track = Some(base.join(p));
                }
            }
        }
        Ok(())
    }

    /// Applies `KEY=VALUE` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: o.to_string() })?;
            self.set(k.trim(), v.trim(), None)?;
        }
        Ok(())
    }

    /// Parses scenario text on top of the defaults.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut s = Scenario::default();
        s.merge(text, base)?;
        s.validate()?;
        Ok(s)
    }

    pub fn merge(&mut self, text: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.to_string() })?;
            self.set(k.trim(), v.trim(), base)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("duration_s", self.duration_s >= 0.0),
            ("rates", [self.rates.physics, self.rates.control, self.rates.perception, self.rates.command, self.rates.feedback].iter().all(|&r| r > 0.0)),
            ("rates.physics_hz", 1.0 / self.rates.physics <= 0.05),
            ("vehicle", self.vehicle.wheelbase > 0.0 && self.vehicle.v_time_constant > 0.0 && self.vehicle.max_speed > 0.0),
            ("sensors", self.sensors.gnss_rate > 0.0 && self.sensors.imu_rate > 0.0 && self.sensors.gnss_sigma >= 0.0 && self.sensors.imu_sigma_yaw >= 0.0 && self.sensors.imu_sigma_rate >= 0.0),
            ("limits", self.limits.a_lat_max > 0.0 && self.limits.a_lon_max > 0.0 && self.limits.v_max > 0.0),
            ("raceline.spacing", self.raceline_spacing > 0.0),
            ("pursuit", self.pursuit.l_min > 0.0 && self.pursuit.l_max >= self.pursuit.l_min && self.pursuit.v_max > 0.0 && self.pursuit.delta_max > 0.0),
            ("ftg", self.ftg.epsilon > 0.0 && self.ftg.v_max >= self.ftg.v_min && self.ftg.delta_max > 0.0),
            ("bev", self.bev.width > 0 && self.bev.height > 0 && self.bev.meters_per_px > 0.0 && self.bev.max_range > 0.0),
            ("camera", self.camera_width > 0 && self.camera_height > 0),
        ];
        for (key, ok) in positive {
            if !ok {
                return Err(ConfigError::Invalid { key, reason: "out of range".into() });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_parses_back() {
        let mut s = Scenario::default();
        s.sensors.gnss_dropout_windows = vec![(1.0, 2.5), (4.0, 4.25)];
        s.kill_at_s = Some(3.0);
        s.track = Some(PathBuf::from("/tmp/t.csv"));
        let back = Scenario::parse(&s.dump(), None).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.dump().lines().count(), KEYS.len());
    }

    #[test]
    fn unknown_and_malformed() {
        assert_eq!(Scenario::parse("ftg.epsylon = 3", None), Err(ConfigError::UnknownKey("ftg.epsylon".into())));
        assert!(matches!(Scenario::parse("ftg.epsilon = x", None), Err(ConfigError::BadValue { .. })));
        assert!(matches!(Scenario::parse("\n\nftg.epsilon", None), Err(ConfigError::Syntax { line: 3, .. })));
        assert!(matches!(Scenario::parse("rates.physics_hz = 10", None), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn overrides_and_relative_track() {
        let mut s = Scenario::parse("# c\ntrack = oval.csv  # trailing\nmode = ftg\n", Some(Path::new("/data"))).unwrap();
        assert_eq!(s.track.as_deref(), Some(Path::new("/data/oval.csv")));
        assert_eq!(s.mode, Mode::Ftg);
        s.apply_overrides(&["ftg.epsilon=3.0", "sensors.gnss_dropout = 1:3"]).unwrap();
        assert_eq!(s.ftg.epsilon, 3.0);
        assert_eq!(s.sensors.gnss_dropout_windows, vec![(1.0, 3.0)]);
        assert!(s.apply_overrides(&["nonsense"]).is_err());
    }
}
