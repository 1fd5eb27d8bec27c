use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Mode, Scenario};
use crate::control::{pursuit_step, ControlError, PursuitState, VehiclePose};
use crate::drivebus::{
    decode_command, decode_feedback, ebs_step, encode_command, encode_feedback, sbws_step, CanBus, DriveCommand, DriveMode, Feedback, Mcs,
    SeqCounter, SeqTracker, SourceInputs, Tbws, TraceRecord, COMMAND_ID,
};
use crate::localization::{fuse_step, EkfState, GeoFix, LocalizationError, MotionInput, PoseRow};
use crate::perception::{perceive, CameraModel, PerceptionError};
use crate::planning::{ftg_step, DepthScan};
use crate::track::{build_raceline, optimize_min_curvature, AlphaVector, Raceline, Track, TrackError};

use super::{bicycle_step, render_scene, yaw_rate, Sensors, TrackGeometry, VehicleState};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error("raceline optimization failed: {0}")]
    Optimize(String),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

/// Ground truth and estimate at one physics tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub psi_rad: f64,
    pub v_mps: f64,
    pub steering_rad: f64,
    pub est_x_m: f64,
    pub est_y_m: f64,
    pub est_psi_rad: f64,
    pub cross_track_m: f64,
    pub on_track: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandRow {
    pub t_s: f64,
    pub steering_rad: f64,
    pub speed_mps: f64,
    pub gap_i: Option<usize>,
    pub gap_j: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub t_s: f64,
    pub angle_rad: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLogs {
    pub trajectory: Vec<TrajectoryRow>,
    pub poses: Vec<PoseRow>,
    pub commands: Vec<CommandRow>,
    pub scans: Vec<ScanRow>,
    pub frames: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: Mode,
    pub duration_s: f64,
    /// Time to complete the first lap, or to reach the end of an open track.
    pub lap_time: Option<f64>,
    pub max_cross_track_error: f64,
    pub mean_cross_track_error: f64,
    /// Number of times the vehicle center left the track.
    pub boundary_violations: usize,
    pub safety_stops: usize,
    pub dropped_frames: u64,
    pub progress_m: f64,
    #[serde(skip)]
    pub logs: RunLogs,
}

impl RunReport {
    pub fn clean(&self) -> bool {
        self.boundary_violations == 0 && self.safety_stops == 0
    }
}

/// Optimized (or centerline) raceline with its velocity profile.
pub fn build_reference(scenario: &Scenario, track: &Track<f64>) -> Result<Raceline<f64>, SimError> {
    let alpha = if scenario.optimize {
        optimize_min_curvature(track, &scenario.optimizer).map_err(|e| SimError::Optimize(e.to_string()))?
    } else {
        AlphaVector::zeros(track.len())
    };
    Ok(build_raceline(track, &alpha, scenario.raceline_spacing, &scenario.limits)?)
}

fn period(physics: f64, rate: f64) -> usize {
    ((physics / rate).round() as usize).max(1)
}

const SEARCH_WINDOW: usize = 24;

/// Runs one scenario on `track`. Every command passes through the mode
/// arbiter, the command frame codec and the bus before the ECUs act on it.
pub fn run_closed_loop(scenario: &Scenario, track: &Track<f64>) -> Result<RunReport, SimError> {
    let dt = 1.0 / scenario.rates.physics;
    let steps = (scenario.duration_s * scenario.rates.physics).round() as usize;
    let ctrl_period = period(scenario.rates.physics, scenario.rates.control);
    let perc_period = period(scenario.rates.physics, scenario.rates.perception);
    let cmd_period = period(scenario.rates.physics, scenario.rates.command);
    let fb_period = period(scenario.rates.physics, scenario.rates.feedback);
    let imu_period = period(scenario.rates.physics, scenario.sensors.imu_rate);
    let gnss_period = period(scenario.rates.physics, scenario.sensors.gnss_rate);

    let track_geom = TrackGeometry::from_track(track, 0.5)?;
    let raceline = match scenario.mode {
        Mode::Pursuit => Some(build_reference(scenario, track)?),
        Mode::Ftg => None,
    };
    let (reference, start, heading) = match &raceline {
        Some(r) => {
            let g = TrackGeometry::from_points(&r.positions(), r.closed, 5.0);
            let (p, h) = g.start_pose();
            (g, p, h)
        }
        None => {
            let (p, h) = track_geom.start_pose();
            (track_geom.clone(), p, h)
        }
    };
    let camera = CameraModel::covering(&scenario.bev, scenario.camera_width, scenario.camera_height);

    let origin = GeoFix::new(scenario.origin_lat, scenario.origin_lon, 0.0);
    let mut sensors = Sensors::new(scenario.sensors.clone(), origin, scenario.ekf.earth_radius);
    let mut state = VehicleState { x: start.x, y: start.y, psi: heading, v: scenario.start_speed.max(0.0) };
    let mut ekf = EkfState::new(state.x, state.y, state.psi);
    let mut last_input = MotionInput { v: state.v, omega: 0.0, dt: imu_period as f64 * dt };
    let mut pending_fix: Option<GeoFix<f64>> = None;

    let mut bus = CanBus::new(scenario.record_frames);
    let mut mcs = Mcs::new(DriveMode::Autonomous, scenario.drivebus.source_timeout);
    let mut cmd_seq = SeqCounter::default();
    let mut fb_seq = [SeqCounter::default(); 3];
    let mut cmd_rx = SeqTracker::default();
    let mut fb_rx = [SeqTracker::default(); 3];
    let mut ecu_cmd = DriveCommand::idle(DriveMode::Autonomous);
    let mut tbws = Tbws::default();
    let (mut steer_angle, mut brake_pressure) = (0.0, 0.0);
    let mut meas_speed = state.v;

    let mut pursuit_state = PursuitState::default();
    let mut pending_auto: Option<DriveCommand> = None;
    let mut scan: Option<DepthScan<f64>> = None;
    let mut stopped = false;

    let mut logs = RunLogs::default();
    let (mut track_hint, mut ref_hint) = (0usize, 0usize);
    let mut prev_s: Option<f64> = None;
    let mut progress = 0.0;
    let mut lap_time = None;
    let (mut was_off, mut violations, mut safety_stops) = (false, 0usize, 0usize);
    let (mut max_err, mut sum_err) = (0.0f64, 0.0);

    for k in 0..steps {
        let t = k as f64 * dt;

        // metrics on the state at the start of the tick
        let pos = state.position();
        let on = track_geom.nearest_local(&pos, track_hint, SEARCH_WINDOW);
        track_hint = on.segment;
        let rf = reference.nearest_local(&pos, ref_hint, SEARCH_WINDOW);
        ref_hint = rf.segment;
        let off = !on.on_track();
        if off && !was_off {
            violations += 1;
        }
        was_off = off;
        if let Some(ps) = prev_s {
            let mut ds = on.s - ps;
            if track_geom.is_closed() {
                let l = track_geom.length();
                ds -= l * (ds / l).round();
            }
            progress += ds;
        }
        prev_s = Some(on.s);
        let finished = if track_geom.is_closed() { progress >= track_geom.length() } else { on.s >= track_geom.length() - 0.05 };
        if lap_time.is_none() && finished {
            lap_time = Some(t);
        }
        max_err = max_err.max(rf.distance);
        sum_err += rf.distance;
        logs.trajectory.push(TrajectoryRow {
            t_s: t,
            x_m: state.x,
            y_m: state.y,
            psi_rad: state.psi,
            v_mps: state.v,
            steering_rad: steer_angle,
            est_x_m: ekf.mean[0],
            est_y_m: ekf.mean[1],
            est_psi_rad: ekf.mean[2],
            cross_track_m: rf.lateral,
            on_track: !off,
        });

        // bus traffic queued during the previous tick
        for frame in bus.deliver(t) {
            if frame.id() == COMMAND_ID {
                if let Ok((cmd, seq)) = decode_command(&frame) {
                    cmd_rx.observe(seq);
                    ecu_cmd = cmd;
                }
            } else if let Ok((fb, seq)) = decode_feedback(&frame) {
                match fb {
                    Feedback::Throttle { speed, .. } => {
                        fb_rx[0].observe(seq);
                        meas_speed = speed.max(0.0);
                    }
                    Feedback::Steering { .. } => {
                        fb_rx[1].observe(seq);
                    }
                    Feedback::Brake { .. } => {
                        fb_rx[2].observe(seq);
                    }
                }
            }
        }

        // sensors and state estimation
        if k % gnss_period == 0 {
            pending_fix = sensors.gnss_sample(&state, t).or(pending_fix);
        }
        if k % imu_period == 0 {
            let imu = sensors.imu_sample(&state, yaw_rate(state.v, steer_angle, &scenario.vehicle));
            if k > 0 {
                ekf = fuse_step(&ekf, &last_input, pending_fix.as_ref(), &imu, &origin, &scenario.ekf)?;
                pending_fix = None;
                logs.poses.push(PoseRow::from_state(t, &ekf));
            }
            last_input = MotionInput { v: meas_speed, omega: imu.yaw_rate, dt: imu_period as f64 * dt };
        }

        if scenario.mode == Mode::Ftg && k % perc_period == 0 {
            let img = render_scene(&track_geom, &state, &camera, &scenario.bev);
            let out = perceive(&img, &camera.homography, &scenario.perception, &scenario.bev)?;
            logs.scans.extend(out.scan.angles.iter().zip(&out.scan.distances).map(|(&a, &d)| ScanRow { t_s: t, angle_rad: a, distance_m: d }));
            scan = Some(out.scan);
        }

        if k % ctrl_period == 0 {
            let (steering, speed, gap, stop) = match (&raceline, &scan) {
                (Some(r), _) => {
                    let pose = VehiclePose { x: ekf.mean[0], y: ekf.mean[1], psi: ekf.mean[2], v: meas_speed };
                    match pursuit_step(r, &pose, &mut pursuit_state, ctrl_period as f64 * dt, &scenario.pursuit) {
                        Ok(c) => (c.steering, c.target_speed, None, false),
                        Err(ControlError::EndOfPath) | Err(ControlError::EmptyRaceline) => (0.0, 0.0, None, false),
                    }
                }
                (None, Some(s)) => {
                    let c = ftg_step(s, &scenario.ftg);
                    (c.steering, c.speed, c.chosen_gap, c.safety_stop)
                }
                (None, None) => (0.0, 0.0, None, false),
            };
            if stop && !stopped {
                safety_stops += 1;
            }
            stopped = stop;
            logs.commands.push(CommandRow { t_s: t, steering_rad: steering, speed_mps: speed, gap_i: gap.map(|g| g.i), gap_j: gap.map(|g| g.j) });
            let brake = if stop || speed == 0.0 { 1.0 } else { 0.0 };
            pending_auto = Some(DriveCommand { steering, speed, brake, mode: DriveMode::Autonomous, kill: false });
        }

        let killed = scenario.kill_at_s.is_some_and(|at| t >= at);
        if k % cmd_period == 0 {
            let inputs = SourceInputs { autonomous: pending_auto.take(), ..Default::default() };
            let cmd = mcs.arbitrate(t, &inputs, killed);
            bus.send(encode_command(&cmd, cmd_seq.next()));
        }

        // ECUs; the kill switch also cuts motor power directly
        let duty = if killed || ecu_cmd.kill {
            tbws.integral = 0.0;
            0.0
        } else {
            tbws.step(ecu_cmd.speed, state.v, dt, &scenario.drivebus)
        };
        steer_angle = sbws_step(ecu_cmd.steering, steer_angle, dt, &scenario.drivebus);
        brake_pressure = ebs_step(ecu_cmd.brake, brake_pressure, dt, &scenario.drivebus);
        if k % fb_period == 0 {
            bus.send(encode_feedback(&Feedback::Throttle { speed: state.v, duty }, fb_seq[0].next()));
            bus.send(encode_feedback(&Feedback::Steering { angle: steer_angle }, fb_seq[1].next()));
            bus.send(encode_feedback(&Feedback::Brake { pressure: brake_pressure }, fb_seq[2].next()));
        }

        state = bicycle_step(&state, steer_angle, duty * scenario.vehicle.max_speed, brake_pressure, &scenario.vehicle, dt);
    }

    logs.frames = bus.trace().to_vec();
    let dropped = cmd_rx.dropped + fb_rx.iter().map(|r| r.dropped).sum::<u64>();
    Ok(RunReport {
        mode: scenario.mode,
        duration_s: scenario.duration_s,
        lap_time,
        max_cross_track_error: max_err,
        mean_cross_track_error: if steps > 0 { sum_err / steps as f64 } else { 0.0 },
        boundary_violations: violations,
        safety_stops,
        dropped_frames: dropped,
        progress_m: progress,
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::shapes::{circle, oval};

    fn clean(mode: Mode, duration_s: f64) -> Scenario {
        let mut s = Scenario { mode, duration_s, ..Scenario::default() };
        s.sensors = s.sensors.noiseless();
        s
    }

    #[test]
    fn zero_duration_is_empty() {
        let track = circle::<f64>(20.0, 64, 2.0, 0.6, true);
        let r = run_closed_loop(&clean(Mode::Pursuit, 0.0), &track).unwrap();
        assert_eq!(r.logs, RunLogs::default());
        assert_eq!(r.boundary_violations, 0);
    }

    #[test]
    fn pursuit_oval_stays_on_track() {
        let track = oval::<f64>(30.0, 20.0, 1.0, 2.0, 0.6);
        let r = run_closed_loop(&clean(Mode::Pursuit, 60.0), &track).unwrap();
        eprintln!("{}", serde_json::to_string(&r).unwrap());
        assert_eq!(r.boundary_violations, 0);
        assert!(r.max_cross_track_error <= 0.5);
        assert!(r.lap_time.is_some());
    }

    #[test]
    fn pursuit_circle_error_bound() {
        let track = circle::<f64>(20.0, 80, 2.0, 0.6, true);
        let r = run_closed_loop(&clean(Mode::Pursuit, 40.0), &track).unwrap();
        eprintln!("{}", serde_json::to_string(&r).unwrap());
        assert!(r.max_cross_track_error <= 0.5);
    }

    #[test]
    fn ftg_corridor_completes() {
        let track = oval::<f64>(30.0, 15.0, 1.0, 2.0, 0.6);
        let r = run_closed_loop(&clean(Mode::Ftg, 60.0), &track).unwrap();
        eprintln!("{}", serde_json::to_string(&r).unwrap());
        assert_eq!(r.safety_stops, 0);
        assert_eq!(r.boundary_violations, 0);
    }
}
