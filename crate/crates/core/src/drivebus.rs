//! Simulated by-wire drive bus: command and feedback frame codecs, the main
//! controller's mode arbitration, and the throttle, steering and brake ECU
//! models.
//!
//! Command frame `0x100`, little-endian:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 0–1   | steering, i16 milliradians              |
//! | 2–3   | speed, i16 mm/s                         |
//! | 4–5   | brake, u16 in 0.01 % units              |
//! | 6     | bit0 kill, bits1–2 mode                 |
//! | 7     | sequence counter, mod 256               |
//!
//! Feedback frames `0x201` (throttle: i16 mm/s, u16 duty 0.01 %), `0x202`
//! (steering: i16 mrad) and `0x203` (brake: u16 pressure 0.01 %) carry their
//! own sequence counter in byte 7.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const COMMAND_ID: u16 = 0x100;
pub const TBWS_FEEDBACK_ID: u16 = 0x201;
pub const SBWS_FEEDBACK_ID: u16 = 0x202;
pub const EBS_FEEDBACK_ID: u16 = 0x203;
pub const MAX_STEERING: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BusError {
    #[error("identifier {0:#x} exceeds 11 bits")]
    BadId(u16),
    #[error("unexpected frame id {0:#05x}")]
    UnexpectedId(u16),
    #[error("payload must be 8 bytes, got {0}")]
    BadLength(usize),
    #[error("unknown drive mode {0}")]
    BadMode(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveMode {
    Manual = 0,
    Remote = 1,
    Autonomous = 2,
}

impl DriveMode {
    pub const ALL: [DriveMode; 3] = [DriveMode::Manual, DriveMode::Remote, DriveMode::Autonomous];

    fn from_bits(b: u8) -> Result<Self, BusError> {
        match b {
            0 => Ok(DriveMode::Manual),
            1 => Ok(DriveMode::Remote),
            2 => Ok(DriveMode::Autonomous),
            other => Err(BusError::BadMode(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveCommand {
    pub steering: f64,
    pub speed: f64,
    pub brake: f64,
    pub mode: DriveMode,
    pub kill: bool,
}

impl DriveCommand {
    pub fn idle(mode: DriveMode) -> Self {
        DriveCommand { steering: 0.0, speed: 0.0, brake: 0.0, mode, kill: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanFrame {
    id: u16,
    pub data: [u8; 8],
}

impl CanFrame {
    pub fn new(id: u16, data: &[u8]) -> Result<Self, BusError> {
        if id >= 0x800 {
            return Err(BusError::BadId(id));
        }
        let data: [u8; 8] = data.try_into().map_err(|_| BusError::BadLength(data.len()))?;
        Ok(CanFrame { id, data })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn seq(&self) -> u8 {
        self.data[7]
    }

    pub fn payload_hex(&self) -> String {
        self.data.iter().map(|b| format!("{b:02X}")).collect()
    }
}

fn sat_i16(x: f64) -> i16 {
    x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

fn sat_u16(x: f64) -> u16 {
    x.round().clamp(0.0, u16::MAX as f64) as u16
}

fn fraction_to_wire(x: f64) -> u16 {
    sat_u16(x * 10_000.0).min(10_000)
}

/// Encodes a command; values beyond the wire range saturate.
pub fn encode_command(cmd: &DriveCommand, seq: u8) -> CanFrame {
    let mut d = [0u8; 8];
    d[0..2].copy_from_slice(&sat_i16(cmd.steering * 1000.0).to_le_bytes());
    d[2..4].copy_from_slice(&sat_i16(cmd.speed * 1000.0).to_le_bytes());
    d[4..6].copy_from_slice(&fraction_to_wire(cmd.brake).to_le_bytes());
    d[6] = (cmd.kill as u8) | ((cmd.mode as u8) << 1);
    d[7] = seq;
    CanFrame { id: COMMAND_ID, data: d }
}

/// Returns the command and its sequence counter.
pub fn decode_command(frame: &CanFrame) -> Result<(DriveCommand, u8), BusError> {
    if frame.id != COMMAND_ID {
        return Err(BusError::UnexpectedId(frame.id));
    }
    let d = &frame.data;
    let cmd = DriveCommand {
        steering: i16::from_le_bytes([d[0], d[1]]) as f64 / 1000.0,
        speed: i16::from_le_bytes([d[2], d[3]]) as f64 / 1000.0,
        brake: u16::from_le_bytes([d[4], d[5]]) as f64 / 10_000.0,
        mode: DriveMode::from_bits((d[6] >> 1) & 0b11)?,
        kill: d[6] & 1 != 0,
    };
    Ok((cmd, d[7]))
}

pub fn decode_command_bytes(id: u16, payload: &[u8]) -> Result<(DriveCommand, u8), BusError> {
    decode_command(&CanFrame::new(id, payload)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Throttle { speed: f64, duty: f64 },
    Steering { angle: f64 },
    Brake { pressure: f64 },
}

pub fn encode_feedback(fb: &Feedback, seq: u8) -> CanFrame {
    let mut d = [0u8; 8];
    let id = match *fb {
        Feedback::Throttle { speed, duty } => {
            d[0..2].copy_from_slice(&sat_i16(speed * 1000.0).to_le_bytes());
            d[2..4].copy_from_slice(&fraction_to_wire(duty).to_le_bytes());
            TBWS_FEEDBACK_ID
        }
        Feedback::Steering { angle } => {
            d[0..2].copy_from_slice(&sat_i16(angle * 1000.0).to_le_bytes());
            SBWS_FEEDBACK_ID
        }
        Feedback::Brake { pressure } => {
            d[0..2].copy_from_slice(&fraction_to_wire(pressure).to_le_bytes());
            EBS_FEEDBACK_ID
        }
    };
    d[7] = seq;
    CanFrame { id, data: d }
}

pub fn decode_feedback(frame: &CanFrame) -> Result<(Feedback, u8), BusError> {
    let d = &frame.data;
    let fb = match frame.id {
        TBWS_FEEDBACK_ID => Feedback::Throttle {
            speed: i16::from_le_bytes([d[0], d[1]]) as f64 / 1000.0,
            duty: u16::from_le_bytes([d[2], d[3]]) as f64 / 10_000.0,
        },
        SBWS_FEEDBACK_ID => Feedback::Steering { angle: i16::from_le_bytes([d[0], d[1]]) as f64 / 1000.0 },
        EBS_FEEDBACK_ID => Feedback::Brake { pressure: u16::from_le_bytes([d[0], d[1]]) as f64 / 10_000.0 },
        other => return Err(BusError::UnexpectedId(other)),
    };
    Ok((fb, d[7]))
}

/// Modulo-256 frame counter on the sending side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeqCounter(u8);

impl SeqCounter {
    pub fn next(&mut self) -> u8 {
        let s = self.0;
        self.0 = self.0.wrapping_add(1);
        s
    }
}

/// Receiver-side counter check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SeqTracker {
    last: Option<u8>,
    pub dropped: u64,
}

impl SeqTracker {
    /// Records `seq` and returns the number of frames missing before it.
    pub fn observe(&mut self, seq: u8) -> u8 {
        let missing = match self.last {
            Some(prev) => seq.wrapping_sub(prev).wrapping_sub(1),
            None => 0,
        };
        self.last = Some(seq);
        self.dropped += missing as u64;
        missing
    }
}

/// One delivered frame with its bus time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub frame: CanFrame,
}

/// Tick-driven bus: frames queued during a tick are delivered together at the
/// next [`CanBus::deliver`], lowest identifier first.
#[derive(Debug, Clone, Default)]
pub struct CanBus {
    pending: Vec<CanFrame>,
    trace: Vec<TraceRecord>,
    record: bool,
}

impl CanBus {
    pub fn new(record: bool) -> Self {
        CanBus { pending: Vec::new(), trace: Vec::new(), record }
    }

    pub fn send(&mut self, frame: CanFrame) {
        self.pending.push(frame);
    }

    pub fn deliver(&mut self, t: f64) -> Vec<CanFrame> {
        let mut frames = std::mem::take(&mut self.pending);
        frames.sort_by_key(|f| f.id);
        if self.record {
            self.trace.extend(frames.iter().map(|&frame| TraceRecord { t, frame }));
        }
        frames
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }
}

/// ECU and arbitration tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivebusParams {
    pub tbws_kp: f64,
    pub tbws_ki: f64,
    pub sbws_rate_max: f64,
    pub sbws_time_constant: f64,
    pub ebs_time_constant: f64,
    /// Silence after which a missing source triggers the zero-speed failsafe.
    pub source_timeout: f64,
}

impl Default for DrivebusParams {
    fn default() -> Self {
        DrivebusParams { tbws_kp: 0.3, tbws_ki: 0.5, sbws_rate_max: 2.0, sbws_time_constant: 0.1, ebs_time_constant: 0.2, source_timeout: 0.5 }
    }
}

/// Commands from the three sources during one tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SourceInputs {
    pub manual: Option<DriveCommand>,
    pub remote: Option<DriveCommand>,
    pub autonomous: Option<DriveCommand>,
}

impl SourceInputs {
    fn get(&self, mode: DriveMode) -> Option<DriveCommand> {
        match mode {
            DriveMode::Manual => self.manual,
            DriveMode::Remote => self.remote,
            DriveMode::Autonomous => self.autonomous,
        }
    }
}

/// Main control system: forwards the source matching the active mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mcs {
    pub mode: DriveMode,
    timeout: f64,
    last: Option<(DriveCommand, f64)>,
}

impl Mcs {
    pub fn new(mode: DriveMode, timeout: f64) -> Self {
        Mcs { mode, timeout, last: None }
    }

    pub fn set_mode(&mut self, mode: DriveMode) {
        if mode != self.mode {
            self.mode = mode;
            self.last = None;
        }
    }

    /// Missing input holds the last command for up to the timeout, then
    /// commands zero speed. `kill` forces zero speed and full brake.
    pub fn arbitrate(&mut self, t: f64, inputs: &SourceInputs, kill: bool) -> DriveCommand {
        let mode = self.mode;
        let selected = match inputs.get(mode) {
            Some(cmd) => {
                self.last = Some((cmd, t));
                DriveCommand { mode, ..cmd }
            }
            None => match self.last {
                Some((cmd, at)) if t - at <= self.timeout => DriveCommand { mode, ..cmd },
                Some((cmd, _)) => DriveCommand { steering: cmd.steering, ..DriveCommand::idle(mode) },
                None => DriveCommand::idle(mode),
            },
        };
        if kill || selected.kill {
            DriveCommand { speed: 0.0, brake: 1.0, kill: true, ..selected }
        } else {
            selected
        }
    }
}

/// Throttle ECU: PI speed loop producing a duty cycle in `[0, 1]`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tbws {
    pub integral: f64,
}

impl Tbws {
    /// The integrator only accumulates while the output is unsaturated.
    pub fn step(&mut self, target: f64, measured: f64, dt: f64, params: &DrivebusParams) -> f64 {
        let e = target - measured;
        let trial = params.tbws_kp * e + params.tbws_ki * (self.integral + e * dt);
        if (0.0..=1.0).contains(&trial) {
            self.integral += e * dt;
        }
        (params.tbws_kp * e + params.tbws_ki * self.integral).clamp(0.0, 1.0)
    }
}

/// Steering ECU: rate-limited first-order servo.
pub fn sbws_step(target: f64, measured: f64, dt: f64, params: &DrivebusParams) -> f64 {
    let target = target.clamp(-MAX_STEERING, MAX_STEERING);
    let alpha = 1.0 - (-dt / params.sbws_time_constant).exp();
    let max_delta = params.sbws_rate_max * dt;
    (measured + ((target - measured) * alpha).clamp(-max_delta, max_delta)).clamp(-MAX_STEERING, MAX_STEERING)
}

/// Brake ECU: first-order pressure response.
pub fn ebs_step(target: f64, measured: f64, dt: f64, params: &DrivebusParams) -> f64 {
    let alpha = 1.0 - (-dt / params.ebs_time_constant).exp();
    let target = target.clamp(0.0, 1.0);
    (measured + (target - measured) * alpha).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(steering: f64, speed: f64, brake: f64) -> DriveCommand {
        DriveCommand { steering, speed, brake, mode: DriveMode::Autonomous, kill: false }
    }

    #[test]
    fn encode_examples() {
        let f = encode_command(&cmd(0.0, 0.0, 0.0), 9);
        assert_eq!(&f.data[0..6], &[0; 6]);
        assert_eq!(f.id(), 0x100);
        let f = encode_command(&cmd(1.0, 0.0, 0.0), 0);
        assert_eq!(&f.data[0..2], &[0xE8, 0x03]);
        let (d, _) = decode_command(&f).unwrap();
        assert_eq!(d.steering, 1.0);
    }

    #[test]
    fn decode_examples() {
        let (d, seq) = decode_command_bytes(0x100, &[0; 8]).unwrap();
        assert_eq!(d, DriveCommand::idle(DriveMode::Manual));
        assert_eq!(seq, 0);
        let err = decode_command_bytes(0x201, &[0; 8]).unwrap_err();
        assert_eq!(err.to_string(), "unexpected frame id 0x201");
        assert_eq!(CanFrame::new(0x100, &[0; 7]), Err(BusError::BadLength(7)));
        assert_eq!(CanFrame::new(0x800, &[0; 8]), Err(BusError::BadId(0x800)));
        assert_eq!(decode_command_bytes(0x100, &[0, 0, 0, 0, 0, 0, 0b110, 0]), Err(BusError::BadMode(3)));
    }

    #[test]
    fn saturates_instead_of_wrapping() {
        let f = encode_command(&cmd(0.0, 40.0, 2.0), 0);
        let (d, _) = decode_command(&f).unwrap();
        assert_eq!(d.speed, 32.767);
        assert_eq!(d.brake, 1.0);
    }

    #[test]
    fn feedback_round_trip() {
        for fb in [Feedback::Throttle { speed: 3.217, duty: 0.4 }, Feedback::Steering { angle: -0.25 }, Feedback::Brake { pressure: 0.63 }] {
            let (back, seq) = decode_feedback(&encode_feedback(&fb, 200)).unwrap();
            assert_eq!(back, fb);
            assert_eq!(seq, 200);
        }
        assert!(decode_feedback(&encode_command(&cmd(0.0, 0.0, 0.0), 0)).is_err());
    }

    #[test]
    fn bus_delivers_by_priority() {
        let mut bus = CanBus::new(true);
        bus.send(encode_feedback(&Feedback::Brake { pressure: 0.0 }, 0));
        bus.send(encode_command(&cmd(0.0, 0.0, 0.0), 0));
        bus.send(encode_feedback(&Feedback::Steering { angle: 0.0 }, 0));
        let ids: Vec<u16> = bus.deliver(0.01).iter().map(|f| f.id()).collect();
        assert_eq!(ids, vec![0x100, 0x202, 0x203]);
        assert_eq!(bus.trace().len(), 3);
        assert!(bus.deliver(0.02).is_empty());
    }

    #[test]
    fn sequence_gaps_are_detected() {
        let mut tx = SeqCounter::default();
        let frames: Vec<CanFrame> = (0..600).map(|_| encode_command(&cmd(0.0, 1.0, 0.0), tx.next())).collect();
        let mut rx = SeqTracker::default();
        let mut deleted = 0;
        for (i, f) in frames.iter().enumerate() {
            if i % 97 == 5 || i == 256 {
                deleted += 1;
                continue;
            }
            rx.observe(f.seq());
        }
        assert_eq!(rx.dropped, deleted);
    }

    #[test]
    fn arbitration() {
        let mut mcs = Mcs::new(DriveMode::Autonomous, 0.5);
        let auto = cmd(0.2, 3.0, 0.0);
        let inputs = SourceInputs { autonomous: Some(auto), ..Default::default() };
        assert_eq!(mcs.arbitrate(0.0, &inputs, false), auto);
        let killed = mcs.arbitrate(0.01, &inputs, true);
        assert_eq!((killed.speed, killed.brake, killed.kill), (0.0, 1.0, true));

        let mut mcs = Mcs::new(DriveMode::Remote, 0.5);
        let remote = DriveCommand { mode: DriveMode::Remote, ..cmd(0.1, 2.0, 0.0) };
        mcs.arbitrate(0.0, &SourceInputs { remote: Some(remote), ..Default::default() }, false);
        assert_eq!(mcs.arbitrate(0.4, &SourceInputs::default(), false).speed, 2.0);
        assert_eq!(mcs.arbitrate(0.6, &SourceInputs::default(), false).speed, 0.0);
    }

    #[test]
    fn tbws_examples() {
        let p = DrivebusParams::default();
        let mut t = Tbws::default();
        assert_eq!(t.step(2.0, 2.0, 0.01, &p), 0.0);
        let mut t = Tbws::default();
        for _ in 0..100 {
            assert_eq!(t.step(50.0, 0.0, 0.01, &p), 1.0);
        }
        assert_eq!(t.integral, 0.0);
    }

    #[test]
    fn tbws_closed_loop_settles() {
        // first-order plant, gain 8 m/s at full duty, tau 1 s
        let p = DrivebusParams::default();
        let mut t = Tbws::default();
        let (mut v, dt) = (0.0, 0.01);
        let mut settled_at = None;
        for k in 0..1000 {
            let duty = t.step(3.0, v, dt, &p);
            v += (8.0 * duty - v) * (1.0 - (-dt / 1.0f64).exp());
            let time = (k + 1) as f64 * dt;
            if (v - 3.0).abs() > 0.02 * 3.0 {
                settled_at = None;
            } else if settled_at.is_none() {
                settled_at = Some(time);
            }
        }
        assert!(settled_at.unwrap() < 5.0, "{settled_at:?}");
    }

    #[test]
    fn sbws_examples() {
        let p = DrivebusParams::default();
        assert_eq!(sbws_step(0.3, 0.3, 0.01, &p), 0.3);
        let mut a = 0.0;
        for _ in 0..25 {
            let next = sbws_step(1.0, a, 0.01, &p);
            assert!((next - a).abs() <= p.sbws_rate_max * 0.01 + 1e-15);
            a = next;
        }
        assert!(a <= 0.5 + 1e-12);
    }

    #[test]
    fn ebs_examples() {
        let p = DrivebusParams::default();
        assert_eq!(ebs_step(0.0, 0.0, 0.01, &p), 0.0);
        let mut x = 0.0;
        for _ in 0..20 {
            x = ebs_step(1.0, x, 0.01, &p);
        }
        assert!((x - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }
}
