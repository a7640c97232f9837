//! Motor CAN protocol: command/feedback codec, two-bus scheduling and the
//! emergency-stop state machine.
//!
//! Command frame, 8 data bytes, fields unsigned and big-endian (`p` =
//! position, `v` = velocity, `t` = feedforward torque; the number after
//! the colon is the bit index inside the field, MSB first):
//!
//! ```text
//! byte 0  p[15:8]
//! byte 1  p[7:0]
//! byte 2  v[11:4]
//! byte 3  v[3:0]  kp[11:8]
//! byte 4  kp[7:0]
//! byte 5  kd[11:4]
//! byte 6  kd[3:0] t[11:8]
//! byte 7  t[7:0]
//! ```
//!
//! i.e. the u64 `p<<48 | v<<36 | kp<<24 | kd<<12 | t` in big-endian order.
//! Feedback frame: byte 0 motor id, bytes 1-2 position (16 bits), then
//! velocity and torque as 12-bit fields packed like `v`/`kp` above
//! (bytes 3-5), byte 6 temperature (°C + 40), byte 7 error code.
//!
//! Each field maps `[min, max]` affinely onto `0..=2^bits-1`, rounding half
//! away from zero. The ranges are configuration, not protocol constants.

use std::sync::mpsc::Receiver;

use serde::{Deserialize, Serialize};

use crate::model::{MotorModelId, RobotSpec, JOINTS_PER_LEG, NUM_JOINTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CanError {
    #[error("malformed frame: expected 8 data bytes, got {0}")]
    MalformedFrame(usize),
    #[error("CAN id {0:#x} does not fit in 11 bits")]
    BadId(u32),
    #[error("invalid CAN config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CanFrame {
    id: u16,
    pub data: [u8; 8],
}

impl CanFrame {
    pub fn new(id: u16, data: [u8; 8]) -> Result<Self, CanError> {
        if id >= 0x800 {
            return Err(CanError::BadId(id as u32));
        }
        Ok(Self { id, data })
    }

    pub fn id(&self) -> u16 {
        self.id
    }

    pub fn hex(&self) -> String {
        self.data.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRange {
    pub min: f64,
    pub max: f64,
    pub bits: u32,
}

impl FieldRange {
    pub const fn new(min: f64, max: f64, bits: u32) -> Self {
        Self { min, max, bits }
    }

    pub fn lsb(&self) -> f64 {
        (self.max - self.min) / ((1u64 << self.bits) - 1) as f64
    }

    pub fn quantize(&self, x: f64) -> u32 {
        quantize(x, self.min, self.max, self.bits)
    }

    pub fn dequantize(&self, u: u32) -> f64 {
        dequantize(u, self.min, self.max, self.bits)
    }
}

/// `round((clamp(x) − min)/(max − min)·(2^bits − 1))`, half away from zero.
/// NaN maps to the bottom of the range.
pub fn quantize(x: f64, min: f64, max: f64, bits: u32) -> u32 {
    let top = ((1u64 << bits) - 1) as f64;
    let x = if x.is_nan() { min } else { x.clamp(min, max) };
    // f64::round rounds half away from zero
    ((x - min) / (max - min) * top).round().clamp(0.0, top) as u32
}

pub fn dequantize(u: u32, min: f64, max: f64, bits: u32) -> f64 {
    let top = ((1u64 << bits) - 1) as f64;
    min + (u as f64).min(top) / top * (max - min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodecRanges {
    pub position: FieldRange,
    pub velocity: FieldRange,
    pub kp: FieldRange,
    pub kd: FieldRange,
    pub torque: FieldRange,
}

impl CodecRanges {
    /// Datasheet-style ranges with the given velocity and torque bounds.
    pub fn with_limits(velocity: f64, torque: f64) -> Self {
        Self {
            position: FieldRange::new(-12.5, 12.5, 16),
            velocity: FieldRange::new(-velocity, velocity, 12),
            kp: FieldRange::new(0.0, 500.0, 12),
            kd: FieldRange::new(0.0, 5.0, 12),
            torque: FieldRange::new(-torque, torque, 12),
        }
    }

    pub fn validate(&self) -> Result<(), CanError> {
        let fields = [
            ("position", self.position, 16),
            ("velocity", self.velocity, 12),
            ("kp", self.kp, 12),
            ("kd", self.kd, 12),
            ("torque", self.torque, 12),
        ];
        for (name, f, bits) in fields {
            if !(f.min < f.max) || !f.min.is_finite() || !f.max.is_finite() || f.bits != bits {
                return Err(CanError::Config(format!("{name}: need finite min < max and {bits} bits")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotorCommand {
    pub position: f64,
    pub velocity: f64,
    pub kp: f64,
    pub kd: f64,
    pub torque: f64,
}

impl MotorCommand {
    /// Zero gains and zero feedforward: the motor produces no torque.
    pub const ZERO_TORQUE: MotorCommand = MotorCommand {
        position: 0.0,
        velocity: 0.0,
        kp: 0.0,
        kd: 0.0,
        torque: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorFeedback {
    pub motor_id: u8,
    pub position: f64,
    pub velocity: f64,
    pub torque: f64,
    pub temperature: i16,
    pub error: u8,
}

fn command_bits(cmd: &MotorCommand, r: &CodecRanges) -> u64 {
    let p = r.position.quantize(cmd.position) as u64;
    let v = r.velocity.quantize(cmd.velocity) as u64;
    let kp = r.kp.quantize(cmd.kp) as u64;
    let kd = r.kd.quantize(cmd.kd) as u64;
    let t = r.torque.quantize(cmd.torque) as u64;
    p << 48 | v << 36 | kp << 24 | kd << 12 | t
}

pub fn encode_command(cmd: &MotorCommand, ranges: &CodecRanges, motor_id: u16) -> Result<CanFrame, CanError> {
    CanFrame::new(motor_id, command_bits(cmd, ranges).to_be_bytes())
}

/// Raw field values `(p, v, kp, kd, t)` of a command payload.
pub fn command_fields(data: &[u8; 8]) -> [u32; 5] {
    let w = u64::from_be_bytes(*data);
    [
        (w >> 48) as u32 & 0xFFFF,
        (w >> 36) as u32 & 0xFFF,
        (w >> 24) as u32 & 0xFFF,
        (w >> 12) as u32 & 0xFFF,
        w as u32 & 0xFFF,
    ]
}

pub fn decode_command(data: &[u8], ranges: &CodecRanges) -> Result<MotorCommand, CanError> {
    let data: &[u8; 8] = data.try_into().map_err(|_| CanError::MalformedFrame(data.len()))?;
    let [p, v, kp, kd, t] = command_fields(data);
    Ok(MotorCommand {
        position: ranges.position.dequantize(p),
        velocity: ranges.velocity.dequantize(v),
        kp: ranges.kp.dequantize(kp),
        kd: ranges.kd.dequantize(kd),
        torque: ranges.torque.dequantize(t),
    })
}

/// Motor-side encoding of a status reply (used by tests and emulators).
pub fn encode_feedback(fb: &MotorFeedback, ranges: &CodecRanges) -> [u8; 8] {
    let p = ranges.position.quantize(fb.position);
    let v = ranges.velocity.quantize(fb.velocity);
    let t = ranges.torque.quantize(fb.torque);
    [
        fb.motor_id,
        (p >> 8) as u8,
        p as u8,
        (v >> 4) as u8,
        ((v & 0xF) << 4 | t >> 8) as u8,
        t as u8,
        (fb.temperature + 40).clamp(0, 255) as u8,
        fb.error,
    ]
}

pub fn decode_feedback(data: &[u8], ranges: &CodecRanges) -> Result<MotorFeedback, CanError> {
    if data.len() != 8 {
        return Err(CanError::MalformedFrame(data.len()));
    }
    let p = (data[1] as u32) << 8 | data[2] as u32;
    let v = (data[3] as u32) << 4 | (data[4] as u32) >> 4;
    let t = (data[4] as u32 & 0xF) << 8 | data[5] as u32;
    Ok(MotorFeedback {
        motor_id: data[0],
        position: ranges.position.dequantize(p),
        velocity: ranges.velocity.dequantize(v),
        torque: ranges.torque.dequantize(t),
        temperature: data[6] as i16 - 40,
        error: data[7],
    })
}

// ---------------------------------------------------------------- e-stop

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstopMode {
    Armed,
    Running,
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstopEvent {
    Arm,
    Start,
    StopPressed,
    Clear,
}

impl EstopEvent {
    pub const ALL: [EstopEvent; 4] = [EstopEvent::Arm, EstopEvent::Start, EstopEvent::StopPressed, EstopEvent::Clear];
}

/// Motor power relay follows the mode: closed only while running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EstopState {
    pub mode: EstopMode,
    pub relay_closed: bool,
}

impl EstopState {
    pub const ARMED: EstopState = EstopState {
        mode: EstopMode::Armed,
        relay_closed: false,
    };
    pub const RUNNING: EstopState = EstopState {
        mode: EstopMode::Running,
        relay_closed: true,
    };
    pub const STOPPED: EstopState = EstopState {
        mode: EstopMode::Stopped,
        relay_closed: false,
    };
}

/// Stop wins from anywhere; leaving Stopped takes an explicit Clear and
/// then a Start. Every other pair is a no-op (including `Arm`).
pub fn estop_transition(s: EstopState, event: EstopEvent) -> EstopState {
    use EstopEvent::*;
    use EstopMode::*;
    match (s.mode, event) {
        (_, StopPressed) => EstopState::STOPPED,
        (Armed, Start) => EstopState::RUNNING,
        (Stopped, Clear) => EstopState::ARMED,
        _ => s,
    }
}

// ---------------------------------------------------------------- buses

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusSlot {
    pub bus: u8,
    pub id: u16,
}

/// Bus assignment and ranges for the ten joints, in joint index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanConfig {
    pub slots: Vec<BusSlot>,
    pub ranges: Vec<CodecRanges>,
}

impl CanConfig {
    /// Left leg on bus 0 and right leg on bus 1, ids 1..=5 from hip yaw
    /// to ankle; ranges from each joint's motor.
    pub fn for_robot(spec: &RobotSpec) -> Result<Self, CanError> {
        let mut slots = Vec::new();
        let mut ranges = Vec::new();
        for (i, j) in spec.joints.iter().enumerate() {
            slots.push(BusSlot {
                bus: (i / JOINTS_PER_LEG) as u8,
                id: (i % JOINTS_PER_LEG + 1) as u16,
            });
            let m = spec
                .motor(j.motor)
                .ok_or_else(|| CanError::Config(format!("joint {} has no motor table", j.name)))?;
            let vel = match m.id {
                MotorModelId::AK10_9 => 65.0,
                MotorModelId::AK70_10 => 50.0,
            };
            ranges.push(CodecRanges::with_limits(vel, m.torque_limit));
        }
        let cfg = Self { slots, ranges };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CanError> {
        if self.slots.len() != NUM_JOINTS || self.ranges.len() != NUM_JOINTS {
            return Err(CanError::Config(format!("need {NUM_JOINTS} slots and ranges")));
        }
        for r in &self.ranges {
            r.validate()?;
        }
        for bus in 0..2u8 {
            let ids: Vec<u16> = self.slots.iter().filter(|s| s.bus == bus).map(|s| s.id).collect();
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CanError::Config(format!("ids on bus {bus} must increase with joint index")));
            }
        }
        if let Some(s) = self.slots.iter().find(|s| s.bus > 1 || s.id >= 0x800) {
            return Err(CanError::Config(format!("slot {s:?}: bus must be 0 or 1, id below 0x800")));
        }
        Ok(())
    }
}

/// One tick's frames: `[bus 0, bus 1]`, each in joint index order. Outside
/// `Running` every frame is the zero-torque command.
pub fn schedule_bus(state: EstopState, commands: &[MotorCommand; NUM_JOINTS], cfg: &CanConfig) -> [Vec<CanFrame>; 2] {
    let live = state.mode == EstopMode::Running && state.relay_closed;
    let mut out: [Vec<CanFrame>; 2] = Default::default();
    for (j, slot) in cfg.slots.iter().enumerate() {
        let cmd = if live { &commands[j] } else { &MotorCommand::ZERO_TORQUE };
        let frame = encode_command(cmd, &cfg.ranges[j], slot.id).expect("slot ids validated");
        out[slot.bus as usize].push(frame);
    }
    out
}

/// True when the payload commands no torque: both gains at zero and the
/// feedforward field at the code of 0 N·m.
pub fn is_zero_torque(frame: &CanFrame, ranges: &CodecRanges) -> bool {
    let [_, _, kp, kd, t] = command_fields(&frame.data);
    kp == 0 && kd == 0 && t == ranges.torque.quantize(0.0)
}

/// Drains pending e-stop events before each tick, so an event queued by
/// another thread takes effect no later than the next schedule.
pub struct BusScheduler {
    pub config: CanConfig,
    pub state: EstopState,
    events: Receiver<EstopEvent>,
}

impl BusScheduler {
    pub fn new(config: CanConfig, events: Receiver<EstopEvent>) -> Self {
        Self {
            config,
            state: EstopState::ARMED,
            events,
        }
    }

    pub fn tick(&mut self, commands: &[MotorCommand; NUM_JOINTS]) -> [Vec<CanFrame>; 2] {
        while let Ok(e) = self.events.try_recv() {
            self.state = estop_transition(self.state, e);
        }
        schedule_bus(self.state, commands, &self.config)
    }
}
