//! Message set and payload layouts. All multi-byte fields are little-endian.

use serde::{Deserialize, Serialize};

pub mod ids {
    pub const HEARTBEAT: u16 = 0;
    pub const ARM: u16 = 1;
    pub const SET_MODE: u16 = 2;
    pub const RC_OVERRIDE: u16 = 3;
    pub const ATTITUDE: u16 = 30;
    pub const LOCAL_POSITION: u16 = 32;
    pub const SENSOR_STATE: u16 = 40;
    pub const ACTUATOR_CMD: u16 = 41;
    pub const TRAJECTORY_SETPOINT: u16 = 80;
    pub const TRAJECTORY_HEADER: u16 = 81;
    pub const TRAJECTORY_POINT: u16 = 82;
    pub const ACK: u16 = 255;
}

/// Largest thruster count an ACTUATOR_CMD payload can carry.
pub const MAX_ACTUATORS: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum AckResult {
    Ok = 0,
    Denied = 1,
    Failed = 2,
}

impl AckResult {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Ok),
            1 => Some(Self::Denied),
            2 => Some(Self::Failed),
            _ => None,
        }
    }
}

pub mod sensor_flags {
    pub const IMU: u8 = 1;
    pub const DEPTH: u8 = 2;
    pub const FIX: u8 = 4;
}

/// Simulated sensor bundle for one tick. Fields whose flag bit is clear carry
/// no fresh reading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorPayload {
    /// Specific force, body frame (m/s²).
    pub accel: [f32; 3],
    /// Body rates (rad/s).
    pub gyro: [f32; 3],
    /// Compass heading (rad).
    pub heading: f32,
    /// Depth below the surface (m, positive down).
    pub depth: f32,
    /// Position fix, world frame (m).
    pub fix: [f32; 3],
    pub flags: u8,
    pub time_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Heartbeat { mode: u8, armed: u8 },
    Arm { flag: u8 },
    SetMode { mode: u8 },
    /// Channels (x, y, z, roll, pitch, yaw), each in ±1000.
    RcOverride { axes: [i16; 6] },
    Attitude { quaternion: [f32; 4], rates: [f32; 3], time_ms: u32 },
    LocalPosition { position: [f32; 3], velocity: [f32; 3], time_ms: u32 },
    SensorState(SensorPayload),
    ActuatorCmd { forces: Vec<f32> },
    /// Single hold target (x, y, z, yaw).
    TrajectorySetpoint { setpoint: [f32; 4] },
    TrajectoryHeader { traj_id: u16, count: u16 },
    TrajectoryPoint { traj_id: u16, index: u16, time_from_start: f32, setpoint: [f32; 4] },
    Ack { msg_id: u16, result: u8 },
}

/// Fixed payload length for a message id, or `None` for ACTUATOR_CMD (whose
/// length follows its count byte) and unknown ids.
pub fn fixed_payload_len(msg_id: u16) -> Option<usize> {
    use ids::*;
    Some(match msg_id {
        HEARTBEAT => 2,
        ARM | SET_MODE => 1,
        RC_OVERRIDE => 12,
        ATTITUDE => 32,
        LOCAL_POSITION => 28,
        SENSOR_STATE => 49,
        TRAJECTORY_SETPOINT => 16,
        TRAJECTORY_HEADER => 4,
        TRAJECTORY_POINT => 24,
        ACK => 3,
        _ => return None,
    })
}

pub fn is_known(msg_id: u16) -> bool {
    msg_id == ids::ACTUATOR_CMD || fixed_payload_len(msg_id).is_some()
}

impl Message {
    pub fn msg_id(&self) -> u16 {
        use ids::*;
        match self {
            Message::Heartbeat { .. } => HEARTBEAT,
            Message::Arm { .. } => ARM,
            Message::SetMode { .. } => SET_MODE,
            Message::RcOverride { .. } => RC_OVERRIDE,
            Message::Attitude { .. } => ATTITUDE,
            Message::LocalPosition { .. } => LOCAL_POSITION,
            Message::SensorState(_) => SENSOR_STATE,
            Message::ActuatorCmd { .. } => ACTUATOR_CMD,
            Message::TrajectorySetpoint { .. } => TRAJECTORY_SETPOINT,
            Message::TrajectoryHeader { .. } => TRAJECTORY_HEADER,
            Message::TrajectoryPoint { .. } => TRAJECTORY_POINT,
            Message::Ack { .. } => ACK,
        }
    }

    pub(crate) fn write_payload(&self, out: &mut Vec<u8>) {
        let mut w = Writer(out);
        match self {
            Message::Heartbeat { mode, armed } => {
                w.u8(*mode);
                w.u8(*armed);
            }
            Message::Arm { flag } => w.u8(*flag),
            Message::SetMode { mode } => w.u8(*mode),
            Message::RcOverride { axes } => axes.iter().for_each(|a| w.i16(*a)),
            Message::Attitude { quaternion, rates, time_ms } => {
                w.f32s(quaternion);
                w.f32s(rates);
                w.u32(*time_ms);
            }
            Message::LocalPosition { position, velocity, time_ms } => {
                w.f32s(position);
                w.f32s(velocity);
                w.u32(*time_ms);
            }
            Message::SensorState(s) => {
                w.f32s(&s.accel);
                w.f32s(&s.gyro);
                w.f32(s.heading);
                w.f32(s.depth);
                w.f32s(&s.fix);
                w.u8(s.flags);
                w.u32(s.time_ms);
            }
            Message::ActuatorCmd { forces } => {
                w.u8(forces.len() as u8);
                w.f32s(forces);
            }
            Message::TrajectorySetpoint { setpoint } => w.f32s(setpoint),
            Message::TrajectoryHeader { traj_id, count } => {
                w.u16(*traj_id);
                w.u16(*count);
            }
            Message::TrajectoryPoint { traj_id, index, time_from_start, setpoint } => {
                w.u16(*traj_id);
                w.u16(*index);
                w.f32(*time_from_start);
                w.f32s(setpoint);
            }
            Message::Ack { msg_id, result } => {
                w.u16(*msg_id);
                w.u8(*result);
            }
        }
    }

    /// Parses a payload whose length has already been validated for `msg_id`.
    pub(crate) fn read_payload(msg_id: u16, p: &[u8]) -> Option<Message> {
        use ids::*;
        let mut r = Reader { buf: p, pos: 0 };
        Some(match msg_id {
            HEARTBEAT => Message::Heartbeat { mode: r.u8(), armed: r.u8() },
            ARM => Message::Arm { flag: r.u8() },
            SET_MODE => Message::SetMode { mode: r.u8() },
            RC_OVERRIDE => Message::RcOverride { axes: std::array::from_fn(|_| r.i16()) },
            ATTITUDE => Message::Attitude { quaternion: r.f32s(), rates: r.f32s(), time_ms: r.u32() },
            LOCAL_POSITION => Message::LocalPosition { position: r.f32s(), velocity: r.f32s(), time_ms: r.u32() },
            SENSOR_STATE => Message::SensorState(SensorPayload {
                accel: r.f32s(),
                gyro: r.f32s(),
                heading: r.f32(),
                depth: r.f32(),
                fix: r.f32s(),
                flags: r.u8(),
                time_ms: r.u32(),
            }),
            ACTUATOR_CMD => {
                let n = r.u8() as usize;
                Message::ActuatorCmd { forces: (0..n).map(|_| r.f32()).collect() }
            }
            TRAJECTORY_SETPOINT => Message::TrajectorySetpoint { setpoint: r.f32s() },
            TRAJECTORY_HEADER => Message::TrajectoryHeader { traj_id: r.u16(), count: r.u16() },
            TRAJECTORY_POINT => Message::TrajectoryPoint {
                traj_id: r.u16(),
                index: r.u16(),
                time_from_start: r.f32(),
                setpoint: r.f32s(),
            },
            ACK => Message::Ack { msg_id: r.u16(), result: r.u8() },
            _ => return None,
        })
    }
}

struct Writer<'a>(&'a mut Vec<u8>);

impl Writer<'_> {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        vs.iter().for_each(|v| self.f32(*v));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.buf[self.pos..self.pos + N].try_into().expect("length validated");
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn i16(&mut self) -> i16 {
        i16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn f32s<const N: usize>(&mut self) -> [f32; N] {
        std::array::from_fn(|_| self.f32())
    }
}
