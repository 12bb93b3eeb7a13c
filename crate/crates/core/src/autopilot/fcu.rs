//! Virtual flight control unit: arming/mode state machine, estimator,
//! controllers and thrust allocation behind the wire protocol.

use serde::{Deserialize, Serialize};

use super::estimator::{EstimatedState, Estimator, EstimatorConfig, EstimatorError};
use super::sensors::SensorReadings;
use crate::control::{CascadeGains, ControlMode, ControllerManager, JointTrajectoryMsg};
use crate::hydro::{allocate_thrust, Vec3, VehicleParams, Wrench};
use crate::wire::message::ids;
use crate::wire::{
    encode, sys_id_for, AckResult, FrameReader, Message, PortBlock, SeqCounter, Transport, TransportError,
    GCS_SYS_ID,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum FcuMode {
    #[serde(alias = "disarmed")]
    Disarmed = 0,
    #[serde(alias = "manual")]
    Manual = 1,
    #[serde(alias = "guided")]
    Guided = 2,
}

impl FcuMode {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Disarmed),
            1 => Some(Self::Manual),
            2 => Some(Self::Guided),
            _ => None,
        }
    }

    pub fn armed(self) -> bool {
        self != Self::Disarmed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FcuConfig {
    pub tick_rate: f64,
    pub heartbeat_rate: f64,
    pub telemetry_rate: f64,
    /// Full-deflection wrench per RC channel (x, y, z, roll, pitch, yaw).
    pub manual_max_wrench: [f64; 6],
    pub estimator: EstimatorConfig,
    pub gains: CascadeGains,
}

impl Default for FcuConfig {
    fn default() -> Self {
        Self {
            tick_rate: 50.0,
            heartbeat_rate: 1.0,
            telemetry_rate: 10.0,
            manual_max_wrench: [60.0, 60.0, 60.0, 5.0, 5.0, 10.0],
            estimator: EstimatorConfig::default(),
            gains: CascadeGains::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct TrajAssembly {
    traj_id: u16,
    count: u16,
    points: Vec<([f64; 4], f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcuOutput {
    pub actuator: Message,
    pub telemetry: Vec<Message>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcuCounters {
    pub ticks: u64,
    pub sensor_misses: u64,
    pub estimator_faults: u64,
    pub saturated_ticks: u64,
    pub foreign_frames: u64,
}

#[derive(Debug, Clone)]
pub struct Fcu {
    robot_index: usize,
    params: VehicleParams,
    cfg: FcuConfig,
    dt: f64,
    mode: FcuMode,
    manual_axes: [i16; 6],
    estimator: Estimator,
    estimate: Option<EstimatedState>,
    manager: ControllerManager,
    pending: Option<SensorReadings>,
    last_sensor: Option<SensorReadings>,
    assembly: Option<TrajAssembly>,
    tick: u64,
    counters: FcuCounters,
    last_wrench: Wrench,
}

fn period_ticks(rate: f64, tick_rate: f64) -> u64 {
    (tick_rate / rate).round().max(1.0) as u64
}

fn f32s<const N: usize>(v: [f64; N]) -> [f32; N] {
    v.map(|x| x as f32)
}

impl Fcu {
    pub fn new(robot_index: usize, params: VehicleParams, cfg: FcuConfig) -> Self {
        Self {
            robot_index,
            params,
            dt: 1.0 / cfg.tick_rate,
            mode: FcuMode::Disarmed,
            manual_axes: [0; 6],
            estimator: Estimator::new(cfg.estimator),
            estimate: None,
            manager: ControllerManager::new(robot_index, cfg.gains),
            pending: None,
            last_sensor: None,
            assembly: None,
            tick: 0,
            counters: FcuCounters::default(),
            last_wrench: Wrench::zero(),
            cfg,
        }
    }

    pub fn robot_index(&self) -> usize {
        self.robot_index
    }

    pub fn sys_id(&self) -> u8 {
        sys_id_for(self.robot_index)
    }

    pub fn mode(&self) -> FcuMode {
        self.mode
    }

    pub fn control_mode(&self) -> ControlMode {
        self.manager.mode()
    }

    pub fn manual_axes(&self) -> [i16; 6] {
        self.manual_axes
    }

    pub fn estimate(&self) -> Option<&EstimatedState> {
        self.estimate.as_ref()
    }

    pub fn manager(&self) -> &ControllerManager {
        &self.manager
    }

    pub fn counters(&self) -> FcuCounters {
        self.counters
    }

    pub fn last_wrench(&self) -> Wrench {
        self.last_wrench
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    fn disarm(&mut self) {
        self.mode = FcuMode::Disarmed;
        self.manual_axes = [0; 6];
        self.assembly = None;
        self.manager.idle();
    }

    /// Applies a ground-station command and returns its ACK. Telemetry-type
    /// messages are not commands and yield `None`.
    pub fn handle_command(&mut self, msg: &Message) -> Option<Message> {
        use AckResult::*;
        let result = match msg {
            Message::Arm { flag } => {
                if *flag == 0 {
                    self.disarm();
                } else if self.mode == FcuMode::Disarmed {
                    self.mode = FcuMode::Manual;
                }
                Ok
            }
            Message::SetMode { mode } => match (FcuMode::from_u8(*mode), self.mode) {
                (None, _) => Denied,
                (Some(FcuMode::Disarmed), _) => {
                    self.disarm();
                    Ok
                }
                (Some(_), FcuMode::Disarmed) => Denied,
                (Some(m), cur) if m == cur => Ok,
                (Some(m), _) => {
                    self.manual_axes = [0; 6];
                    self.assembly = None;
                    self.manager.idle();
                    self.mode = m;
                    Ok
                }
            },
            Message::RcOverride { axes } => match self.mode {
                FcuMode::Disarmed => Denied,
                FcuMode::Manual => {
                    self.manual_axes = axes.map(|a| a.clamp(-1000, 1000));
                    Ok
                }
                FcuMode::Guided => {
                    self.manager.teleop(*axes);
                    Ok
                }
            },
            Message::TrajectorySetpoint { setpoint } => {
                if self.mode != FcuMode::Guided {
                    Denied
                } else {
                    let hold = JointTrajectoryMsg::hold(self.robot_index, setpoint.map(|v| v as f64));
                    match self.manager.trajectory_accept(hold, self.time()) {
                        Result::Ok(()) => Ok,
                        Err(_) => Failed,
                    }
                }
            }
            Message::TrajectoryHeader { traj_id, count } => {
                if self.mode != FcuMode::Guided {
                    Denied
                } else if *count == 0 {
                    Failed
                } else {
                    self.assembly = Some(TrajAssembly {
                        traj_id: *traj_id,
                        count: *count,
                        points: Vec::with_capacity(*count as usize),
                    });
                    Ok
                }
            }
            Message::TrajectoryPoint { traj_id, index, time_from_start, setpoint } => {
                if self.mode != FcuMode::Guided {
                    Denied
                } else {
                    self.accept_point(*traj_id, *index, *time_from_start as f64, setpoint.map(|v| v as f64))
                }
            }
            _ => return None,
        };
        Some(Message::Ack { msg_id: msg.msg_id(), result: result as u8 })
    }

    fn accept_point(&mut self, traj_id: u16, index: u16, t: f64, pose: [f64; 4]) -> AckResult {
        let Some(asm) = self.assembly.as_mut() else {
            return AckResult::Failed;
        };
        if asm.traj_id != traj_id || asm.points.len() != index as usize {
            self.assembly = None;
            return AckResult::Failed;
        }
        asm.points.push((pose, t));
        if asm.points.len() < asm.count as usize {
            return AckResult::Ok;
        }
        let asm = self.assembly.take().expect("assembly present");
        let traj = JointTrajectoryMsg::new(self.robot_index, asm.points);
        match self.manager.trajectory_accept(traj, self.time()) {
            Ok(()) => AckResult::Ok,
            Err(_) => AckResult::Failed,
        }
    }

    /// Queues the sensor frame for the next tick.
    pub fn ingest_sensor(&mut self, readings: SensorReadings) {
        self.pending = Some(readings);
    }

    fn manual_wrench(&self) -> Wrench {
        let w: [f64; 6] = std::array::from_fn(|i| self.manual_axes[i] as f64 / 1000.0 * self.cfg.manual_max_wrench[i]);
        Wrench { force: Vec3::new(w[0], w[1], w[2]), torque: Vec3::new(w[3], w[4], w[5]) }
    }

    pub fn tick(&mut self) -> FcuOutput {
        let readings = match self.pending.take() {
            Some(r) => Some(r),
            None => {
                self.counters.sensor_misses += 1;
                self.last_sensor
            }
        };
        if let Some(r) = readings {
            self.last_sensor = Some(r);
            match self.estimator.step(&r, self.dt) {
                Ok(est) => self.estimate = Some(est),
                Err(EstimatorError::FilterDivergence { .. }) | Err(EstimatorError::InvalidTimeStep(_)) => {
                    self.counters.estimator_faults += 1;
                    self.estimator = Estimator::new(self.cfg.estimator);
                    self.estimate = None;
                }
            }
        }

        let t = self.time();
        let wrench = match (self.mode, self.estimate) {
            (FcuMode::Disarmed, _) => Wrench::zero(),
            (FcuMode::Manual, _) => self.manual_wrench(),
            (FcuMode::Guided, Some(est)) => self.manager.tick(&est.nav(), t, self.dt),
            (FcuMode::Guided, None) => Wrench::zero(),
        };
        self.last_wrench = wrench;
        let forces = if self.mode == FcuMode::Disarmed {
            vec![0.0f32; self.params.thruster_count()]
        } else {
            let alloc = allocate_thrust(&wrench, &self.params);
            if alloc.saturated {
                self.counters.saturated_ticks += 1;
            }
            alloc.commands.iter().map(|c| *c as f32).collect()
        };

        let mut telemetry = Vec::new();
        let time_ms = (t * 1000.0).round() as u32;
        if self.tick % period_ticks(self.cfg.heartbeat_rate, self.cfg.tick_rate) == 0 {
            telemetry.push(Message::Heartbeat { mode: self.mode as u8, armed: self.mode.armed() as u8 });
        }
        if self.tick % period_ticks(self.cfg.telemetry_rate, self.cfg.tick_rate) == 0 {
            let est = self.estimate.unwrap_or_else(|| self.estimator.state());
            let q = est.orientation.quaternion();
            telemetry.push(Message::Attitude {
                quaternion: f32s([q.w, q.i, q.j, q.k]),
                rates: f32s(est.ang_vel.into()),
                time_ms,
            });
            telemetry.push(Message::LocalPosition {
                position: f32s(est.position.into()),
                velocity: f32s(est.lin_vel.into()),
                time_ms,
            });
        }
        self.tick += 1;
        self.counters.ticks = self.tick;
        FcuOutput { actuator: Message::ActuatorCmd { forces }, telemetry }
    }
}

/// Free-function form of [`Fcu::handle_command`].
pub fn handle_command(fcu: &mut Fcu, msg: &Message) -> Option<Message> {
    fcu.handle_command(msg)
}

/// Free-function form of [`Fcu::tick`].
pub fn fcu_tick(fcu: &mut Fcu) -> FcuOutput {
    fcu.tick()
}

/// An [`Fcu`] attached to its port block. Sensor frames arrive on
/// `fdm_state`, actuator frames leave for `fdm_cmd`, and commands and
/// telemetry share `gcs_link` with the proxy at `gcs_port`.
#[derive(Debug)]
pub struct FcuNode {
    pub fcu: Fcu,
    ports: PortBlock,
    gcs_port: u16,
    fdm_seq: SeqCounter,
    gcs_seq: SeqCounter,
    fdm_reader: FrameReader,
    gcs_reader: FrameReader,
}

impl FcuNode {
    pub fn new(fcu: Fcu, ports: PortBlock, gcs_port: u16) -> Self {
        Self {
            fcu,
            ports,
            gcs_port,
            fdm_seq: SeqCounter::default(),
            gcs_seq: SeqCounter::default(),
            fdm_reader: FrameReader::new(),
            gcs_reader: FrameReader::new(),
        }
    }

    pub fn ports(&self) -> &PortBlock {
        &self.ports
    }

    pub fn bind(&self, transport: &mut dyn Transport) -> Result<(), TransportError> {
        transport.bind(self.ports.fdm_state)?;
        transport.bind(self.ports.gcs_link)
    }

    /// Drains both inbound ports. Commands are answered with ACKs right away.
    pub fn poll(&mut self, transport: &mut dyn Transport) -> Result<(), TransportError> {
        while let Some(d) = transport.recv(self.ports.fdm_state, None)? {
            self.fdm_reader.push(&d.bytes);
        }
        while let Some(frame) = self.fdm_reader.next_frame() {
            match frame.message {
                Message::SensorState(p) if frame.header.sys_id == self.fcu.sys_id() => {
                    self.fcu.ingest_sensor(SensorReadings::from_payload(&p))
                }
                _ => self.fcu.counters.foreign_frames += 1,
            }
        }
        while let Some(d) = transport.recv(self.ports.gcs_link, None)? {
            self.gcs_reader.push(&d.bytes);
        }
        while let Some(frame) = self.gcs_reader.next_frame() {
            if frame.header.sys_id != GCS_SYS_ID {
                self.fcu.counters.foreign_frames += 1;
                continue;
            }
            if let Some(ack) = self.fcu.handle_command(&frame.message) {
                self.send_gcs(transport, &ack)?;
            }
        }
        Ok(())
    }

    fn send_gcs(&mut self, transport: &mut dyn Transport, msg: &Message) -> Result<(), TransportError> {
        let bytes = encode(msg, self.gcs_seq.next(), self.fcu.sys_id(), 1).expect("fcu messages fit a frame");
        transport.send(self.ports.gcs_link, self.gcs_port, &bytes)
    }

    /// Runs one FCU tick and ships its actuator and telemetry frames.
    pub fn tick(&mut self, transport: &mut dyn Transport) -> Result<FcuOutput, TransportError> {
        let out = self.fcu.tick();
        let bytes =
            encode(&out.actuator, self.fdm_seq.next(), self.fcu.sys_id(), 1).expect("actuator frame fits");
        transport.send(self.ports.fdm_state, self.ports.fdm_cmd, &bytes)?;
        for m in &out.telemetry {
            self.send_gcs(transport, m)?;
        }
        Ok(out)
    }
}

/// Message ids an FCU acknowledges.
pub const COMMAND_IDS: [u16; 6] = [
    ids::ARM,
    ids::SET_MODE,
    ids::RC_OVERRIDE,
    ids::TRAJECTORY_SETPOINT,
    ids::TRAJECTORY_HEADER,
    ids::TRAJECTORY_POINT,
];
