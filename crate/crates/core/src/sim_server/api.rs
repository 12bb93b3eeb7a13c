//! Streaming API payloads. Every message is a JSON object with a `type` tag.
//!
//! Inbound: `teleop`, `arm`, `set_mode`, `plan`, `pause`, `resume`, `step`,
//! `get_world`. Outbound: `frame` at the stream rate, plus one reply per
//! inbound command (`ok`, `error`, `plan_result` or `world`).

use serde::{Deserialize, Serialize};

use crate::autopilot::FcuMode;
use crate::control::ControlMode;
use crate::env_world::{Obstacle, WorldBounds};
use crate::planner::{CompositeConfig, PlanOutcome, PlannerKind};

fn default_true() -> bool {
    true
}
fn default_steps() -> u64 {
    1
}
fn default_planner() -> PlannerKind {
    PlannerKind::RrtConnect
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApiCommand {
    /// Six RC axes (surge, sway, heave, roll, pitch, yaw), each in ±1000.
    Teleop { robot: usize, axes: [i16; 6] },
    Arm {
        robot: usize,
        #[serde(default = "default_true")]
        armed: bool,
    },
    SetMode { robot: usize, mode: FcuMode },
    Plan {
        /// One (x, y, z, yaw) goal per robot, in fleet order.
        goals: Vec<[f64; 4]>,
        #[serde(default = "default_planner")]
        planner: PlannerKind,
        /// Wall-clock budget (s); defaults to 5 s.
        #[serde(default)]
        time_budget: Option<f64>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Pause,
    Resume,
    /// Advances a paused simulation by `count` ticks.
    Step {
        #[serde(default = "default_steps")]
        count: u64,
    },
    GetWorld,
}

impl ApiCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ApiCommand::Teleop { .. } => "teleop",
            ApiCommand::Arm { .. } => "arm",
            ApiCommand::SetMode { .. } => "set_mode",
            ApiCommand::Plan { .. } => "plan",
            ApiCommand::Pause => "pause",
            ApiCommand::Resume => "resume",
            ApiCommand::Step { .. } => "step",
            ApiCommand::GetWorld => "get_world",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotFrame {
    pub index: usize,
    pub name: String,
    /// Ground truth (x, y, z, yaw).
    pub true_pose: [f64; 4],
    /// Ground-truth orientation quaternion (w, x, y, z).
    pub orientation: [f64; 4],
    /// Ground-truth world-frame velocity.
    pub velocity: [f64; 3],
    /// Latest estimate seen on the telemetry bus.
    pub estimated_pose: Option<[f64; 4]>,
    pub mode: FcuMode,
    pub armed: bool,
    pub control: ControlMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacleFrame {
    pub id: u32,
    pub center: [f64; 3],
    pub radius: f64,
    pub velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanState {
    Idle,
    Executing,
    Holding,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStatus {
    pub state: PlanState,
    pub planner: Option<PlannerKind>,
    pub replans: u32,
    pub failures: u32,
    /// Sim time the current trajectories were dispatched.
    pub dispatched_at: Option<f64>,
    /// Waypoints per robot of the active trajectories.
    pub paths: Vec<Vec<[f64; 4]>>,
    pub message: Option<String>,
}

impl Default for PlanStatus {
    fn default() -> Self {
        Self {
            state: PlanState::Idle,
            planner: None,
            replans: 0,
            failures: 0,
            dispatched_at: None,
            paths: Vec::new(),
            message: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimMetrics {
    pub ticks: u64,
    /// Actuator frames that missed the tick deadline (last command reused).
    pub missed_actuator_frames: u64,
    pub proxy_frames: u64,
    pub proxy_dropped: u64,
    /// Ticks on which ground truth showed any contact.
    pub collision_ticks: u64,
    pub first_collision_time: Option<f64>,
    /// Smallest ground-truth separation seen so far over all body pairs.
    pub min_clearance: Option<f64>,
    /// Same, restricted to robot versus dynamic obstacle pairs.
    pub min_dynamic_clearance: Option<f64>,
    pub replans: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateStreamFrame {
    pub seq: u64,
    pub time: f64,
    pub tick: u64,
    pub paused: bool,
    pub robots: Vec<RobotFrame>,
    /// Dynamic obstacles only; static geometry comes from `get_world`.
    pub obstacles: Vec<DynamicObstacleFrame>,
    pub plan: PlanStatus,
    pub metrics: SimMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldInfo {
    pub bounds: WorldBounds,
    pub grid_dims: (usize, usize),
    pub cell_size: f64,
    /// Plain-text grid and obstacle dump.
    pub dump: String,
    pub static_obstacles: Vec<Obstacle>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ApiReply {
    Ok {
        command: String,
    },
    Error {
        kind: String,
        message: String,
    },
    PlanResult {
        outcome: PlanOutcome,
        computation_time: f64,
        iterations: u64,
        path_length: Option<f64>,
        path: Vec<CompositeConfig>,
    },
    World(WorldInfo),
    Frame(StateStreamFrame),
}

impl ApiReply {
    pub fn error(kind: &str, message: impl Into<String>) -> Self {
        ApiReply::Error { kind: kind.into(), message: message.into() }
    }

    pub fn ok(command: &ApiCommand) -> Self {
        ApiReply::Ok { command: command.name().into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("replies serialize")
    }
}

/// Parses one inbound text message. Malformed input becomes an error reply.
pub fn parse_command(text: &str) -> Result<ApiCommand, ApiReply> {
    serde_json::from_str(text).map_err(|e| ApiReply::error("Malformed", e.to_string()))
}
