//! Orchestration: scenario loading, the lockstep loop and the streaming API
//! payloads.

pub mod api;
pub mod lockstep;
pub mod scenario;

pub use api::{parse_command, ApiCommand, ApiReply, PlanState, PlanStatus, SimMetrics, StateStreamFrame, WorldInfo};
pub use lockstep::{run_lockstep, PlanCommand, PlanRejection, SimError, Simulation};
pub use scenario::{load_scenario, parse_scenario, RobotConfig, ScenarioConfig, ScenarioError, ScriptedObstacle};
