//! The virtual autopilot: sensor model, estimator and FCU.

pub mod estimator;
pub mod fcu;
pub mod sensors;

pub use estimator::{estimate_step, EstimatedState, Estimator, EstimatorConfig, EstimatorError};
pub use fcu::{fcu_tick, handle_command, Fcu, FcuConfig, FcuCounters, FcuMode, FcuNode, FcuOutput};
pub use sensors::{simulate_sensors, SensorNoiseConfig, SensorReadings, TrueKinematics};
