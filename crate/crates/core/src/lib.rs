pub mod autopilot;
pub mod collision;
pub mod control;
pub mod env_world;
pub mod exec;
pub mod gcs_proxy;
pub mod hydro;
pub mod planner;
pub mod rng;
pub mod sim_server;
pub mod bench;
pub mod wire;
