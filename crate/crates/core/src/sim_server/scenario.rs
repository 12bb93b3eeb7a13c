//! Scenario files: one TOML document describing the world, the fleet and the
//! loop settings. Vehicle parameters may live in separate TOML files that are
//! resolved relative to the scenario file.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autopilot::SensorNoiseConfig;
use crate::collision::{primitive_distance, BodyGeometry, CollisionWorld};
use crate::control::CascadeGains;
use crate::env_world::{Clearing, CurrentField, Environment, EnvironmentSpec};
use crate::hydro::{Vec3, VehicleParams};
use crate::planner::ReplanConfig;
use crate::wire::{ports, PortRegistry, TransportKind};

/// Vehicle reference that selects the built-in parameter set.
pub const BUILTIN_VEHICLE: &str = "builtin:bluerov2_heavy";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(ValidationErrors),
}

/// Every violation found in one pass, each tagged with the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationErrors(pub Vec<FieldError>);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect();
        f.write_str(&parts.join("; "))
    }
}

impl ValidationErrors {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError { field: field.into(), message: message.into() });
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.0.iter().any(|e| e.field.contains(field))
    }
}

/// A dynamic sphere with a fixed velocity, added after generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScriptedObstacle {
    pub center: Vec3,
    pub radius: f64,
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub name: String,
    /// Path the parameters were loaded from; `None` for the built-in vehicle.
    pub vehicle_file: Option<PathBuf>,
    pub params: VehicleParams,
    /// (x, y, z, yaw).
    pub start: [f64; 4],
    pub gains: CascadeGains,
    pub noise: SensorNoiseConfig,
}

impl RobotConfig {
    pub fn new(name: impl Into<String>, start: [f64; 4]) -> Self {
        Self {
            name: name.into(),
            vehicle_file: None,
            params: VehicleParams::bluerov2_heavy(),
            start,
            gains: CascadeGains::default(),
            noise: SensorNoiseConfig::default(),
        }
    }

    pub fn geometry(&self, index: usize) -> BodyGeometry {
        BodyGeometry::sphere(index, self.params.collision_radius())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// Seeds sensor noise and planning. The environment has its own seed.
    pub seed: u64,
    pub tick_rate: f64,
    pub stream_rate: f64,
    pub transport: TransportKind,
    pub port_base: u16,
    pub port_stride: u16,
    pub gcs_port: u16,
    pub api_addr: String,
    /// How long the loop waits for an actuator frame in UDP mode (ms).
    pub actuator_deadline_ms: u64,
    /// Carve a clearing around every start before generating pillars.
    pub clear_starts: bool,
    pub environment: EnvironmentSpec,
    pub current: CurrentField,
    pub replan: ReplanConfig,
    pub scripted_obstacles: Vec<ScriptedObstacle>,
    pub robots: Vec<RobotConfig>,
}

impl ScenarioConfig {
    /// Defaults for everything except the world and the fleet.
    pub fn new(name: impl Into<String>, environment: EnvironmentSpec, robots: Vec<RobotConfig>) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            tick_rate: 50.0,
            stream_rate: 20.0,
            transport: TransportKind::Loopback,
            port_base: ports::DEFAULT_BASE,
            port_stride: ports::DEFAULT_STRIDE,
            gcs_port: crate::gcs_proxy::DEFAULT_GCS_PORT,
            api_addr: "127.0.0.1:8080".into(),
            actuator_deadline_ms: 20,
            clear_starts: false,
            environment,
            current: CurrentField::default(),
            replan: ReplanConfig::default(),
            scripted_obstacles: Vec::new(),
            robots,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    /// Environment spec with start clearings applied when requested.
    pub fn effective_environment(&self) -> EnvironmentSpec {
        let mut spec = self.environment.clone();
        if self.clear_starts {
            for r in &self.robots {
                let s = r.start;
                spec.clearings.push(Clearing {
                    center: Vec3::new(s[0], s[1], s[2]),
                    radius: r.params.collision_radius() + spec.cell_size,
                });
            }
        }
        spec
    }

    /// Generates the world, including scripted obstacles.
    pub fn build_environment(&self) -> Result<Environment, ScenarioError> {
        let mut env = Environment::generate(&self.effective_environment()).map_err(|e| {
            let mut v = ValidationErrors::default();
            v.push("environment", e.to_string());
            ScenarioError::Validation(v)
        })?;
        for s in &self.scripted_obstacles {
            env.push_scripted(s.center, s.radius, s.velocity);
        }
        Ok(env)
    }

    pub fn geometries(&self) -> Vec<BodyGeometry> {
        self.robots.iter().enumerate().map(|(i, r)| r.geometry(i)).collect()
    }

    /// Checks every rule and reports all violations together.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = ValidationErrors::default();
        if self.robots.is_empty() {
            errs.push("robots", "at least one robot is required");
        }
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            errs.push("tick_rate", "must be > 0");
        } else if 1.0 / self.tick_rate > crate::hydro::MAX_DT {
            errs.push("tick_rate", format!("must be at least {} Hz", 1.0 / crate::hydro::MAX_DT));
        }
        if !(self.stream_rate > 0.0 && self.stream_rate <= self.tick_rate) {
            errs.push("stream_rate", "must lie in (0, tick_rate]");
        }
        if let Err(e) = self.environment.validate() {
            errs.push("environment", e.to_string());
        }
        if let Err(e) = self.current.validate() {
            errs.push("current", e.to_string());
        }
        let mut names = BTreeSet::new();
        for (i, r) in self.robots.iter().enumerate() {
            let field = |f: &str| format!("robots[{i}].{f}");
            if r.name.trim().is_empty() {
                errs.push(field("name"), "must not be empty");
            } else if !names.insert(r.name.as_str()) {
                errs.push(field("name"), format!("duplicate robot name {:?}", r.name));
            }
            if let Err(e) = r.noise.validate() {
                errs.push(field("noise"), e);
            }
            for (stage, g) in [("pose", &r.gains.pose), ("velocity", &r.gains.velocity)] {
                if let Err(e) = g.validate() {
                    errs.push(field(&format!("gains.{stage}")), e);
                }
            }
            if !r.start.iter().all(|v| v.is_finite()) {
                errs.push(field("start"), "must be finite");
            } else if !self.environment.bounds.contains(&Vec3::new(r.start[0], r.start[1], r.start[2])) {
                errs.push(field("start"), "outside the world bounds");
            }
        }
        match PortRegistry::new(self.port_base, self.port_stride) {
            Ok(mut reg) => {
                for i in 0..self.robots.len() {
                    match reg.allocate(i) {
                        Ok(b) if b.ports().contains(&self.gcs_port) => {
                            errs.push("gcs_port", format!("collides with the port block of robot {i}"))
                        }
                        Ok(_) => {}
                        Err(e) => errs.push("port_base", e.to_string()),
                    }
                }
            }
            Err(e) => errs.push("port_stride", e.to_string()),
        }
        if errs.0.is_empty() {
            self.check_starts(&mut errs);
        }
        if errs.0.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Validation(errs))
        }
    }

    fn check_starts(&self, errs: &mut ValidationErrors) {
        let env = match self.build_environment() {
            Ok(env) => env,
            Err(ScenarioError::Validation(v)) => {
                errs.0.extend(v.0);
                return;
            }
            Err(e) => {
                errs.push("environment", e.to_string());
                return;
            }
        };
        let snapshot = env.snapshot(0.0);
        let robots = self.geometries();
        let world = CollisionWorld::from_snapshot(&snapshot, &robots);
        for (i, r) in self.robots.iter().enumerate() {
            if !world.robot_is_free(&robots[i], &r.start, 0.0) {
                errs.push(format!("robots[{i}].start"), "start pose intersects an obstacle");
            }
        }
        for i in 0..robots.len() {
            for j in i + 1..robots.len() {
                let a = robots[i].posed(&self.robots[i].start);
                let b = robots[j].posed(&self.robots[j].start);
                let d = a.iter().flat_map(|p| b.iter().map(move |q| primitive_distance(p, q))).fold(f64::INFINITY, f64::min);
                if d <= 0.0 {
                    errs.push(format!("robots[{j}].start"), format!("start overlaps robot {i}"));
                }
            }
        }
    }
}

fn default_tick_rate() -> f64 {
    50.0
}
fn default_stream_rate() -> f64 {
    20.0
}
fn default_port_base() -> u16 {
    ports::DEFAULT_BASE
}
fn default_port_stride() -> u16 {
    ports::DEFAULT_STRIDE
}
fn default_gcs_port() -> u16 {
    crate::gcs_proxy::DEFAULT_GCS_PORT
}
fn default_api() -> String {
    "127.0.0.1:8080".into()
}
fn default_deadline() -> u64 {
    20
}
fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default = "default_name")]
    name: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_tick_rate")]
    tick_rate: f64,
    #[serde(default = "default_stream_rate")]
    stream_rate: f64,
    #[serde(default)]
    transport: TransportKind,
    #[serde(default = "default_port_base")]
    port_base: u16,
    #[serde(default = "default_port_stride")]
    port_stride: u16,
    #[serde(default = "default_gcs_port")]
    gcs_port: u16,
    #[serde(default = "default_api")]
    api: String,
    #[serde(default = "default_deadline")]
    actuator_deadline_ms: u64,
    #[serde(default)]
    clear_starts: bool,
    environment: EnvironmentSpec,
    #[serde(default)]
    current: CurrentField,
    #[serde(default)]
    replan: ReplanConfig,
    #[serde(default)]
    scripted_obstacles: Vec<ScriptedObstacle>,
    #[serde(default)]
    robots: Vec<RobotFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotFile {
    name: String,
    #[serde(default)]
    vehicle: Option<String>,
    start: [f64; 4],
    #[serde(default)]
    gains: Option<CascadeGains>,
    #[serde(default)]
    noise: Option<SensorNoiseConfig>,
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

fn parse_error(path: &Path, text: &str, e: toml::de::Error) -> ScenarioError {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    ScenarioError::Parse { path: path.to_path_buf(), line, column, message: e.message().trim().to_string() }
}

pub fn load_vehicle(path: &Path) -> Result<VehicleParams, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    toml::from_str(&text).map_err(|e| parse_error(path, &text, e))
}

/// Parses scenario text. `path` is used for messages and as the base for
/// relative vehicle file references.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| parse_error(path, text, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut robots = Vec::with_capacity(file.robots.len());
    for r in file.robots {
        let mut rc = RobotConfig::new(r.name, r.start);
        if let Some(v) = r.vehicle.filter(|v| v != BUILTIN_VEHICLE) {
            let vp = base.join(v);
            rc.params = load_vehicle(&vp)?;
            rc.vehicle_file = Some(vp);
        }
        if let Some(g) = r.gains {
            rc.gains = g;
        }
        if let Some(n) = r.noise {
            rc.noise = n;
        }
        robots.push(rc);
    }
    let mut cfg = ScenarioConfig::new(file.name, file.environment, robots);
    cfg.seed = file.seed;
    cfg.tick_rate = file.tick_rate;
    cfg.stream_rate = file.stream_rate;
    cfg.transport = file.transport;
    cfg.port_base = file.port_base;
    cfg.port_stride = file.port_stride;
    cfg.gcs_port = file.gcs_port;
    cfg.api_addr = file.api;
    cfg.actuator_deadline_ms = file.actuator_deadline_ms;
    cfg.clear_starts = file.clear_starts;
    cfg.current = file.current;
    cfg.replan = file.replan;
    cfg.scripted_obstacles = file.scripted_obstacles;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text, path)
}
