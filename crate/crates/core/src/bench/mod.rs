//! Seeded sweeps that compare planners on identical environments.
//!
//! A run regenerates the environment from the run seed alone, so every
//! planner arm with the same seed faces the same world (checked through the
//! environment hash). Execution goes through the full FCU and wire stack on
//! the in-process loopback transport.

mod report;

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autopilot::{FcuMode, SensorNoiseConfig};
use crate::control::CascadeGains;
use crate::env_world::{Clearing, CurrentField, Environment, EnvironmentSpec};
use crate::exec::ExecPolicy;
use crate::hydro::Vec3;
use crate::planner::{CompositeConfig, PlanOutcome, PlannerKind, ReplanConfig};
use crate::rng::mix_seed;
use crate::sim_server::{
    scenario::load_vehicle, PlanCommand, PlanRejection, PlanState, RobotConfig, ScenarioConfig, ScenarioError,
    ScriptedObstacle, SimError, Simulation,
};

pub use report::{aggregate, read_report, write_report, Aggregate, Report, ReportFormat};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario {id} is invalid: {reason}")]
    ScenarioInvalid { id: String, reason: String },
    #[error("cannot read {path}: {reason}")]
    Load { path: String, reason: String },
    #[error("simulation fault in {id}: {source}")]
    Runtime { id: String, source: SimError },
    #[error("report i/o failed: {0}")]
    IoFailure(String),
    #[error("bad seed range {0:?}")]
    SeedRange(String),
}

impl BenchError {
    /// Process exit code: 2 for bad input, 3 for faults while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::ScenarioInvalid { .. } | BenchError::Load { .. } | BenchError::SeedRange(_) => 2,
            BenchError::Runtime { .. } | BenchError::IoFailure(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureKind {
    PlanTimeout,
    CollisionInExecution,
    ExecutionTimeout,
    ReplanFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRobot {
    pub name: String,
    pub start: [f64; 4],
    pub goal: [f64; 4],
    #[serde(skip)]
    pub config: Option<RobotConfig>,
}

impl BenchRobot {
    pub fn new(name: impl Into<String>, start: [f64; 4], goal: [f64; 4]) -> Self {
        Self { name: name.into(), start, goal, config: None }
    }

    fn robot_config(&self) -> RobotConfig {
        let mut rc = self.config.clone().unwrap_or_else(|| RobotConfig::new(self.name.clone(), self.start));
        rc.name = self.name.clone();
        rc.start = self.start;
        rc
    }
}

/// One benchmark scenario. The environment seed is replaced per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub environment: EnvironmentSpec,
    pub robots: Vec<BenchRobot>,
    pub current: CurrentField,
    pub replan: ReplanConfig,
    pub scripted_obstacles: Vec<ScriptedObstacle>,
    /// Wall-clock planning budget (s).
    pub time_budget: f64,
    /// Iteration cap that keeps outcomes independent of machine speed.
    pub max_iterations: Option<u64>,
    /// Arrival tolerance on every robot's position (m).
    pub goal_tolerance: f64,
    /// Execution timeout as a multiple of the nominal trajectory duration.
    pub timeout_factor: f64,
    /// Radius of the pillar-free disk carved around each start and goal.
    pub clearing_radius: f64,
    /// Run closed-loop execution; when false a solved plan counts as success.
    pub execute: bool,
    /// Settling time after arming, before planning (s).
    pub settle_time: f64,
}

impl Scenario {
    pub fn new(id: impl Into<String>, environment: EnvironmentSpec, robots: Vec<BenchRobot>) -> Self {
        Self {
            id: id.into(),
            environment,
            robots,
            current: CurrentField::default(),
            replan: ReplanConfig::default(),
            scripted_obstacles: Vec::new(),
            time_budget: 5.0,
            max_iterations: None,
            goal_tolerance: 0.3,
            timeout_factor: 10.0,
            clearing_radius: 1.5,
            execute: true,
            settle_time: 0.5,
        }
    }

    pub fn starts(&self) -> CompositeConfig {
        self.robots.iter().map(|r| r.start).collect()
    }

    pub fn goals(&self) -> CompositeConfig {
        self.robots.iter().map(|r| r.goal).collect()
    }

    /// Environment spec for run `seed`: template with the seed mixed in and
    /// clearings around every start and goal.
    pub fn environment_for(&self, seed: u64) -> EnvironmentSpec {
        let mut spec = self.environment.clone();
        spec.seed = mix_seed(self.environment.seed, seed);
        for r in &self.robots {
            for p in [r.start, r.goal] {
                spec.clearings.push(Clearing { center: Vec3::new(p[0], p[1], p[2]), radius: self.clearing_radius });
            }
        }
        spec
    }

    /// Simulation configuration for run `seed`.
    pub fn sim_config(&self, seed: u64) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(self.id.clone(), self.environment_for(seed), self.robots.iter().map(|r| r.robot_config()).collect());
        cfg.seed = seed;
        cfg.current = self.current;
        cfg.replan = self.replan;
        cfg.scripted_obstacles = self.scripted_obstacles.clone();
        cfg
    }

    fn invalid(&self, reason: impl Into<String>) -> BenchError {
        BenchError::ScenarioInvalid { id: self.id.clone(), reason: reason.into() }
    }

    /// Checks everything that does not depend on the run seed.
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.robots.is_empty() {
            return Err(self.invalid("no robots"));
        }
        if !(self.time_budget > 0.0) {
            return Err(self.invalid("time_budget must be > 0"));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(self.invalid("goal_tolerance must be > 0"));
        }
        if !(self.timeout_factor >= 1.0) {
            return Err(self.invalid("timeout_factor must be >= 1"));
        }
        if !(self.settle_time >= 0.0) {
            return Err(self.invalid("settle_time must be >= 0"));
        }
        let b = self.environment.bounds;
        for r in &self.robots {
            if !b.contains(&Vec3::new(r.goal[0], r.goal[1], r.goal[2])) {
                return Err(self.invalid(format!("goal of {} is outside the bounds", r.name)));
            }
        }
        self.environment.validate().map_err(|e| self.invalid(e.to_string()))
    }
}

/// Digest of the plain-text environment dump, hex encoded.
pub fn environment_hash(env: &Environment) -> String {
    hex::encode(Sha256::digest(env.dump().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub planner: PlannerKind,
    pub seed: u64,
    pub env_hash: String,
    pub success: bool,
    /// Wall-clock planning time (s). The only field that varies between
    /// identical runs.
    pub computation_time: f64,
    pub iterations: u64,
    /// Sim time from dispatch until every robot is within the goal tolerance.
    pub execution_time: Option<f64>,
    pub path_length: Option<f64>,
    pub min_clearance_observed: Option<f64>,
    pub replan_count: u32,
    pub failure_kind: Option<FailureKind>,
}

impl RunRecord {
    /// Equality on everything except `computation_time`, and except
    /// `iterations` for plan timeouts, where the wall clock decides the count.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        let mut a = self.clone();
        a.computation_time = other.computation_time;
        if a.failure_kind == Some(FailureKind::PlanTimeout) {
            a.iterations = other.iterations;
        }
        a == *other
    }
}

fn arrived(sim: &Simulation, goals: &[[f64; 4]], tol: f64) -> bool {
    sim.true_poses().iter().zip(goals).all(|(p, g)| {
        let d = ((p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)).sqrt();
        d <= tol
    })
}

/// Full pipeline for one (scenario, planner, seed): generate, spawn, arm,
/// plan, execute with replanning, record.
pub fn run_scenario(scenario: &Scenario, planner: PlannerKind, seed: u64) -> Result<RunRecord, BenchError> {
    scenario.validate()?;
    let cfg = scenario.sim_config(seed);
    let runtime = |source: SimError| BenchError::Runtime { id: scenario.id.clone(), source };
    let mut sim = match Simulation::new(cfg) {
        Ok(sim) => sim,
        Err(SimError::Config(e)) => return Err(scenario.invalid(e.to_string())),
        Err(e) => return Err(runtime(e)),
    };
    let env_hash = environment_hash(sim.environment());
    let goals = scenario.goals();
    for i in 0..sim.robot_count() {
        sim.arm(i, true).map_err(runtime)?;
        sim.set_mode(i, FcuMode::Guided).map_err(runtime)?;
    }
    sim.run_for(scenario.settle_time).map_err(runtime)?;

    let mut record = RunRecord {
        scenario: scenario.id.clone(),
        planner,
        seed,
        env_hash,
        success: false,
        computation_time: 0.0,
        iterations: 0,
        execution_time: None,
        path_length: None,
        min_clearance_observed: None,
        replan_count: 0,
        failure_kind: None,
    };
    let cmd = PlanCommand {
        goals: goals.clone(),
        planner,
        time_budget: scenario.time_budget,
        seed: Some(seed),
        max_iterations: scenario.max_iterations,
        start: Some(scenario.starts()),
    };
    let result = match sim.request_plan(&cmd) {
        Ok(r) => r,
        Err(PlanRejection::Failed(r)) => {
            record.computation_time = r.computation_time;
            record.iterations = r.iterations;
            return match r.outcome {
                PlanOutcome::TimedOut => {
                    record.failure_kind = Some(FailureKind::PlanTimeout);
                    Ok(record)
                }
                other => Err(scenario.invalid(format!("planner reported {other:?} for seed {seed}"))),
            };
        }
        Err(PlanRejection::Sim(e)) => return Err(runtime(e)),
        Err(e) => return Err(scenario.invalid(e.to_string())),
    };
    record.computation_time = result.computation_time;
    record.iterations = result.iterations;
    record.path_length = result.path_length();
    if !scenario.execute {
        record.success = true;
        return Ok(record);
    }

    let dispatched = sim.time();
    let nominal = sim.executor().map_or(0.0, |e| e.duration());
    let deadline = dispatched + scenario.timeout_factor * nominal.max(1.0);
    // Clearance and contacts count from dispatch on.
    let base_collisions = sim.metrics().collision_ticks;
    let mut min_clear = f64::INFINITY;
    loop {
        sim.step().map_err(runtime)?;
        min_clear = min_clear.min(sim.current_clearance());
        if sim.metrics().collision_ticks > base_collisions {
            record.failure_kind = Some(FailureKind::CollisionInExecution);
            break;
        }
        if sim.plan_status().state == PlanState::Failed {
            record.failure_kind = Some(FailureKind::ReplanFailed);
            break;
        }
        if sim.executor().is_none() && arrived(&sim, &goals, scenario.goal_tolerance) {
            record.success = true;
            record.execution_time = Some(sim.time() - dispatched);
            break;
        }
        if sim.time() > deadline {
            record.failure_kind = Some(FailureKind::ExecutionTimeout);
            break;
        }
    }
    record.min_clearance_observed = Some(min_clear).filter(|v| v.is_finite());
    record.replan_count = sim.plan_status().replans;
    Ok(record)
}

/// Runs every (scenario, planner, seed) triple and aggregates per
/// (scenario, planner). Individual failures are data; only invalid
/// scenarios and simulator faults abort the sweep.
pub fn sweep(
    scenarios: &[Scenario],
    planners: &[PlannerKind],
    seeds: &[u64],
    policy: ExecPolicy,
) -> Result<Report, BenchError> {
    for s in scenarios {
        s.validate()?;
    }
    let jobs: Vec<(usize, PlannerKind, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, _)| planners.iter().flat_map(move |&p| seeds.iter().map(move |&s| (i, p, s))))
        .collect();
    let results = policy.map(&jobs, |&(i, p, s)| run_scenario(&scenarios[i], p, s));
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Report::from_records(records))
}

/// Parses `a..b` (inclusive), `a..=b`, a single number, or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, BenchError> {
    let bad = || BenchError::SeedRange(text.to_string());
    let t = text.trim();
    if let Some((a, b)) = t.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (u64::from_str(a.trim()).map_err(|_| bad())?, u64::from_str(b.trim()).map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    if t.is_empty() {
        return Ok(Vec::new());
    }
    t.split(',').map(|s| u64::from_str(s.trim()).map_err(|_| bad())).collect()
}

pub fn parse_planners(text: &str) -> Result<Vec<PlannerKind>, BenchError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| PlannerKind::from_str(s).map_err(|e| BenchError::Load { path: "--planners".into(), reason: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SeedSpec {
    Range(String),
    List(Vec<u64>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotEntry {
    name: String,
    start: [f64; 4],
    goal: [f64; 4],
    #[serde(default)]
    vehicle: Option<String>,
    #[serde(default)]
    gains: Option<CascadeGains>,
    #[serde(default)]
    noise: Option<SensorNoiseConfig>,
}

fn d_budget() -> f64 {
    5.0
}
fn d_tol() -> f64 {
    0.3
}
fn d_factor() -> f64 {
    10.0
}
fn d_clear() -> f64 {
    1.5
}
fn d_true() -> bool {
    true
}
fn d_settle() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchFile {
    name: String,
    #[serde(default)]
    planners: Vec<PlannerKind>,
    #[serde(default)]
    seeds: Option<SeedSpec>,
    /// Expands the scenario into one variant per fill probability.
    #[serde(default)]
    densities: Vec<f64>,
    environment: EnvironmentSpec,
    #[serde(default)]
    current: CurrentField,
    #[serde(default)]
    replan: ReplanConfig,
    #[serde(default)]
    scripted_obstacles: Vec<ScriptedObstacle>,
    robots: Vec<RobotEntry>,
    #[serde(default = "d_budget")]
    time_budget: f64,
    #[serde(default)]
    max_iterations: Option<u64>,
    #[serde(default = "d_tol")]
    goal_tolerance: f64,
    #[serde(default = "d_factor")]
    timeout_factor: f64,
    #[serde(default = "d_clear")]
    clearing_radius: f64,
    #[serde(default = "d_true")]
    execute: bool,
    #[serde(default = "d_settle")]
    settle_time: f64,
}

/// A parsed benchmark file: scenario variants plus default planners and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub scenarios: Vec<Scenario>,
    pub planners: Vec<PlannerKind>,
    pub seeds: Vec<u64>,
}

pub fn load_bench(path: impl AsRef<Path>) -> Result<BenchSpec, BenchError> {
    let path = path.as_ref();
    let load = |reason: String| BenchError::Load { path: path.display().to_string(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    let file: BenchFile = toml::from_str(&text).map_err(|e| load(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut robots = Vec::new();
    for r in file.robots {
        let mut rc = RobotConfig::new(r.name.clone(), r.start);
        if let Some(v) = r.vehicle.filter(|v| v != crate::sim_server::scenario::BUILTIN_VEHICLE) {
            let vp = base.join(v);
            rc.params = load_vehicle(&vp).map_err(|e: ScenarioError| load(e.to_string()))?;
            rc.vehicle_file = Some(vp);
        }
        rc.gains = r.gains.unwrap_or(rc.gains);
        rc.noise = r.noise.unwrap_or(rc.noise);
        robots.push(BenchRobot { name: r.name, start: r.start, goal: r.goal, config: Some(rc) });
    }
    let mut template = Scenario::new(file.name.clone(), file.environment, robots);
    template.current = file.current;
    template.replan = file.replan;
    template.scripted_obstacles = file.scripted_obstacles;
    template.time_budget = file.time_budget;
    template.max_iterations = file.max_iterations;
    template.goal_tolerance = file.goal_tolerance;
    template.timeout_factor = file.timeout_factor;
    template.clearing_radius = file.clearing_radius;
    template.execute = file.execute;
    template.settle_time = file.settle_time;
    let scenarios = if file.densities.is_empty() {
        vec![template]
    } else {
        file.densities
            .iter()
            .map(|&d| {
                let mut s = template.clone();
                s.id = format!("{}@{d}", file.name);
                s.environment.fill_prob = d;
                s
            })
            .collect()
    };
    let seeds = match file.seeds {
        None => vec![0],
        Some(SeedSpec::Range(r)) => parse_seeds(&r)?,
        Some(SeedSpec::List(l)) => l,
    };
    let planners = if file.planners.is_empty() { vec![PlannerKind::RrtConnect] } else { file.planners };
    Ok(BenchSpec { scenarios, planners, seeds })
}
