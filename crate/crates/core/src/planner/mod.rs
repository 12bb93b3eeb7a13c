//! Sampling-based planning in the composite space of all robots, path timing
//! and the online replanning executor.

pub mod replan;
pub mod search;
pub mod space;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{wrap_angle, JointTrajectoryMsg};
use crate::hydro::Vec3;
use crate::rng::{self, streams};

pub use replan::{ReplanConfig, ReplanError, ReplanExecutor, ReplanOutcome};
pub use space::{distance, interpolate, path_length, sample_uniform, CompositeConfig, PlanningScene, YAW_WEIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerKind {
    #[serde(rename = "rrt")]
    Rrt,
    #[serde(rename = "rrtc")]
    RrtConnect,
    #[serde(rename = "prm")]
    Prm,
}

impl PlannerKind {
    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Rrt => "rrt",
            PlannerKind::RrtConnect => "rrtc",
            PlannerKind::Prm => "prm",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rrt" => Ok(PlannerKind::Rrt),
            "rrtc" | "rrt-connect" | "rrtconnect" => Ok(PlannerKind::RrtConnect),
            "prm" => Ok(PlannerKind::Prm),
            other => Err(PlanError::UnknownPlanner(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown planner {0:?}")]
    UnknownPlanner(String),
    #[error("invalid plan request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub start: CompositeConfig,
    pub goal: CompositeConfig,
    pub planner: PlannerKind,
    /// Wall-clock budget in seconds.
    pub time_budget: f64,
    pub validity_resolution: f64,
    pub goal_tolerance: f64,
    pub seed: u64,
    /// Optional iteration cap, which keeps results independent of machine
    /// speed.
    #[serde(default)]
    pub max_iterations: Option<u64>,
}

impl PlanRequest {
    pub fn new(start: CompositeConfig, goal: CompositeConfig, planner: PlannerKind, seed: u64) -> Self {
        Self {
            start,
            goal,
            planner,
            time_budget: 5.0,
            validity_resolution: 0.1,
            goal_tolerance: 0.1,
            seed,
            max_iterations: None,
        }
    }

    pub fn validate(&self, robots: usize) -> Result<(), PlanError> {
        let bad = |m: String| Err(PlanError::InvalidRequest(m));
        if !(self.time_budget > 0.0) {
            return bad(format!("time_budget must be > 0, got {}", self.time_budget));
        }
        if !(self.validity_resolution > 0.0) {
            return bad(format!("validity_resolution must be > 0, got {}", self.validity_resolution));
        }
        if !(self.goal_tolerance >= 0.0) {
            return bad("goal_tolerance must be >= 0".into());
        }
        if self.start.len() != robots || self.goal.len() != robots {
            return bad(format!(
                "expected {robots} poses, start has {} and goal has {}",
                self.start.len(),
                self.goal.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanOutcome {
    Solved,
    TimedOut,
    StartInvalid,
    GoalInvalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub path: Option<Vec<CompositeConfig>>,
    /// Wall-clock seconds; the only field that varies between identical runs.
    pub computation_time: f64,
    pub iterations: u64,
    /// Length before smoothing.
    pub raw_length: Option<f64>,
}

impl PlanResult {
    pub fn path_length(&self) -> Option<f64> {
        self.path.as_deref().map(path_length)
    }

    /// Equality ignoring `computation_time`.
    pub fn same_result(&self, other: &PlanResult) -> bool {
        self.outcome == other.outcome
            && self.path == other.path
            && self.iterations == other.iterations
            && self.raw_length.map(f64::to_bits) == other.raw_length.map(f64::to_bits)
    }
}

/// Number of random shortcut attempts after a solve.
pub const SHORTCUT_ATTEMPTS: usize = 100;

/// Tries the start-to-end shortcut, then random ones. Length never grows
/// because the metric obeys the triangle inequality.
pub fn smooth_path<R: Rng>(
    mut path: Vec<CompositeConfig>,
    scene: &PlanningScene,
    resolution: f64,
    rng: &mut R,
) -> Vec<CompositeConfig> {
    if path.len() > 2 && scene.motion_valid(&path[0], &path[path.len() - 1], resolution) {
        let last = path.pop().expect("non-empty");
        path.truncate(1);
        path.push(last);
    }
    for _ in 0..SHORTCUT_ATTEMPTS {
        if path.len() < 3 {
            break;
        }
        let i = rng.random_range(0..path.len() - 2);
        let j = rng.random_range(i + 2..path.len());
        if scene.motion_valid(&path[i], &path[j], resolution) {
            path.drain(i + 1..j);
        }
    }
    path
}

/// [`plan`] keeping `margin` of clearance, retried without it when the start
/// or goal itself sits closer than `margin` to something.
pub fn plan_with_margin(req: &PlanRequest, scene: &mut PlanningScene, margin: f64) -> Result<PlanResult, PlanError> {
    scene.margin = margin;
    let res = plan(req, scene)?;
    if margin > 0.0 && matches!(res.outcome, PlanOutcome::StartInvalid | PlanOutcome::GoalInvalid) {
        scene.margin = 0.0;
        return plan(req, scene);
    }
    Ok(res)
}

pub fn plan(req: &PlanRequest, scene: &PlanningScene) -> Result<PlanResult, PlanError> {
    req.validate(scene.robot_count())?;
    let started = Instant::now();
    let finish = |outcome, path: Option<Vec<CompositeConfig>>, iterations, raw_length| PlanResult {
        outcome,
        path,
        computation_time: started.elapsed().as_secs_f64(),
        iterations,
        raw_length,
    };
    if !scene.valid(&req.start) {
        return Ok(finish(PlanOutcome::StartInvalid, None, 0, None));
    }
    if !scene.valid(&req.goal) {
        return Ok(finish(PlanOutcome::GoalInvalid, None, 0, None));
    }
    let mut budget = search::Budget::new(req, started);
    let mut r = rng::stream(req.seed, streams::PLANNER);
    let raw = match req.planner {
        PlannerKind::Rrt => search::rrt(req, scene, &mut budget, &mut r),
        PlannerKind::RrtConnect => search::rrt_connect(req, scene, &mut budget, &mut r),
        PlannerKind::Prm => search::prm(req, scene, &mut budget, &mut r),
    };
    let iterations = budget.iterations;
    match raw {
        None => Ok(finish(PlanOutcome::TimedOut, None, iterations, None)),
        Some(raw) => {
            let raw_length = path_length(&raw);
            let mut sr = rng::stream(req.seed, streams::SMOOTHING);
            let smoothed = smooth_path(raw, scene, req.validity_resolution, &mut sr);
            Ok(finish(PlanOutcome::Solved, Some(smoothed), iterations, Some(raw_length)))
        }
    }
}

/// Times a composite path. Every robot reaches waypoint k at the same time;
/// a segment lasts as long as its slowest robot needs. Zero-length segments
/// are dropped so times stay strictly increasing.
pub fn path_to_trajectories(path: &[CompositeConfig], cruise_speed: f64, yaw_rate: f64) -> Vec<JointTrajectoryMsg> {
    assert!(cruise_speed > 0.0 && yaw_rate > 0.0, "cruise_speed and yaw_rate must be > 0");
    let Some(first) = path.first() else {
        return Vec::new();
    };
    let robots = first.len();
    let mut times = vec![0.0];
    let mut kept = vec![0usize];
    let mut t = 0.0;
    for k in 1..path.len() {
        let prev = &path[*kept.last().expect("non-empty")];
        let dur = prev
            .iter()
            .zip(&path[k])
            .map(|(a, b)| {
                let dp = Vec3::new(b[0] - a[0], b[1] - a[1], b[2] - a[2]).norm();
                (dp / cruise_speed).max(wrap_angle(b[3] - a[3]).abs() / yaw_rate)
            })
            .fold(0.0, f64::max);
        if dur > 0.0 {
            t += dur;
            times.push(t);
            kept.push(k);
        }
    }
    (0..robots)
        .map(|r| JointTrajectoryMsg::new(r, kept.iter().zip(&times).map(|(&k, &t)| (path[k][r], t))))
        .collect()
}
