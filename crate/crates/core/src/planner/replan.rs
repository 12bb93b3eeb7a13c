//! Online validation of the active plan against predicted obstacle motion,
//! with hold-and-replan on conflict.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::space::{CompositeConfig, PlanningScene};
use super::{path_to_trajectories, plan_with_margin, PlanOutcome, PlanRequest};
use crate::collision::{primitive_distance, BodyGeometry, CollisionWorld, Primitive};
use crate::control::{sample_trajectory, JointTrajectoryMsg};
use crate::env_world::{ObstacleKind, ObstacleSnapshot, Shape, WorldBounds};
use crate::rng::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplanConfig {
    /// Validation rate (Hz).
    pub rate: f64,
    /// Prediction horizon (s).
    pub horizon: f64,
    /// Required clearance to dynamic obstacles (m).
    pub d_safe: f64,
    /// Consecutive failed replans before giving up.
    pub max_failures: u32,
    pub cruise_speed: f64,
    pub yaw_rate: f64,
    /// Spacing of validated states along the trajectory (m).
    pub control_resolution: f64,
    /// Clearance planned paths keep from everything, absorbing tracking
    /// error (m). Dropped when a start or goal cannot satisfy it.
    pub plan_margin: f64,
}

impl Default for ReplanConfig {
    fn default() -> Self {
        Self {
            rate: 2.0,
            horizon: 5.0,
            d_safe: 0.5,
            max_failures: 3,
            cruise_speed: 0.5,
            yaw_rate: 0.5,
            control_resolution: 0.1,
            plan_margin: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "trajectories", rename_all = "snake_case")]
pub enum ReplanOutcome {
    Continue,
    Hold,
    Replanned(Vec<JointTrajectoryMsg>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplanError {
    #[error("replanning failed {failures} times in a row")]
    ReplanFailed { failures: u32 },
    #[error("expected {expected} poses, got {got}")]
    PoseCount { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct ReplanExecutor {
    cfg: ReplanConfig,
    template: PlanRequest,
    bounds: WorldBounds,
    robots: Vec<BodyGeometry>,
    trajectories: Vec<JointTrajectoryMsg>,
    traj_start: f64,
    last_check: Option<f64>,
    holding: bool,
    /// The active trajectories step aside rather than lead to the goal.
    detour: bool,
    failures: u32,
    replans: u32,
}

/// Pose of every robot `tau` seconds into its trajectory.
pub fn sample_composite(trajectories: &[JointTrajectoryMsg], tau: f64) -> CompositeConfig {
    trajectories.iter().map(|tr| sample_trajectory(tr, tau.max(0.0))).collect()
}

impl ReplanExecutor {
    /// `template` supplies goal, planner and budget for replans; its `start`
    /// is replaced by the current estimate each time.
    pub fn new(
        cfg: ReplanConfig,
        template: PlanRequest,
        bounds: WorldBounds,
        robots: Vec<BodyGeometry>,
        trajectories: Vec<JointTrajectoryMsg>,
        start_time: f64,
    ) -> Self {
        Self {
            cfg,
            template,
            bounds,
            robots,
            trajectories,
            traj_start: start_time,
            last_check: None,
            holding: false,
            detour: false,
            failures: 0,
            replans: 0,
        }
    }

    pub fn config(&self) -> &ReplanConfig {
        &self.cfg
    }

    pub fn trajectories(&self) -> &[JointTrajectoryMsg] {
        &self.trajectories
    }

    pub fn is_holding(&self) -> bool {
        self.holding
    }

    pub fn replans(&self) -> u32 {
        self.replans
    }

    pub fn failures(&self) -> u32 {
        self.failures
    }

    pub fn duration(&self) -> f64 {
        self.trajectories.iter().map(|t| t.duration()).fold(0.0, f64::max)
    }

    pub fn is_detour(&self) -> bool {
        self.detour
    }

    pub fn is_complete(&self, t: f64) -> bool {
        !self.holding && !self.detour && t - self.traj_start >= self.duration()
    }

    fn static_world(&self, snapshot: &ObstacleSnapshot) -> CollisionWorld {
        let statics = snapshot
            .obstacles()
            .iter()
            .filter(|o| o.kind == ObstacleKind::Static)
            .map(|o| (o.id, Primitive::from_shape(&o.shape)));
        let diam = self.robots.iter().flat_map(|r| &r.primitives).map(|p| p.diameter()).fold(0.0, f64::max);
        CollisionWorld::from_primitives(statics, diam)
    }

    /// Checks the rest of the trajectory (up to the horizon) against static
    /// obstacles and dynamic obstacles advanced at constant velocity.
    pub fn remaining_is_safe(&self, snapshot: &ObstacleSnapshot, t: f64) -> bool {
        self.is_safe(&self.trajectories, snapshot, t - self.traj_start)
    }

    fn is_safe(&self, trajectories: &[JointTrajectoryMsg], snapshot: &ObstacleSnapshot, tau0: f64) -> bool {
        let duration = trajectories.iter().map(|t| t.duration()).fold(0.0, f64::max);
        let end = duration.min(tau0 + self.cfg.horizon);
        if tau0 >= duration {
            return true;
        }
        let world = self.static_world(snapshot);
        let dt = self.cfg.control_resolution / self.cfg.cruise_speed;
        let steps = ((end - tau0) / dt).ceil().max(0.0) as usize;
        (0..=steps).all(|k| {
            let tau = (tau0 + k as f64 * dt).min(end);
            let c = sample_composite(trajectories, tau);
            if !world.is_free(&c, &self.robots, 0.0) {
                return false;
            }
            let ahead = snapshot.predict(tau - tau0);
            let dynamic: Vec<Primitive> = ahead
                .obstacles()
                .iter()
                .filter(|o| o.kind == ObstacleKind::Dynamic)
                .map(|o| Primitive::from_shape(&o.shape))
                .collect();
            self.robots.iter().zip(&c).all(|(g, pose)| {
                g.posed(pose).iter().all(|p| dynamic.iter().all(|q| primitive_distance(p, q) >= self.cfg.d_safe))
            })
        })
    }

    /// Static obstacles plus each dynamic sphere swept over `sweep` seconds.
    fn planning_scene(&self, snapshot: &ObstacleSnapshot, sweep: f64, inflation: f64) -> PlanningScene {
        let h = sweep;
        let prims = snapshot.obstacles().iter().map(|o| {
            let p = match (o.kind, &o.shape) {
                (ObstacleKind::Dynamic, Shape::Sphere { center, radius }) => Primitive::Capsule {
                    a: *center,
                    b: center + o.velocity * h,
                    radius: radius + inflation,
                },
                _ => Primitive::from_shape(&o.shape),
            };
            (o.id, p)
        });
        let diam = self.robots.iter().flat_map(|r| &r.primitives).map(|p| p.diameter()).fold(0.0, f64::max);
        PlanningScene::with_world(self.bounds, self.robots.clone(), CollisionWorld::from_primitives(prims, diam))
    }

    /// Plans around each dynamic obstacle's swept volume, trying shorter
    /// sweeps when the start lies inside a longer one, and dispatches only a
    /// candidate that passes the same validation as a running plan. When no
    /// route to the goal is safe, robots standing in a predicted sweep step
    /// out of it instead. Returns the trajectories and whether they detour.
    fn replan(&mut self, est: &[[f64; 4]], snapshot: &ObstacleSnapshot) -> Option<(Vec<JointTrajectoryMsg>, bool)> {
        let mut req = self.template.clone();
        req.start = est.to_vec();
        // Retries after a failure need fresh samples, not the same search again.
        req.seed = mix_seed(self.template.seed, ((self.replans as u64 + 1) << 16) | self.failures as u64);
        let h = self.cfg.horizon;
        for sweep in [2.0 * h, h, 0.5 * h, 0.0] {
            let mut scene = self.planning_scene(snapshot, sweep, self.cfg.d_safe);
            let res = plan_with_margin(&req, &mut scene, self.cfg.plan_margin).ok()?;
            match res.outcome {
                PlanOutcome::Solved => {
                    let path = res.path.expect("solved has a path");
                    let trajs = path_to_trajectories(&path, self.cfg.cruise_speed, self.cfg.yaw_rate);
                    if self.is_safe(&trajs, snapshot, 0.0) {
                        return Some((trajs, false));
                    }
                }
                PlanOutcome::StartInvalid => {}
                _ => break,
            }
        }
        for side in [1.0, -1.0] {
            let Some(goal) = self.evasion_goal(est, snapshot, side) else { break };
            req.goal = goal;
            let mut scene = self.planning_scene(snapshot, 0.0, self.cfg.d_safe);
            let Ok(res) = plan_with_margin(&req, &mut scene, self.cfg.plan_margin) else { continue };
            if let (PlanOutcome::Solved, Some(path)) = (res.outcome, res.path) {
                let trajs = path_to_trajectories(&path, self.cfg.cruise_speed, self.cfg.yaw_rate);
                if self.is_safe(&trajs, snapshot, 0.0) {
                    return Some((trajs, true));
                }
            }
        }
        None
    }

    /// Moves each robot inside a dynamic obstacle's long sweep sideways,
    /// across the direction of travel, until it clears the sweep. `side`
    /// flips the preferred direction. `None` when no robot is in a sweep.
    fn evasion_goal(&self, est: &[[f64; 4]], snapshot: &ObstacleSnapshot, side: f64) -> Option<CompositeConfig> {
        let sweep = 2.0 * self.cfg.horizon;
        let mut goal = est.to_vec();
        let mut moved = false;
        for (pose, body) in goal.iter_mut().zip(&self.robots) {
            let reach = body.primitives.iter().map(|p| 0.5 * p.diameter()).fold(0.0, f64::max);
            for o in snapshot.obstacles().iter().filter(|o| o.kind == ObstacleKind::Dynamic) {
                let Shape::Sphere { center, radius } = o.shape else { continue };
                let speed = o.velocity.norm();
                if speed < 1e-9 {
                    continue;
                }
                let dir = o.velocity / speed;
                let p = crate::hydro::Vec3::new(pose[0], pose[1], pose[2]);
                let along = (p - center).dot(&dir).clamp(0.0, speed * sweep);
                let off = p - (center + dir * along);
                let lateral = off - dir * off.dot(&dir);
                let need = radius + self.cfg.d_safe + reach + self.cfg.plan_margin + 2.0 * self.cfg.control_resolution;
                if lateral.norm() >= need {
                    continue;
                }
                let away = if lateral.norm() > 1e-6 {
                    lateral.normalize()
                } else {
                    crate::hydro::Vec3::new(-dir.y, dir.x, 0.0).try_normalize(1e-9).unwrap_or(crate::hydro::Vec3::x())
                };
                let target = p + side * away * (need - lateral.norm());
                let lo = self.bounds.min.add_scalar(reach);
                let hi = self.bounds.max.add_scalar(-reach);
                pose[0] = target.x.clamp(lo.x, hi.x);
                pose[1] = target.y.clamp(lo.y, hi.y);
                pose[2] = target.z.clamp(lo.z, hi.z);
                moved = true;
            }
        }
        moved.then_some(goal)
    }

    /// Runs at most once per replan period; between checks it repeats the
    /// current verdict (Continue, or Hold while holding).
    pub fn tick(&mut self, est: &[[f64; 4]], snapshot: &ObstacleSnapshot, t: f64) -> Result<ReplanOutcome, ReplanError> {
        if est.len() != self.robots.len() {
            return Err(ReplanError::PoseCount { expected: self.robots.len(), got: est.len() });
        }
        let due = self.last_check.is_none_or(|last| t - last >= 1.0 / self.cfg.rate - 1e-9);
        if !due {
            return Ok(if self.holding { ReplanOutcome::Hold } else { ReplanOutcome::Continue });
        }
        self.last_check = Some(t);
        let detour_done = self.detour && t - self.traj_start >= self.duration();
        if !self.holding && !detour_done {
            if self.remaining_is_safe(snapshot, t) {
                return Ok(ReplanOutcome::Continue);
            }
            self.holding = true;
            return Ok(ReplanOutcome::Hold);
        }
        match self.replan(est, snapshot) {
            Some((trajs, detour)) => {
                self.trajectories = trajs.clone();
                self.traj_start = t;
                self.holding = false;
                self.detour = detour;
                self.failures = 0;
                self.replans += 1;
                Ok(ReplanOutcome::Replanned(trajs))
            }
            None => {
                self.holding = true;
                self.failures += 1;
                if self.failures >= self.cfg.max_failures {
                    Err(ReplanError::ReplanFailed { failures: self.failures })
                } else {
                    Ok(ReplanOutcome::Hold)
                }
            }
        }
    }
}

/// Free-function form of [`ReplanExecutor::tick`].
pub fn replan_executor_tick(
    executor: &mut ReplanExecutor,
    est: &[[f64; 4]],
    snapshot: &ObstacleSnapshot,
    t: f64,
) -> Result<ReplanOutcome, ReplanError> {
    executor.tick(est, snapshot, t)
}
