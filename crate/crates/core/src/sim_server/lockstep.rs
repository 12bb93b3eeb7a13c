//! The fixed-step loop that ties the world, the per-robot FCUs and the
//! ground-station proxy together.
//!
//! Each tick, for every robot: the world sends SENSOR_STATE from `fdm_cmd` to
//! `fdm_state`, the FCU polls and ticks and answers with ACTUATOR_CMD, and the
//! world integrates the dynamics with that command. Then obstacles move, the
//! proxy drains telemetry, the replanning executor runs and the ground-truth
//! clearance check records contacts.

use std::time::Duration;

use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;

use super::api::{
    ApiCommand, ApiReply, DynamicObstacleFrame, PlanState, PlanStatus, RobotFrame, SimMetrics, StateStreamFrame,
    WorldInfo,
};
use super::scenario::{ScenarioConfig, ScenarioError};
use crate::autopilot::sensors::simulate_sensors;
use crate::autopilot::{Fcu, FcuConfig, FcuMode, FcuNode, SensorNoiseConfig, TrueKinematics};
use crate::collision::{primitive_distance, BodyGeometry, CollisionWorld, Primitive};
use crate::control::JointTrajectoryMsg;
use crate::env_world::{Environment, ObstacleKind};
use crate::gcs_proxy::{GcsError, GcsProxy, Publication};
use crate::hydro::{dynamics_step, HydroError, Vec3, VehicleParams, VehicleState};
use crate::planner::{
    path_to_trajectories, plan_with_margin, CompositeConfig, PlanError, PlanOutcome, PlanRequest, PlanResult, PlannerKind,
    PlanningScene, ReplanExecutor, ReplanOutcome,
};
use crate::rng::{self, mix_seed, SimRng};
use crate::wire::{
    encode, sys_id_for, FrameReader, Message, PortBlock, PortRegistry, SeqCounter, Transport, TransportError,
    TransportKind,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ScenarioError),
    #[error("port bind failure: {0}")]
    PortBindFailure(TransportError),
    #[error("transport fault: {0}")]
    Transport(#[from] TransportError),
    #[error("robot {robot}: {source}")]
    Dynamics { robot: String, source: HydroError },
    #[error("unknown robot {0}")]
    UnknownRobot(usize),
    #[error("ground station: {0}")]
    Gcs(#[from] GcsError),
}

impl SimError {
    /// Process exit code: 2 for configuration problems, 3 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanRejection {
    #[error("expected {expected} goals, got {got}")]
    GoalCount { expected: usize, got: usize },
    #[error("robot {0} is not in GUIDED mode")]
    NotGuided(usize),
    #[error("invalid request: {0}")]
    Invalid(#[from] PlanError),
    #[error("planning finished with {:?}", .0.outcome)]
    Failed(PlanResult),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl PlanRejection {
    pub fn kind(&self) -> &'static str {
        match self {
            PlanRejection::GoalCount { .. } | PlanRejection::Invalid(_) => "InvalidRequest",
            PlanRejection::NotGuided(_) => "NotGuided",
            PlanRejection::Failed(r) => match r.outcome {
                PlanOutcome::GoalInvalid => "GoalInvalid",
                PlanOutcome::StartInvalid => "StartInvalid",
                PlanOutcome::TimedOut => "PlanTimeout",
                PlanOutcome::Solved => "Solved",
            },
            PlanRejection::Sim(_) => "RuntimeFault",
        }
    }
}

/// A plan request as issued by an operator or the benchmark harness.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanCommand {
    pub goals: CompositeConfig,
    pub planner: PlannerKind,
    pub time_budget: f64,
    pub seed: Option<u64>,
    pub max_iterations: Option<u64>,
    /// Planning start; defaults to the current pose estimates.
    pub start: Option<CompositeConfig>,
}

impl PlanCommand {
    pub fn new(goals: CompositeConfig, planner: PlannerKind) -> Self {
        Self { goals, planner, time_budget: 5.0, seed: None, max_iterations: None, start: None }
    }
}

#[derive(Debug)]
struct RobotSlot {
    name: String,
    params: VehicleParams,
    noise: SensorNoiseConfig,
    rng: SimRng,
    state: VehicleState,
    world_accel: Vec3,
    last_cmd: Vec<f64>,
    ports: PortBlock,
    node: FcuNode,
    sensor_seq: SeqCounter,
    cmd_reader: FrameReader,
    estimated_position: Option<[f64; 3]>,
    estimated_yaw: Option<f64>,
}

impl RobotSlot {
    fn true_pose(&self) -> [f64; 4] {
        let p = self.state.position;
        [p.x, p.y, p.z, self.state.yaw()]
    }

    fn estimated_pose(&self) -> Option<[f64; 4]> {
        let p = self.estimated_position?;
        Some([p[0], p[1], p[2], self.estimated_yaw?])
    }
}

struct ActivePlan {
    executor: ReplanExecutor,
    planner: PlannerKind,
}

/// Single-threaded simulation handle. Only this type mutates world state.
pub struct Simulation {
    cfg: ScenarioConfig,
    dt: f64,
    transport: Box<dyn Transport>,
    env: Environment,
    static_world: CollisionWorld,
    robots: Vec<RobotSlot>,
    geometries: Vec<BodyGeometry>,
    proxy: GcsProxy,
    tick: u64,
    paused: bool,
    pending_steps: u64,
    frame_seq: u64,
    stream_ratio: f64,
    actuator_wait: Option<Duration>,
    plan: Option<ActivePlan>,
    plan_status: PlanStatus,
    plans_issued: u64,
    traj_id: u16,
    metrics: SimMetrics,
    clearance: f64,
}

fn yaw_of(q: &[f32; 4]) -> f64 {
    let q = Quaternion::new(q[0] as f64, q[1] as f64, q[2] as f64, q[3] as f64);
    UnitQuaternion::from_quaternion(q).euler_angles().2
}

fn sphere_distances(robot: &[Primitive], env: &Environment) -> f64 {
    env.obstacles()
        .iter()
        .filter(|o| o.kind == ObstacleKind::Dynamic)
        .map(|o| Primitive::from_shape(&o.shape))
        .flat_map(|q| robot.iter().map(move |p| primitive_distance(p, &q)))
        .fold(f64::INFINITY, f64::min)
}

fn fold_min(slot: &mut Option<f64>, v: f64) {
    if v.is_finite() {
        *slot = Some(slot.map_or(v, |s| s.min(v)));
    }
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        let transport = crate::wire::make_transport(cfg.transport);
        Self::with_transport(cfg, transport)
    }

    /// Builds the world, allocates and binds every port block, and spawns one
    /// FCU per robot. Nothing is ticked yet.
    pub fn with_transport(cfg: ScenarioConfig, mut transport: Box<dyn Transport>) -> Result<Self, SimError> {
        cfg.validate()?;
        let dt = cfg.dt();
        let env = cfg.build_environment()?;
        let geometries = cfg.geometries();
        let diam = geometries.iter().flat_map(|g| &g.primitives).map(|p| p.diameter()).fold(0.0, f64::max);
        let static_world = CollisionWorld::from_primitives(
            env.obstacles()
                .iter()
                .filter(|o| o.kind == ObstacleKind::Static)
                .map(|o| (o.id, Primitive::from_shape(&o.shape))),
            diam,
        );

        let bind = |t: &mut dyn Transport, port: u16| t.bind(port).map_err(SimError::PortBindFailure);
        bind(transport.as_mut(), cfg.gcs_port)?;
        let mut proxy = GcsProxy::new(cfg.gcs_port);
        let mut registry = PortRegistry::new(cfg.port_base, cfg.port_stride).map_err(port_config_error)?;
        let mut robots = Vec::with_capacity(cfg.robots.len());
        for (i, rc) in cfg.robots.iter().enumerate() {
            let ports = registry.allocate(i).map_err(port_config_error)?;
            let fcu_cfg = FcuConfig { tick_rate: cfg.tick_rate, gains: rc.gains, ..FcuConfig::default() };
            let node = FcuNode::new(Fcu::new(i, rc.params.clone(), fcu_cfg), ports, cfg.gcs_port);
            node.bind(transport.as_mut()).map_err(SimError::PortBindFailure)?;
            bind(transport.as_mut(), ports.fdm_cmd)?;
            proxy.add_robot(i, &ports);
            let s = rc.start;
            robots.push(RobotSlot {
                name: rc.name.clone(),
                params: rc.params.clone(),
                noise: rc.noise,
                rng: rng::named_stream(cfg.seed, &rc.name),
                state: VehicleState::at_rest(Vec3::new(s[0], s[1], s[2]), s[3]),
                world_accel: Vec3::zeros(),
                last_cmd: vec![0.0; rc.params.thruster_count()],
                ports,
                node,
                sensor_seq: SeqCounter::default(),
                cmd_reader: FrameReader::new(),
                estimated_position: None,
                estimated_yaw: None,
            });
        }
        let stream_ratio = cfg.stream_rate / cfg.tick_rate;
        let actuator_wait = match transport.kind() {
            TransportKind::Loopback => None,
            TransportKind::Udp => Some(Duration::from_millis(cfg.actuator_deadline_ms.max(1))),
        };
        let mut sim = Self {
            dt,
            transport,
            env,
            static_world,
            robots,
            geometries,
            proxy,
            tick: 0,
            paused: false,
            pending_steps: 0,
            frame_seq: 0,
            stream_ratio,
            actuator_wait,
            plan: None,
            plan_status: PlanStatus::default(),
            plans_issued: 0,
            traj_id: 0,
            metrics: SimMetrics::default(),
            clearance: f64::INFINITY,
            cfg,
        };
        sim.ground_truth();
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn robot_count(&self) -> usize {
        self.robots.len()
    }

    pub fn robot_names(&self) -> Vec<&str> {
        self.robots.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn robot_state(&self, robot: usize) -> Option<&VehicleState> {
        self.robots.get(robot).map(|r| &r.state)
    }

    pub fn robot_states(&self) -> Vec<VehicleState> {
        self.robots.iter().map(|r| r.state).collect()
    }

    pub fn true_poses(&self) -> CompositeConfig {
        self.robots.iter().map(|r| r.true_pose()).collect()
    }

    pub fn estimated_poses(&self) -> Vec<Option<[f64; 4]>> {
        self.robots.iter().map(|r| r.estimated_pose()).collect()
    }

    pub fn ports(&self, robot: usize) -> Option<PortBlock> {
        self.robots.get(robot).map(|r| r.ports)
    }

    pub fn fcu(&self, robot: usize) -> Option<&Fcu> {
        self.robots.get(robot).map(|r| &r.node.fcu)
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn proxy(&self) -> &GcsProxy {
        &self.proxy
    }

    pub fn proxy_mut(&mut self) -> &mut GcsProxy {
        &mut self.proxy
    }

    pub fn transport(&self) -> &dyn Transport {
        self.transport.as_ref()
    }

    pub fn metrics(&self) -> SimMetrics {
        self.metrics
    }

    /// Smallest ground-truth separation over all body pairs at this tick.
    pub fn current_clearance(&self) -> f64 {
        self.clearance
    }

    pub fn plan_status(&self) -> &PlanStatus {
        &self.plan_status
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn pause(&mut self) {
        self.paused = true;
        self.pending_steps = 0;
    }

    pub fn resume(&mut self) {
        self.paused = false;
        self.pending_steps = 0;
    }

    /// Queues `k` ticks to run while paused.
    pub fn request_steps(&mut self, k: u64) {
        self.pending_steps += k;
    }

    /// Runs one tick unless paused with no queued steps. Returns whether a
    /// tick ran.
    pub fn update(&mut self) -> Result<bool, SimError> {
        if self.paused {
            if self.pending_steps == 0 {
                return Ok(false);
            }
            self.pending_steps -= 1;
        }
        self.step()?;
        Ok(true)
    }

    /// Runs `n` ticks regardless of the pause flag.
    pub fn advance(&mut self, n: u64) -> Result<(), SimError> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// Runs until sim time reaches `duration` seconds past the current time.
    pub fn run_for(&mut self, duration: f64) -> Result<(), SimError> {
        let n = (duration / self.dt).round().max(0.0) as u64;
        self.advance(n)
    }

    /// True on ticks where a stream frame is due. Frames land on the ticks
    /// where `tick · stream_rate / tick_rate` crosses an integer, so the
    /// average rate is exact even when the ratio is fractional.
    pub fn stream_due(&self) -> bool {
        let slot = |k: u64| (k as f64 * self.stream_ratio + 1e-9).floor();
        self.tick == 0 || slot(self.tick) > slot(self.tick - 1)
    }

    /// One lockstep tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let k = self.tick;
        let t = self.time();
        let dt = self.dt;
        let transport = self.transport.as_mut();

        for (i, r) in self.robots.iter_mut().enumerate() {
            let truth = TrueKinematics { state: r.state, world_accel: r.world_accel };
            let readings = simulate_sensors(&truth, &r.noise, &mut r.rng, k, dt);
            let bytes = encode(&Message::SensorState(readings.to_payload()), r.sensor_seq.next(), sys_id_for(i), 0)
                .expect("sensor frame fits");
            transport.send(r.ports.fdm_cmd, r.ports.fdm_state, &bytes)?;
        }
        for r in self.robots.iter_mut() {
            r.node.poll(transport)?;
            r.node.tick(transport)?;
        }
        for (i, r) in self.robots.iter_mut().enumerate() {
            let mut fresh = None;
            if let Some(d) = transport.recv(r.ports.fdm_cmd, self.actuator_wait)? {
                r.cmd_reader.push(&d.bytes);
            }
            while let Some(d) = transport.recv(r.ports.fdm_cmd, None)? {
                r.cmd_reader.push(&d.bytes);
            }
            while let Some(f) = r.cmd_reader.next_frame() {
                match f.message {
                    Message::ActuatorCmd { forces }
                        if f.header.sys_id == sys_id_for(i) && forces.len() == r.params.thruster_count() =>
                    {
                        fresh = Some(forces.iter().map(|v| *v as f64).collect::<Vec<f64>>());
                    }
                    _ => {}
                }
            }
            match fresh {
                Some(cmd) => r.last_cmd = cmd,
                None => self.metrics.missed_actuator_frames += 1,
            }
            let next = dynamics_step(&r.state, &r.params, &r.last_cmd, &self.cfg.current, t, dt)
                .map_err(|source| SimError::Dynamics { robot: r.name.clone(), source })?;
            r.world_accel = (next.world_velocity() - r.state.world_velocity()) / dt;
            r.state = next;
        }
        self.env.step_obstacles(dt, &self.cfg.current, t);
        self.tick += 1;
        self.metrics.ticks = self.tick;

        let pubs = self.proxy.poll(self.transport.as_mut())?;
        self.absorb(&pubs);
        let c = self.proxy.counters();
        self.metrics.proxy_frames = c.frames;
        self.metrics.proxy_dropped = c.dropped;
        self.run_executor()?;
        self.ground_truth();
        Ok(())
    }

    fn absorb(&mut self, pubs: &[Publication]) {
        for p in pubs {
            let Some(r) = self.robots.get_mut(p.topic.robot) else { continue };
            match &p.message {
                Message::LocalPosition { position, .. } => r.estimated_position = Some(position.map(|v| v as f64)),
                Message::Attitude { quaternion, .. } => r.estimated_yaw = Some(yaw_of(quaternion)),
                _ => {}
            }
        }
    }

    fn ground_truth(&mut self) {
        let poses = self.true_poses();
        let report = self.static_world.check(&poses, &self.geometries).expect("one pose per robot");
        let mut dynamic = f64::INFINITY;
        for (g, pose) in self.geometries.iter().zip(&poses) {
            dynamic = dynamic.min(sphere_distances(&g.posed(pose), &self.env));
        }
        let overall = report.min_distance.min(dynamic);
        self.clearance = overall;
        if report.colliding || dynamic <= 0.0 {
            self.metrics.collision_ticks += 1;
            self.metrics.first_collision_time.get_or_insert(self.time());
        }
        fold_min(&mut self.metrics.min_clearance, overall);
        fold_min(&mut self.metrics.min_dynamic_clearance, dynamic);
    }

    /// Current pose estimates, falling back to ground truth for robots whose
    /// telemetry has not arrived yet.
    fn poses_for_planning(&self) -> CompositeConfig {
        self.robots.iter().map(|r| r.estimated_pose().unwrap_or_else(|| r.true_pose())).collect()
    }

    fn run_executor(&mut self) -> Result<(), SimError> {
        let t = self.time();
        let est = self.poses_for_planning();
        let snapshot = self.env.snapshot(t);
        let Some(active) = self.plan.as_mut() else { return Ok(()) };
        if active.executor.is_complete(t) {
            self.plan_status.state = PlanState::Completed;
            self.plan = None;
            return Ok(());
        }
        let was_holding = active.executor.is_holding();
        let outcome = active.executor.tick(&est, &snapshot, t);
        self.plan_status.failures = active.executor.failures();
        self.plan_status.replans = active.executor.replans();
        self.metrics.replans = self.plan_status.replans;
        match outcome {
            Ok(ReplanOutcome::Continue) => {}
            Ok(ReplanOutcome::Hold) => {
                self.plan_status.state = PlanState::Holding;
                if !was_holding {
                    self.send_holds(&est)?;
                }
            }
            Ok(ReplanOutcome::Replanned(trajs)) => {
                self.dispatch(&trajs)?;
                self.plan_status.state = PlanState::Executing;
            }
            Err(e) => {
                self.plan_status.state = PlanState::Failed;
                self.plan_status.message = Some(e.to_string());
                self.plan = None;
            }
        }
        Ok(())
    }

    /// Sends a command through the proxy and delivers it to the FCU at once,
    /// so it takes effect before the next tick.
    pub fn send_command(&mut self, robot: usize, msg: &Message) -> Result<(), SimError> {
        if robot >= self.robots.len() {
            return Err(SimError::UnknownRobot(robot));
        }
        self.proxy.send_command(self.transport.as_mut(), robot, msg)?;
        self.robots[robot].node.poll(self.transport.as_mut())?;
        Ok(())
    }

    pub fn arm(&mut self, robot: usize, armed: bool) -> Result<(), SimError> {
        self.send_command(robot, &Message::Arm { flag: armed as u8 })
    }

    pub fn set_mode(&mut self, robot: usize, mode: FcuMode) -> Result<(), SimError> {
        self.send_command(robot, &Message::SetMode { mode: mode as u8 })
    }

    pub fn teleop(&mut self, robot: usize, axes: [i16; 6]) -> Result<(), SimError> {
        self.send_command(robot, &Message::RcOverride { axes })
    }

    fn send_holds(&mut self, poses: &[[f64; 4]]) -> Result<(), SimError> {
        for (i, p) in poses.iter().enumerate() {
            self.send_command(i, &Message::TrajectorySetpoint { setpoint: p.map(|v| v as f32) })?;
        }
        Ok(())
    }

    fn dispatch(&mut self, trajs: &[JointTrajectoryMsg]) -> Result<(), SimError> {
        for (i, tr) in trajs.iter().enumerate() {
            self.traj_id = self.traj_id.wrapping_add(1);
            let traj_id = self.traj_id;
            self.send_command(i, &Message::TrajectoryHeader { traj_id, count: tr.points.len() as u16 })?;
            for (index, p) in tr.points.iter().enumerate() {
                self.send_command(
                    i,
                    &Message::TrajectoryPoint {
                        traj_id,
                        index: index as u16,
                        time_from_start: p.time_from_start as f32,
                        setpoint: p.positions.map(|v| v as f32),
                    },
                )?;
            }
        }
        self.plan_status.dispatched_at = Some(self.time());
        self.plan_status.paths = trajs.iter().map(|t| t.points.iter().map(|p| p.positions).collect()).collect();
        Ok(())
    }

    /// Plans from the current estimates to `cmd.goals`, dispatches the
    /// trajectories and arms the replanning executor. Every robot must be
    /// in GUIDED mode.
    pub fn request_plan(&mut self, cmd: &PlanCommand) -> Result<PlanResult, PlanRejection> {
        let n = self.robots.len();
        if cmd.goals.len() != n {
            return Err(PlanRejection::GoalCount { expected: n, got: cmd.goals.len() });
        }
        if let Some(i) = self.robots.iter().position(|r| r.node.fcu.mode() != FcuMode::Guided) {
            return Err(PlanRejection::NotGuided(i));
        }
        self.plans_issued += 1;
        let seed = cmd.seed.unwrap_or_else(|| mix_seed(self.cfg.seed, self.plans_issued));
        let start = match &cmd.start {
            Some(s) if s.len() == n => s.clone(),
            Some(s) => return Err(PlanRejection::GoalCount { expected: n, got: s.len() }),
            None => self.poses_for_planning(),
        };
        let mut req = PlanRequest::new(start, cmd.goals.clone(), cmd.planner, seed);
        req.time_budget = cmd.time_budget;
        req.max_iterations = cmd.max_iterations;
        let mut scene = PlanningScene::new(*self.env.bounds(), self.geometries.clone(), &self.env.snapshot(self.time()));
        let result = plan_with_margin(&req, &mut scene, self.cfg.replan.plan_margin)?;
        let Some(path) = result.path.as_ref().filter(|_| result.outcome == PlanOutcome::Solved) else {
            return Err(PlanRejection::Failed(result));
        };
        let rc = self.cfg.replan;
        let trajs = path_to_trajectories(path, rc.cruise_speed, rc.yaw_rate);
        self.plan_status = PlanStatus {
            state: PlanState::Executing,
            planner: Some(cmd.planner),
            ..PlanStatus::default()
        };
        self.dispatch(&trajs)?;
        let executor =
            ReplanExecutor::new(rc, req, *self.env.bounds(), self.geometries.clone(), trajs, self.time());
        self.plan = Some(ActivePlan { executor, planner: cmd.planner });
        Ok(result)
    }

    pub fn active_planner(&self) -> Option<PlannerKind> {
        self.plan.as_ref().map(|p| p.planner)
    }

    /// Executor handle of the active plan, if any.
    pub fn executor(&self) -> Option<&ReplanExecutor> {
        self.plan.as_ref().map(|p| &p.executor)
    }

    pub fn frame(&mut self) -> StateStreamFrame {
        self.frame_seq += 1;
        let robots = self
            .robots
            .iter()
            .enumerate()
            .map(|(index, r)| {
                let q = r.state.orientation.quaternion();
                let v = r.state.world_velocity();
                RobotFrame {
                    index,
                    name: r.name.clone(),
                    true_pose: r.true_pose(),
                    orientation: [q.w, q.i, q.j, q.k],
                    velocity: [v.x, v.y, v.z],
                    estimated_pose: r.estimated_pose(),
                    mode: r.node.fcu.mode(),
                    armed: r.node.fcu.mode().armed(),
                    control: r.node.fcu.control_mode(),
                }
            })
            .collect();
        let obstacles = self
            .env
            .obstacles()
            .iter()
            .filter(|o| o.kind == ObstacleKind::Dynamic)
            .map(|o| {
                let c = o.shape.center();
                DynamicObstacleFrame {
                    id: o.id,
                    center: [c.x, c.y, c.z],
                    radius: o.shape.half_extents().x,
                    velocity: [o.velocity.x, o.velocity.y, o.velocity.z],
                }
            })
            .collect();
        StateStreamFrame {
            seq: self.frame_seq,
            time: self.time(),
            tick: self.tick,
            paused: self.paused,
            robots,
            obstacles,
            plan: self.plan_status.clone(),
            metrics: self.metrics,
        }
    }

    pub fn world_info(&self) -> WorldInfo {
        let spec = self.env.spec();
        WorldInfo {
            bounds: *self.env.bounds(),
            grid_dims: spec.grid_dims,
            cell_size: spec.cell_size,
            dump: self.env.dump(),
            static_obstacles: self.env.obstacles().iter().filter(|o| o.kind == ObstacleKind::Static).copied().collect(),
        }
    }

    /// Applies one API command and builds its reply. Failures become error
    /// payloads; only transport faults inside the loop are returned as `Err`.
    pub fn apply(&mut self, cmd: &ApiCommand) -> ApiReply {
        let sent = |r: Result<(), SimError>| match r {
            Ok(()) => ApiReply::ok(cmd),
            Err(SimError::UnknownRobot(i)) => ApiReply::error("UnknownRobot", format!("no robot with index {i}")),
            Err(e) => ApiReply::error("RuntimeFault", e.to_string()),
        };
        match cmd {
            ApiCommand::Teleop { robot, axes } => {
                if axes.iter().any(|a| !(-1000..=1000).contains(a)) {
                    return ApiReply::error("InvalidRequest", "teleop axes must lie in [-1000, 1000]");
                }
                sent(self.teleop(*robot, *axes))
            }
            ApiCommand::Arm { robot, armed } => sent(self.arm(*robot, *armed)),
            ApiCommand::SetMode { robot, mode } => sent(self.set_mode(*robot, *mode)),
            ApiCommand::Plan { goals, planner, time_budget, seed } => {
                let mut pc = PlanCommand::new(goals.clone(), *planner);
                pc.time_budget = time_budget.unwrap_or(pc.time_budget);
                pc.seed = *seed;
                match self.request_plan(&pc) {
                    Ok(r) => ApiReply::PlanResult {
                        outcome: r.outcome,
                        computation_time: r.computation_time,
                        iterations: r.iterations,
                        path_length: r.path_length(),
                        path: r.path.unwrap_or_default(),
                    },
                    Err(e) => ApiReply::error(e.kind(), e.to_string()),
                }
            }
            ApiCommand::Pause => {
                self.pause();
                ApiReply::ok(cmd)
            }
            ApiCommand::Resume => {
                self.resume();
                ApiReply::ok(cmd)
            }
            ApiCommand::Step { count } => {
                if !self.paused {
                    return ApiReply::error("NotPaused", "step requires a paused simulation");
                }
                self.request_steps(*count);
                ApiReply::ok(cmd)
            }
            ApiCommand::GetWorld => ApiReply::World(self.world_info()),
        }
    }
}

fn port_config_error(e: crate::wire::PortError) -> SimError {
    let mut v = super::scenario::ValidationErrors::default();
    v.0.push(super::scenario::FieldError { field: "port_base".into(), message: e.to_string() });
    SimError::Config(ScenarioError::Validation(v))
}

/// Builds a running simulation from a validated configuration.
pub fn run_lockstep(cfg: ScenarioConfig) -> Result<Simulation, SimError> {
    Simulation::new(cfg)
}
