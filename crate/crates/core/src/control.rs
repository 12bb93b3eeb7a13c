//! Per-robot controller stack behind a joint-trajectory interface.
//!
//! Joints are `(x, y, z, yaw)`. A [`ControllerManager`] samples the active
//! trajectory, runs it through a [`TrackingController`] (the PID cascade by
//! default) and returns a body wrench for thrust allocation. Roll and pitch
//! are left to hydrostatic restoring.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hydro::{Vec3, Wrench};

pub const JOINT_NAMES: [&str; 4] = ["x", "y", "z", "yaw"];

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory for robot {got} sent to manager of robot {expected}")]
    WrongRobot { expected: usize, got: usize },
    #[error("trajectory has no points")]
    EmptyTrajectory,
    #[error("time_from_start must be strictly increasing (point {index})")]
    NonMonotoneTime { index: usize },
    #[error("joint names must be [x, y, z, yaw]")]
    BadJointNames,
    #[error("point {index} is not finite")]
    NonFinite { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub positions: [f64; 4],
    pub time_from_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTrajectoryMsg {
    pub robot_index: usize,
    pub joint_names: Vec<String>,
    pub points: Vec<TrajectoryPoint>,
}

impl JointTrajectoryMsg {
    /// Builds a message with standard joint names; yaw is wrapped into (−π, π].
    pub fn new(robot_index: usize, points: impl IntoIterator<Item = ([f64; 4], f64)>) -> Self {
        let points = points
            .into_iter()
            .map(|(mut p, t)| {
                p[3] = wrap_angle(p[3]);
                TrajectoryPoint { positions: p, time_from_start: t }
            })
            .collect();
        Self { robot_index, joint_names: JOINT_NAMES.iter().map(|s| s.to_string()).collect(), points }
    }

    pub fn hold(robot_index: usize, pose: [f64; 4]) -> Self {
        Self::new(robot_index, [(pose, 0.0)])
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        if self.joint_names.len() != 4 || self.joint_names.iter().zip(JOINT_NAMES).any(|(a, b)| a != b) {
            return Err(TrajectoryError::BadJointNames);
        }
        if self.points.is_empty() {
            return Err(TrajectoryError::EmptyTrajectory);
        }
        for (index, p) in self.points.iter().enumerate() {
            if !(p.positions.iter().all(|v| v.is_finite()) && p.time_from_start.is_finite()) {
                return Err(TrajectoryError::NonFinite { index });
            }
            if index > 0 && !(p.time_from_start > self.points[index - 1].time_from_start) {
                return Err(TrajectoryError::NonMonotoneTime { index });
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.time_from_start)
    }

    pub fn final_pose(&self) -> [f64; 4] {
        self.points.last().map_or([0.0; 4], |p| p.positions)
    }
}

/// Linear interpolation in x, y, z and shortest-arc in yaw; clamps outside
/// the time span.
pub fn sample_trajectory(traj: &JointTrajectoryMsg, t: f64) -> [f64; 4] {
    let pts = &traj.points;
    let first = &pts[0];
    if t <= first.time_from_start {
        return first.positions;
    }
    let last = &pts[pts.len() - 1];
    if t >= last.time_from_start {
        return last.positions;
    }
    // first index with time > t; guaranteed in 1..len
    let k = pts.partition_point(|p| p.time_from_start <= t);
    let (a, b) = (&pts[k - 1], &pts[k]);
    let s = (t - a.time_from_start) / (b.time_from_start - a.time_from_start);
    interpolate_pose(&a.positions, &b.positions, s)
}

pub fn interpolate_pose(a: &[f64; 4], b: &[f64; 4], s: f64) -> [f64; 4] {
    [
        a[0] + s * (b[0] - a[0]),
        a[1] + s * (b[1] - a[1]),
        a[2] + s * (b[2] - a[2]),
        wrap_angle(a[3] + s * wrap_angle(b[3] - a[3])),
    ]
}

/// What the controllers need to know about the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NavState {
    pub position: Vec3,
    pub yaw: f64,
    /// Body-frame linear velocity.
    pub body_velocity: Vec3,
    pub yaw_rate: f64,
}

impl NavState {
    pub fn pose(&self) -> [f64; 4] {
        [self.position.x, self.position.y, self.position.z, self.yaw]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: [f64; 4],
    pub ki: [f64; 4],
    pub kd: [f64; 4],
    pub integral_limit: [f64; 4],
}

impl PidGains {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.kp.iter().chain(&self.ki).chain(&self.kd).all(|g| *g >= 0.0)
            && self.integral_limit.iter().all(|l| *l > 0.0);
        if ok {
            Ok(())
        } else {
            Err("gains must be >= 0 and integral_limit > 0".into())
        }
    }

    pub fn proportional(kp: [f64; 4]) -> Self {
        Self { kp, ki: [0.0; 4], kd: [0.0; 4], integral_limit: [1.0; 4] }
    }
}

/// Integrator and derivative memory of one PID stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    /// Integral term (already multiplied by ki), clamped per axis.
    pub integral: [f64; 4],
    pub prev_error: Option<[f64; 4]>,
}

impl PidState {
    pub fn update(&mut self, gains: &PidGains, error: &[f64; 4], dt: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        for a in 0..4 {
            let lim = gains.integral_limit[a];
            self.integral[a] = (self.integral[a] + gains.ki[a] * error[a] * dt).clamp(-lim, lim);
            let d = self.prev_error.map_or(0.0, |p| (error[a] - p[a]) / dt);
            out[a] = gains.kp[a] * error[a] + self.integral[a] + gains.kd[a] * d;
        }
        self.prev_error = Some(*error);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeGains {
    pub pose: PidGains,
    pub velocity: PidGains,
    /// Saturation of the pose stage output (m/s, m/s, m/s, rad/s).
    pub max_velocity: [f64; 4],
}

impl Default for CascadeGains {
    fn default() -> Self {
        Self {
            pose: PidGains {
                kp: [1.0, 1.0, 1.0, 1.5],
                ki: [0.05, 0.05, 0.05, 0.05],
                kd: [0.0; 4],
                integral_limit: [0.2, 0.2, 0.2, 0.2],
            },
            velocity: PidGains {
                kp: [40.0, 40.0, 40.0, 3.0],
                ki: [5.0, 5.0, 5.0, 0.5],
                kd: [0.0; 4],
                integral_limit: [20.0, 20.0, 20.0, 2.0],
            },
            max_velocity: [1.0, 1.0, 0.6, 1.0],
        }
    }
}

/// World-frame pose error through a PID, rotated into a body velocity command.
pub fn pose_controller(
    setpoint: &[f64; 4],
    nav: &NavState,
    gains: &PidGains,
    max_velocity: &[f64; 4],
    dt: f64,
    state: &mut PidState,
) -> [f64; 4] {
    let e = [
        setpoint[0] - nav.position.x,
        setpoint[1] - nav.position.y,
        setpoint[2] - nav.position.z,
        wrap_angle(setpoint[3] - nav.yaw),
    ];
    let world = state.update(gains, &e, dt);
    let (s, c) = nav.yaw.sin_cos();
    let body = [c * world[0] + s * world[1], -s * world[0] + c * world[1], world[2], world[3]];
    std::array::from_fn(|a| body[a].clamp(-max_velocity[a], max_velocity[a]))
}

/// Body-velocity error through a PID into surge/sway/heave force and yaw torque.
pub fn velocity_controller(vel_cmd: &[f64; 4], nav: &NavState, gains: &PidGains, dt: f64, state: &mut PidState) -> Wrench {
    let v = nav.body_velocity;
    let e = [vel_cmd[0] - v.x, vel_cmd[1] - v.y, vel_cmd[2] - v.z, vel_cmd[3] - nav.yaw_rate];
    let u = state.update(gains, &e, dt);
    Wrench { force: Vec3::new(u[0], u[1], u[2]), torque: Vec3::new(0.0, 0.0, u[3]) }
}

/// Anything that can sit below the trajectory interface.
pub trait TrackingController: Send {
    fn reset(&mut self);
    fn track_pose(&mut self, setpoint: &[f64; 4], nav: &NavState, dt: f64) -> Wrench;
    fn track_velocity(&mut self, vel_cmd: &[f64; 4], nav: &NavState, dt: f64) -> Wrench;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PidCascade {
    pub gains: CascadeGains,
    pose_state: PidState,
    vel_state: PidState,
}

impl PidCascade {
    pub fn new(gains: CascadeGains) -> Self {
        Self { gains, ..Default::default() }
    }

    pub fn pose_state(&self) -> &PidState {
        &self.pose_state
    }

    pub fn velocity_state(&self) -> &PidState {
        &self.vel_state
    }
}

impl TrackingController for PidCascade {
    fn reset(&mut self) {
        self.pose_state = PidState::default();
        self.vel_state = PidState::default();
    }

    fn track_pose(&mut self, setpoint: &[f64; 4], nav: &NavState, dt: f64) -> Wrench {
        let v = pose_controller(setpoint, nav, &self.gains.pose, &self.gains.max_velocity, dt, &mut self.pose_state);
        velocity_controller(&v, nav, &self.gains.velocity, dt, &mut self.vel_state)
    }

    fn track_velocity(&mut self, vel_cmd: &[f64; 4], nav: &NavState, dt: f64) -> Wrench {
        velocity_controller(vel_cmd, nav, &self.gains.velocity, dt, &mut self.vel_state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Idle,
    Trajectory,
    Teleop,
}

/// Scale from ±1000 operator axes to body velocity.
pub const DEFAULT_TELEOP_VELOCITY: [f64; 4] = [0.5, 0.5, 0.3, 0.5];

#[derive(Debug, Clone)]
pub struct ControllerManager<C: TrackingController = PidCascade> {
    robot_index: usize,
    mode: ControlMode,
    trajectory: Option<JointTrajectoryMsg>,
    accepted_at: f64,
    hold: Option<[f64; 4]>,
    teleop_cmd: [f64; 4],
    teleop_scale: [f64; 4],
    controller: C,
}

impl ControllerManager<PidCascade> {
    pub fn new(robot_index: usize, gains: CascadeGains) -> Self {
        Self::with_controller(robot_index, PidCascade::new(gains))
    }
}

impl<C: TrackingController> ControllerManager<C> {
    pub fn with_controller(robot_index: usize, controller: C) -> Self {
        Self {
            robot_index,
            mode: ControlMode::Idle,
            trajectory: None,
            accepted_at: 0.0,
            hold: None,
            teleop_cmd: [0.0; 4],
            teleop_scale: DEFAULT_TELEOP_VELOCITY,
            controller,
        }
    }

    pub fn robot_index(&self) -> usize {
        self.robot_index
    }

    pub fn mode(&self) -> ControlMode {
        self.mode
    }

    pub fn controller(&self) -> &C {
        &self.controller
    }

    pub fn trajectory(&self) -> Option<&JointTrajectoryMsg> {
        self.trajectory.as_ref()
    }

    pub fn hold_pose(&self) -> Option<[f64; 4]> {
        self.hold
    }

    /// Replaces any active trajectory; its clock starts at `now`.
    pub fn trajectory_accept(&mut self, traj: JointTrajectoryMsg, now: f64) -> Result<(), TrajectoryError> {
        if traj.robot_index != self.robot_index {
            return Err(TrajectoryError::WrongRobot { expected: self.robot_index, got: traj.robot_index });
        }
        traj.validate()?;
        self.trajectory = Some(traj);
        self.accepted_at = now;
        self.set_mode(ControlMode::Trajectory);
        Ok(())
    }

    /// Operator axes (x, y, z, roll, pitch, yaw) in ±1000. Non-zero input
    /// overrides any trajectory at once; all-zero input returns to station
    /// keeping at the pose where the vehicle is on the next tick.
    pub fn teleop(&mut self, axes: [i16; 6]) {
        let sel = [axes[0], axes[1], axes[2], axes[5]];
        if sel.iter().all(|&a| a == 0) {
            if self.mode == ControlMode::Teleop {
                self.idle();
            }
            return;
        }
        self.teleop_cmd = std::array::from_fn(|a| sel[a].clamp(-1000, 1000) as f64 / 1000.0 * self.teleop_scale[a]);
        if self.mode != ControlMode::Teleop {
            self.trajectory = None;
            self.set_mode(ControlMode::Teleop);
        }
    }

    pub fn idle(&mut self) {
        self.trajectory = None;
        self.set_mode(ControlMode::Idle);
    }

    fn set_mode(&mut self, mode: ControlMode) {
        if mode != self.mode || mode == ControlMode::Trajectory {
            self.controller.reset();
        }
        if mode == ControlMode::Idle {
            self.hold = None;
        }
        self.mode = mode;
    }

    /// Trajectory time elapsed at `now`, if a trajectory is active.
    pub fn trajectory_time(&self, now: f64) -> Option<f64> {
        self.trajectory.as_ref().map(|_| now - self.accepted_at)
    }

    pub fn tick(&mut self, nav: &NavState, t: f64, dt: f64) -> Wrench {
        match self.mode {
            ControlMode::Teleop => self.controller.track_velocity(&self.teleop_cmd, nav, dt),
            ControlMode::Trajectory => {
                let traj = self.trajectory.as_ref().expect("trajectory mode has a trajectory");
                let sp = sample_trajectory(traj, (t - self.accepted_at).max(0.0));
                self.controller.track_pose(&sp, nav, dt)
            }
            ControlMode::Idle => {
                let hold = *self.hold.get_or_insert(nav.pose());
                self.controller.track_pose(&hold, nav, dt)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_world::CurrentField;
    use crate::hydro::{allocate_thrust, dynamics_step, VehicleParams, VehicleState};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn traj3() -> JointTrajectoryMsg {
        JointTrajectoryMsg::new(0, [([0.0, 0.0, 0.0, 0.0], 0.0), ([2.0, 0.0, 0.0, 0.0], 4.0), ([2.0, 2.0, -1.0, 1.0], 6.0)])
    }

    #[test]
    fn accept_and_replace() {
        let mut m = ControllerManager::new(0, CascadeGains::default());
        m.trajectory_accept(traj3(), 1.0).unwrap();
        assert_eq!(m.mode(), ControlMode::Trajectory);
        let b = JointTrajectoryMsg::new(0, [([5.0, 5.0, -2.0, 0.0], 0.0), ([6.0, 5.0, -2.0, 0.0], 1.0)]);
        m.trajectory_accept(b.clone(), 3.0).unwrap();
        assert_eq!(m.trajectory(), Some(&b));
        assert_eq!(m.trajectory_time(3.0), Some(0.0));
    }

    #[test]
    fn rejects_invalid_trajectories() {
        let mut m = ControllerManager::new(1, CascadeGains::default());
        assert!(matches!(m.trajectory_accept(traj3(), 0.0), Err(TrajectoryError::WrongRobot { .. })));
        let empty = JointTrajectoryMsg::new(1, []);
        assert_eq!(m.trajectory_accept(empty, 0.0), Err(TrajectoryError::EmptyTrajectory));
        let flat = JointTrajectoryMsg::new(1, [([0.0; 4], 1.0), ([1.0, 0.0, 0.0, 0.0], 1.0)]);
        assert_eq!(m.trajectory_accept(flat, 0.0), Err(TrajectoryError::NonMonotoneTime { index: 1 }));
        assert_eq!(m.mode(), ControlMode::Idle);
    }

    #[test]
    fn sampling_rules() {
        let tr = traj3();
        assert_eq!(sample_trajectory(&tr, 4.0), [2.0, 0.0, 0.0, 0.0]);
        assert_eq!(sample_trajectory(&tr, 2.0), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(sample_trajectory(&tr, -1.0), [0.0; 4]);
        assert_eq!(sample_trajectory(&tr, 100.0), [2.0, 2.0, -1.0, 1.0]);
        let yaw = JointTrajectoryMsg::new(0, [([0.0, 0.0, 0.0, 3.0], 0.0), ([0.0, 0.0, 0.0, -3.0], 2.0)]);
        let mid = sample_trajectory(&yaw, 1.0)[3];
        // shortest arc from 3.0 to −3.0 crosses ±π, midpoint 3.0 + (2π − 6)/2
        assert_relative_eq!(mid.abs(), PI, epsilon = 1e-12);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pose_p_only_and_zero() {
        let g = PidGains::proportional([0.8, 0.8, 0.8, 0.8]);
        let mut st = PidState::default();
        let nav = NavState::default();
        assert_eq!(pose_controller(&[0.0; 4], &nav, &g, &[1.0; 4], 0.02, &mut st), [0.0; 4]);
        let mut st = PidState::default();
        let out = pose_controller(&[0.5, 0.0, 0.0, 0.0], &nav, &g, &[1.0; 4], 0.02, &mut st);
        assert_eq!(out, [0.4, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn pose_rotates_into_body() {
        let g = PidGains::proportional([1.0; 4]);
        let nav = NavState { yaw: PI / 2.0, ..Default::default() };
        let out = pose_controller(&[0.5, 0.0, 0.0, PI / 2.0], &nav, &g, &[1.0; 4], 0.02, &mut PidState::default());
        // world +x is body −y when facing +y
        assert_relative_eq!(out[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(out[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn integral_accumulates_and_clamps() {
        let g = PidGains { kp: [0.0; 4], ki: [0.3; 4], kd: [0.0; 4], integral_limit: [0.25; 4] };
        let e = 0.7;
        let dt = 0.02;
        let mut st = PidState::default();
        for n in 1..=200 {
            pose_controller(&[e, 0.0, 0.0, 0.0], &NavState::default(), &g, &[10.0; 4], dt, &mut st);
            let expected = (0.3 * e * n as f64 * dt).clamp(-0.25, 0.25);
            assert_relative_eq!(st.integral[0], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn velocity_p_only() {
        let g = PidGains::proportional([2.0, 2.0, 7.0, 2.0]);
        let nav = NavState::default();
        let w = velocity_controller(&[0.0; 4], &nav, &g, 0.02, &mut PidState::default());
        assert_eq!(w, Wrench::zero());
        let w = velocity_controller(&[0.0, 0.0, 1.0, 0.0], &nav, &g, 0.02, &mut PidState::default());
        assert_eq!(w.force, Vec3::new(0.0, 0.0, 7.0));
        assert_eq!(w.torque, Vec3::zeros());
    }

    #[test]
    fn closed_loop_heave_matches_hand_simulation() {
        let params = VehicleParams::bluerov2_heavy();
        let f = params.file().clone();
        let g = PidGains { kp: [0.0, 0.0, 30.0, 0.0], ki: [0.0, 0.0, 4.0, 0.0], kd: [0.0; 4], integral_limit: [50.0; 4] };
        let dt = 0.02;
        let w_cmd = 0.3;
        let mut st = PidState::default();
        let mut s = VehicleState::at_rest(Vec3::new(0.0, 0.0, -5.0), 0.0);
        let mut got = Vec::new();
        for k in 0..5 {
            let nav = NavState { position: s.position, yaw: 0.0, body_velocity: s.lin_vel, yaw_rate: s.ang_vel.z };
            let wrench = velocity_controller(&[0.0, 0.0, w_cmd, 0.0], &nav, &g, dt, &mut st);
            let cmds = allocate_thrust(&wrench, &params).commands;
            s = dynamics_step(&s, &params, &cmds, &CurrentField::still(), k as f64 * dt, dt).unwrap();
            got.push(s.lin_vel.z);
        }
        // scalar recurrence
        let m = f.mass + f.added_mass[2];
        let (dl, dq) = (f.linear_drag[2], f.quadratic_drag[2]);
        let (mut w, mut integ) = (0.0f64, 0.0f64);
        for k in 0..5 {
            let e = w_cmd - w;
            integ = (integ + 4.0 * e * dt).clamp(-50.0, 50.0);
            let force = 30.0 * e + integ;
            w += dt * (force - dl * w - dq * w.abs() * w) / m;
            assert_relative_eq!(got[k], w, epsilon = 1e-9);
        }
    }

    #[test]
    fn manager_modes() {
        let mut m = ControllerManager::new(0, CascadeGains::default());
        let nav = NavState { position: Vec3::new(1.0, 2.0, -3.0), yaw: 0.4, ..Default::default() };
        let w = m.tick(&nav, 0.0, 0.02);
        assert!(w.force.norm() < 1e-9 && w.torque.norm() < 1e-9);
        assert_eq!(m.hold_pose(), Some([1.0, 2.0, -3.0, 0.4]));

        m.trajectory_accept(traj3(), 0.0).unwrap();
        m.tick(&nav, 0.02, 0.02);
        m.teleop([500, 0, 0, 0, 0, 0]);
        assert_eq!(m.mode(), ControlMode::Teleop);
        let w = m.tick(&nav, 0.04, 0.02);
        assert!(w.force.x > 0.0);
        m.teleop([0; 6]);
        assert_eq!(m.mode(), ControlMode::Idle);
    }

    #[test]
    fn perfect_tracking_needs_little_effort() {
        let mut m = ControllerManager::new(0, CascadeGains::default());
        m.trajectory_accept(traj3(), 0.0).unwrap();
        let dt = 0.02;
        for k in 0..300 {
            let t = k as f64 * dt;
            let sp = sample_trajectory(&traj3(), t);
            let nav = NavState { position: Vec3::new(sp[0], sp[1], sp[2]), yaw: sp[3], ..Default::default() };
            let w = m.tick(&nav, t, dt);
            assert!(w.force.norm() < 1e-9 && w.torque.norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn managers_are_independent(kp in 0.1..5.0f64, x in -5.0..5.0f64) {
            let nav = NavState { position: Vec3::new(x, 0.3, -2.0), yaw: 0.1, ..Default::default() };
            let mut b = ControllerManager::new(1, CascadeGains::default());
            let reference: Vec<Wrench> = {
                let mut b2 = ControllerManager::new(1, CascadeGains::default());
                (0..20).map(|k| b2.tick(&nav, k as f64 * 0.02, 0.02)).collect()
            };
            let mut gains = CascadeGains::default();
            gains.pose.kp = [kp; 4];
            let mut a = ControllerManager::new(0, gains);
            a.trajectory_accept(traj3(), 0.0).unwrap();
            for k in 0..20 {
                a.tick(&nav, k as f64 * 0.02, 0.02);
                if k == 5 { a.teleop([300, 0, 0, 0, 0, -200]); }
                prop_assert_eq!(b.tick(&nav, k as f64 * 0.02, 0.02), reference[k]);
            }
        }

        #[test]
        fn integral_never_exceeds_limit(errs in proptest::collection::vec(proptest::array::uniform4(-50.0..50.0f64), 1..200)) {
            let g = CascadeGains::default();
            let mut st = PidState::default();
            for e in errs {
                st.update(&g.velocity, &e, 0.02);
                for a in 0..4 {
                    prop_assert!(st.integral[a].abs() <= g.velocity.integral_limit[a]);
                }
            }
        }

        #[test]
        fn sampling_is_continuous(times in proptest::collection::vec(0.1..3.0f64, 1..6),
                                  poses in proptest::collection::vec(proptest::array::uniform4(-3.0..3.0f64), 7)) {
            let mut t = 0.0;
            let pts: Vec<([f64; 4], f64)> = std::iter::once((poses[0], 0.0))
                .chain(times.iter().zip(&poses[1..]).map(|(dt, p)| { t += dt; (*p, t) }))
                .collect();
            let tr = JointTrajectoryMsg::new(0, pts.clone());
            // max slope: 6 m over 0.1 s on positions, ≤ π over 0.1 s on yaw
            let h = 1e-3;
            let bound = 60.0 * h + 1e-9;
            let mut prev = sample_trajectory(&tr, -0.01);
            let mut s = -0.01 + h;
            while s < t + 0.05 {
                let cur = sample_trajectory(&tr, s);
                for a in 0..3 {
                    prop_assert!((cur[a] - prev[a]).abs() <= bound);
                }
                prop_assert!(wrap_angle(cur[3] - prev[3]).abs() <= 10.0 * PI * h + 1e-9);
                prev = cur;
                s += h;
            }
        }
    }
}
