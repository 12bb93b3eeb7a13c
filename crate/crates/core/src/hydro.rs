//! Six-degree-of-freedom vehicle dynamics with diagonal added mass and drag,
//! hydrostatic restoring forces, current advection and thrust allocation.
//!
//! Frames: world is z-up with the surface at z = 0; the body frame is
//! x-forward, y-left, z-up. Linear and angular velocities are body-frame.

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env_world::CurrentField;

pub type Vec3 = Vector3<f64>;

pub const GRAVITY: f64 = 9.81;
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum HydroError {
    #[error("state became non-finite")]
    NonFiniteState,
    #[error("time step {0} outside (0, {MAX_DT}]")]
    InvalidTimeStep(f64),
    #[error("thruster command vector has {got} entries, vehicle has {expected}")]
    CommandLength { expected: usize, got: usize },
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thruster {
    /// Mounting point, body frame (m).
    pub position: Vec3,
    /// Thrust direction, body frame. Normalised on load.
    pub direction: Vec3,
}

/// On-disk form of [`VehicleParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParamsFile {
    pub mass: f64,
    pub added_mass: [f64; 6],
    pub linear_drag: [f64; 6],
    pub quadratic_drag: [f64; 6],
    pub buoyancy_force: f64,
    pub center_of_buoyancy: Vec3,
    pub inertia_diag: Vec3,
    pub max_thrust: f64,
    #[serde(default = "default_collision_radius")]
    pub collision_radius: f64,
    pub thrusters: Vec<Thruster>,
}

fn default_collision_radius() -> f64 {
    0.35
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VehicleParamsFile", into = "VehicleParamsFile")]
pub struct VehicleParams {
    file: VehicleParamsFile,
    mass_diag: Vector6<f64>,
    thruster_matrix: DMatrix<f64>,
    allocation_matrix: DMatrix<f64>,
}

impl From<VehicleParams> for VehicleParamsFile {
    fn from(p: VehicleParams) -> Self {
        p.file
    }
}

impl TryFrom<VehicleParamsFile> for VehicleParams {
    type Error = HydroError;

    fn try_from(mut file: VehicleParamsFile) -> Result<Self, Self::Error> {
        let bad = |m: String| Err(HydroError::InvalidParams(m));
        if !(file.mass > 0.0) {
            return bad("mass must be > 0".into());
        }
        if !file.inertia_diag.iter().all(|&v| v > 0.0) {
            return bad("inertia_diag must be > 0".into());
        }
        if !file.added_mass.iter().all(|&v| v >= 0.0) {
            return bad("added_mass must be >= 0".into());
        }
        if !file.linear_drag.iter().chain(file.quadratic_drag.iter()).all(|&v| v >= 0.0) {
            return bad("drag coefficients must be >= 0".into());
        }
        if !(file.max_thrust > 0.0) {
            return bad("max_thrust must be > 0".into());
        }
        if !(file.collision_radius > 0.0) {
            return bad("collision_radius must be > 0".into());
        }
        if file.thrusters.is_empty() {
            return bad("at least one thruster is required".into());
        }
        for (i, t) in file.thrusters.iter_mut().enumerate() {
            let n = t.direction.norm();
            if !(n > 0.0 && n.is_finite()) {
                return bad(format!("thruster {i} has a zero direction"));
            }
            t.direction /= n;
        }
        let k = file.thrusters.len();
        if k < 6 {
            log::warn!("vehicle has {k} thrusters; fewer than 6 cannot fully actuate 6 DOF");
        }
        let mut thruster_matrix = DMatrix::zeros(6, k);
        for (j, t) in file.thrusters.iter().enumerate() {
            let torque = t.position.cross(&t.direction);
            for r in 0..3 {
                thruster_matrix[(r, j)] = t.direction[r];
                thruster_matrix[(r + 3, j)] = torque[r];
            }
        }
        let allocation_matrix = thruster_matrix
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| HydroError::InvalidParams(format!("pseudo-inverse failed: {e}")))?;
        let m = file.mass;
        let i = file.inertia_diag;
        let a = file.added_mass;
        let mass_diag = Vector6::new(m + a[0], m + a[1], m + a[2], i.x + a[3], i.y + a[4], i.z + a[5]);
        Ok(Self { file, mass_diag, thruster_matrix, allocation_matrix })
    }
}

impl VehicleParams {
    /// BlueROV2-Heavy-like vehicle with an 8-thruster vectored layout
    /// (4 horizontal at 45°, 4 vertical) and neutral buoyancy.
    pub fn bluerov2_heavy() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let horiz = |x: f64, y: f64, dx: f64, dy: f64| Thruster {
            position: Vec3::new(x, y, 0.0),
            direction: Vec3::new(dx, dy, 0.0),
        };
        let vert = |x: f64, y: f64| Thruster { position: Vec3::new(x, y, 0.0), direction: Vec3::z() };
        let mass = 11.5;
        VehicleParamsFile {
            mass,
            added_mass: [5.5, 12.7, 14.57, 0.12, 0.12, 0.12],
            linear_drag: [4.03, 6.22, 5.18, 0.07, 0.07, 0.07],
            quadratic_drag: [18.18, 21.66, 36.99, 1.55, 1.55, 1.55],
            buoyancy_force: mass * GRAVITY,
            center_of_buoyancy: Vec3::new(0.0, 0.0, 0.02),
            inertia_diag: Vec3::new(0.16, 0.16, 0.16),
            max_thrust: 40.0,
            collision_radius: default_collision_radius(),
            thrusters: vec![
                horiz(0.156, -0.111, h, h),
                horiz(0.156, 0.111, h, -h),
                horiz(-0.156, -0.111, h, -h),
                horiz(-0.156, 0.111, h, h),
                vert(0.12, -0.218),
                vert(0.12, 0.218),
                vert(-0.12, -0.218),
                vert(-0.12, 0.218),
            ],
        }
        .try_into()
        .expect("built-in vehicle parameters are valid")
    }

    pub fn file(&self) -> &VehicleParamsFile {
        &self.file
    }

    pub fn mass(&self) -> f64 {
        self.file.mass
    }

    pub fn max_thrust(&self) -> f64 {
        self.file.max_thrust
    }

    pub fn collision_radius(&self) -> f64 {
        self.file.collision_radius
    }

    pub fn thruster_count(&self) -> usize {
        self.file.thrusters.len()
    }

    /// 6×K map from thruster forces to body wrench `[force; torque]`.
    pub fn thruster_matrix(&self) -> &DMatrix<f64> {
        &self.thruster_matrix
    }

    /// Rigid-body plus added-mass diagonal.
    pub fn mass_diag(&self) -> &Vector6<f64> {
        &self.mass_diag
    }

    pub fn with_buoyancy(mut self, buoyancy_force: f64, center_of_buoyancy: Vec3) -> Self {
        self.file.buoyancy_force = buoyancy_force;
        self.file.center_of_buoyancy = center_of_buoyancy;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self { force: v.fixed_rows::<3>(0).into(), torque: v.fixed_rows::<3>(3).into() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.force.x, self.force.y, self.force.z, self.torque.x, self.torque.y, self.torque.z)
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
    pub lin_vel: Vec3,
    pub ang_vel: Vec3,
}

impl VehicleState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            lin_vel: Vec3::zeros(),
            ang_vel: Vec3::zeros(),
        }
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    pub fn world_velocity(&self) -> Vec3 {
        self.orientation * self.lin_vel
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.lin_vel.iter())
            .chain(self.ang_vel.iter())
            .chain(self.orientation.coords.iter())
            .all(|v| v.is_finite())
    }

    /// ½ νᵀ M ν with the rigid-body plus added-mass diagonal.
    pub fn kinetic_energy(&self, params: &VehicleParams) -> f64 {
        let m = params.mass_diag();
        let nu = [self.lin_vel.x, self.lin_vel.y, self.lin_vel.z, self.ang_vel.x, self.ang_vel.y, self.ang_vel.z];
        0.5 * nu.iter().zip(m.iter()).map(|(v, m)| m * v * v).sum::<f64>()
    }
}

/// Gravity at the centre of mass and buoyancy at the centre of buoyancy,
/// expressed in the body frame.
pub fn restoring_wrench(orientation: &UnitQuaternion<f64>, params: &VehicleParams) -> Wrench {
    let weight = params.file.mass * GRAVITY;
    let buoyancy = params.file.buoyancy_force;
    let inv = orientation.inverse();
    let f_net = inv * Vec3::new(0.0, 0.0, buoyancy - weight);
    let f_buoy = inv * Vec3::new(0.0, 0.0, buoyancy);
    Wrench { force: f_net, torque: params.file.center_of_buoyancy.cross(&f_buoy) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub commands: Vec<f64>,
    pub saturated: bool,
}

/// Minimum-norm thruster forces for `wrench`, clamped to ±max_thrust.
pub fn allocate_thrust(wrench: &Wrench, params: &VehicleParams) -> Allocation {
    let w = DVector::from_column_slice(wrench.to_vector().as_slice());
    let raw = &params.allocation_matrix * w;
    let limit = params.file.max_thrust;
    let mut saturated = false;
    let commands = raw
        .iter()
        .map(|&f| {
            if f.abs() > limit {
                saturated = true;
            }
            f.clamp(-limit, limit)
        })
        .collect();
    Allocation { commands, saturated }
}

/// Body wrench produced by a set of thruster forces (after clamping).
pub fn thrust_wrench(cmds: &[f64], params: &VehicleParams) -> Wrench {
    let limit = params.file.max_thrust;
    let clamped = DVector::from_iterator(cmds.len(), cmds.iter().map(|f| f.clamp(-limit, limit)));
    let w = &params.thruster_matrix * clamped;
    Wrench { force: Vec3::new(w[0], w[1], w[2]), torque: Vec3::new(w[3], w[4], w[5]) }
}

/// One semi-implicit Euler step: velocities first, then pose with the new
/// velocities. Drag acts on the velocity relative to the water.
pub fn dynamics_step(
    state: &VehicleState,
    params: &VehicleParams,
    thruster_cmds: &[f64],
    field: &CurrentField,
    t: f64,
    dt: f64,
) -> Result<VehicleState, HydroError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(HydroError::InvalidTimeStep(dt));
    }
    if thruster_cmds.len() != params.thruster_count() {
        return Err(HydroError::CommandLength { expected: params.thruster_count(), got: thruster_cmds.len() });
    }
    let thrust = thrust_wrench(thruster_cmds, params);
    step_with_wrench(state, params, &thrust, field, t, dt)
}

pub(crate) fn step_with_wrench(
    state: &VehicleState,
    params: &VehicleParams,
    thrust: &Wrench,
    field: &CurrentField,
    t: f64,
    dt: f64,
) -> Result<VehicleState, HydroError> {
    let current_body = state.orientation.inverse() * field.sample(&state.position, t);
    let v_rel = state.lin_vel - current_body;
    let nu_r = Vector6::new(v_rel.x, v_rel.y, v_rel.z, state.ang_vel.x, state.ang_vel.y, state.ang_vel.z);
    let restoring = restoring_wrench(&state.orientation, params).to_vector();
    let d_lin = Vector6::from_row_slice(&params.file.linear_drag);
    let d_quad = Vector6::from_row_slice(&params.file.quadratic_drag);
    let tau = thrust.to_vector() + restoring - d_lin.component_mul(&nu_r) - d_quad.component_mul(&nu_r.abs()).component_mul(&nu_r);
    let acc = tau.component_div(&params.mass_diag);

    let lin_vel = state.lin_vel + acc.fixed_rows::<3>(0) * dt;
    let ang_vel = state.ang_vel + acc.fixed_rows::<3>(3) * dt;
    let position = state.position + (state.orientation * lin_vel) * dt;
    let rotated = state.orientation * UnitQuaternion::from_scaled_axis(ang_vel * dt);
    let orientation = UnitQuaternion::new_normalize(rotated.into_inner());

    let next = VehicleState { position, orientation, lin_vel, ang_vel };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(HydroError::NonFiniteState)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use proptest::prelude::*;

    #[test]
    fn neutral_level_vehicle_stays_put() {
        let p = VehicleParams::bluerov2_heavy();
        let s0 = VehicleState::at_rest(Vec3::new(1.0, 2.0, -3.0), 0.0);
        let mut s = s0;
        let zero = vec![0.0; p.thruster_count()];
        for k in 0..500 {
            s = dynamics_step(&s, &p, &zero, &CurrentField::still(), k as f64 * 0.02, 0.02).unwrap();
        }
        assert!((s.position - s0.position).norm() < 1e-9);
        assert!(s.lin_vel.norm() < 1e-12 && s.ang_vel.norm() < 1e-12);
    }

    #[test]
    fn drifts_to_current_velocity() {
        let p = VehicleParams::bluerov2_heavy();
        let mut s = VehicleState::at_rest(Vec3::new(0.0, 0.0, -5.0), 0.3);
        let zero = vec![0.0; p.thruster_count()];
        let field = CurrentField::constant(Vec3::new(1.0, 0.0, 0.0));
        for k in 0..3000 {
            s = dynamics_step(&s, &p, &zero, &field, k as f64 * 0.02, 0.02).unwrap();
        }
        let v = s.world_velocity();
        assert!((v - Vec3::new(1.0, 0.0, 0.0)).norm() < 0.01, "{v}");
    }

    #[test]
    fn single_step_matches_scalar_transcription() {
        let p = VehicleParams::bluerov2_heavy().with_buoyancy(11.5 * GRAVITY + 2.0, Vec3::new(0.01, -0.02, 0.05));
        let f = p.file().clone();
        let q = UnitQuaternion::from_euler_angles(0.1, -0.2, 0.7);
        let s = VehicleState {
            position: Vec3::new(1.0, -2.0, -4.0),
            orientation: q,
            lin_vel: Vec3::new(0.3, -0.1, 0.05),
            ang_vel: Vec3::new(0.02, 0.01, -0.2),
        };
        let cmds = [5.0, -3.0, 2.0, 1.0, 4.0, -4.0, 0.5, 0.0];
        let field = CurrentField {
            base: Vec3::new(0.2, 0.1, 0.0),
            gust_amplitude: Vec3::new(0.1, 0.0, 0.05),
            gust_period: 7.0,
            gust_phase: 0.3,
        };
        let (t, dt) = (1.7, 0.02);
        let next = dynamics_step(&s, &p, &cmds, &field, t, dt).unwrap();

        // Independent scalar evaluation with an explicit rotation matrix.
        let (qw, qx, qy, qz) = (q.w, q.i, q.j, q.k);
        let r = Matrix3::new(
            1.0 - 2.0 * (qy * qy + qz * qz), 2.0 * (qx * qy - qw * qz), 2.0 * (qx * qz + qw * qy),
            2.0 * (qx * qy + qw * qz), 1.0 - 2.0 * (qx * qx + qz * qz), 2.0 * (qy * qz - qw * qx),
            2.0 * (qx * qz - qw * qy), 2.0 * (qy * qz + qw * qx), 1.0 - 2.0 * (qx * qx + qy * qy),
        );
        let s_ = (2.0 * std::f64::consts::PI * t / 7.0 + 0.3).sin();
        let cur_w = [0.2 + 0.1 * s_, 0.1, 0.05 * s_];
        let mut cur_b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                cur_b[i] += r[(j, i)] * cur_w[j];
            }
        }
        let mut tau_t = [0.0; 6];
        for (k, th) in f.thrusters.iter().enumerate() {
            let d = th.direction;
            let pos = th.position;
            let m = [pos.y * d.z - pos.z * d.y, pos.z * d.x - pos.x * d.z, pos.x * d.y - pos.y * d.x];
            for a in 0..3 {
                tau_t[a] += d[a] * cmds[k];
                tau_t[a + 3] += m[a] * cmds[k];
            }
        }
        let w = f.mass * GRAVITY;
        let b = f.buoyancy_force;
        let fb = [r[(2, 0)] * b, r[(2, 1)] * b, r[(2, 2)] * b];
        let fnet = [r[(2, 0)] * (b - w), r[(2, 1)] * (b - w), r[(2, 2)] * (b - w)];
        let c = f.center_of_buoyancy;
        let tr = [c.y * fb[2] - c.z * fb[1], c.z * fb[0] - c.x * fb[2], c.x * fb[1] - c.y * fb[0]];
        let nu = [s.lin_vel.x, s.lin_vel.y, s.lin_vel.z, s.ang_vel.x, s.ang_vel.y, s.ang_vel.z];
        let rig = [f.mass, f.mass, f.mass, f.inertia_diag.x, f.inertia_diag.y, f.inertia_diag.z];
        let mut nu_next = [0.0; 6];
        for i in 0..6 {
            let vr = if i < 3 { nu[i] - cur_b[i] } else { nu[i] };
            let rest = if i < 3 { fnet[i] } else { tr[i - 3] };
            let tau = tau_t[i] + rest - f.linear_drag[i] * vr - f.quadratic_drag[i] * vr.abs() * vr;
            nu_next[i] = nu[i] + dt * tau / (rig[i] + f.added_mass[i]);
        }
        for i in 0..3 {
            assert_relative_eq!(next.lin_vel[i], nu_next[i], epsilon = 1e-12);
            assert_relative_eq!(next.ang_vel[i], nu_next[i + 3], epsilon = 1e-12);
            let mut dp = 0.0;
            for j in 0..3 {
                dp += r[(i, j)] * nu_next[j];
            }
            assert_relative_eq!(next.position[i], s.position[i] + dt * dp, epsilon = 1e-12);
        }
    }

    #[test]
    fn restoring_level_and_rolled() {
        let p = VehicleParams::bluerov2_heavy().with_buoyancy(120.0, Vec3::new(0.0, 0.0, 0.05));
        let w = restoring_wrench(&UnitQuaternion::identity(), &p);
        assert_relative_eq!(w.torque, Vec3::zeros(), epsilon = 1e-15);
        assert_relative_eq!(w.force, Vec3::new(0.0, 0.0, 120.0 - 11.5 * GRAVITY), epsilon = 1e-12);

        let rolled = UnitQuaternion::from_euler_angles(std::f64::consts::FRAC_PI_2, 0.0, 0.0);
        let w = restoring_wrench(&rolled, &p);
        assert!(w.torque.x < 0.0, "positive roll must produce a negative righting torque");
        let pitched = UnitQuaternion::from_euler_angles(0.0, 0.4, 0.0);
        assert!(restoring_wrench(&pitched, &p).torque.y < 0.0);
    }

    #[test]
    fn restoring_matches_rotation_matrix() {
        let p = VehicleParams::bluerov2_heavy().with_buoyancy(115.0, Vec3::new(0.03, -0.01, 0.04));
        let q = UnitQuaternion::from_euler_angles(0.4, -0.3, 2.0);
        let r = q.to_rotation_matrix().into_inner();
        let fb = r.transpose() * Vec3::new(0.0, 0.0, 115.0);
        let fg = r.transpose() * Vec3::new(0.0, 0.0, -11.5 * GRAVITY);
        let w = restoring_wrench(&q, &p);
        assert_relative_eq!(w.force, fb + fg, epsilon = 1e-12);
        assert_relative_eq!(w.torque, Vec3::new(0.03, -0.01, 0.04).cross(&fb), epsilon = 1e-12);
    }

    #[test]
    fn allocation_zero_and_heave_symmetry() {
        let p = VehicleParams::bluerov2_heavy();
        let a = allocate_thrust(&Wrench::zero(), &p);
        assert!(a.commands.iter().all(|&c| c == 0.0) && !a.saturated);
        let a = allocate_thrust(&Wrench { force: Vec3::new(0.0, 0.0, 20.0), torque: Vec3::zeros() }, &p);
        for c in &a.commands[..4] {
            assert!(c.abs() < 1e-12);
        }
        for c in &a.commands[4..] {
            assert_relative_eq!(*c, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn allocation_saturates() {
        let p = VehicleParams::bluerov2_heavy();
        let a = allocate_thrust(&Wrench { force: Vec3::new(0.0, 0.0, 1000.0), torque: Vec3::zeros() }, &p);
        assert!(a.saturated);
        assert!(a.commands.iter().all(|c| c.abs() <= 40.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = VehicleParams::bluerov2_heavy();
        let s = VehicleState::at_rest(Vec3::zeros(), 0.0);
        let zero = vec![0.0; 8];
        assert_eq!(
            dynamics_step(&s, &p, &zero, &CurrentField::still(), 0.0, 0.5),
            Err(HydroError::InvalidTimeStep(0.5))
        );
        assert!(matches!(
            dynamics_step(&s, &p, &zero[..3], &CurrentField::still(), 0.0, 0.02),
            Err(HydroError::CommandLength { .. })
        ));
        let mut bad = s;
        bad.lin_vel.x = f64::NAN;
        assert_eq!(
            dynamics_step(&bad, &p, &zero, &CurrentField::still(), 0.0, 0.02),
            Err(HydroError::NonFiniteState)
        );
        let mut f = p.file().clone();
        f.mass = 0.0;
        assert!(VehicleParams::try_from(f).is_err());
    }

    #[test]
    fn params_round_trip_toml() {
        let p = VehicleParams::bluerov2_heavy();
        let text = toml::to_string(&p).unwrap();
        let back: VehicleParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn quaternion_norm_holds_over_long_runs() {
        let p = VehicleParams::bluerov2_heavy();
        let mut s = VehicleState::at_rest(Vec3::new(0.0, 0.0, -5.0), 0.0);
        s.ang_vel = Vec3::new(0.3, -0.2, 0.5);
        let cmds = [3.0, -2.0, 1.0, 0.0, 2.0, -1.0, 0.5, 0.2];
        let field = CurrentField::constant(Vec3::new(0.1, 0.0, 0.0));
        for k in 0..100_000 {
            s = dynamics_step(&s, &p, &cmds, &field, k as f64 * 0.02, 0.02).unwrap();
            assert!((s.orientation.coords.norm() - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn allocation_reconstructs_wrench(fx in -30.0..30.0f64, fy in -30.0..30.0f64, fz in -30.0..30.0f64,
                                          mx in -3.0..3.0f64, my in -3.0..3.0f64, mz in -3.0..3.0f64) {
            let p = VehicleParams::bluerov2_heavy();
            let w = Wrench { force: Vec3::new(fx, fy, fz), torque: Vec3::new(mx, my, mz) };
            let a = allocate_thrust(&w, &p);
            prop_assume!(!a.saturated);
            let back = thrust_wrench(&a.commands, &p);
            prop_assert!((back.to_vector() - w.to_vector()).norm() < 1e-9);
        }

        #[test]
        fn steps_are_deterministic(vx in -1.0..1.0f64, wz in -1.0..1.0f64, c in -40.0..40.0f64) {
            let p = VehicleParams::bluerov2_heavy();
            let mut s = VehicleState::at_rest(Vec3::zeros(), 0.2);
            s.lin_vel.x = vx;
            s.ang_vel.z = wz;
            let cmds = [c, 0.0, -c, 1.0, 0.0, c, 0.0, 0.0];
            let f = CurrentField::constant(Vec3::new(0.1, 0.2, 0.0));
            let a = dynamics_step(&s, &p, &cmds, &f, 0.3, 0.02).unwrap();
            let b = dynamics_step(&s, &p, &cmds, &f, 0.3, 0.02).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
