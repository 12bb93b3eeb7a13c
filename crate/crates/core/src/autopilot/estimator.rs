//! Per-axis linear Kalman filter for position/velocity plus a complementary
//! attitude filter.

use nalgebra::{Matrix2, UnitQuaternion, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sensors::{attitude_from_imu, tilt_from_accel, SensorReadings};
use crate::control::{wrap_angle, NavState};
use crate::hydro::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("filter divergence: covariance trace {trace} exceeds {ceiling}")]
    FilterDivergence { trace: f64, ceiling: f64 },
    #[error("time step must be > 0, got {0}")]
    InvalidTimeStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// White-acceleration spectral density.
    pub process_noise: f64,
    /// Measurement variances for fix and depth.
    pub fix_var: f64,
    pub depth_var: f64,
    /// Lower bound applied to every measurement variance.
    pub min_measurement_var: f64,
    /// Weight on gyro integration in the attitude blend.
    pub attitude_alpha: f64,
    pub initial_pos_var: f64,
    pub initial_vel_var: f64,
    pub covariance_ceiling: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            process_noise: 0.05,
            fix_var: 0.05 * 0.05,
            depth_var: 0.02 * 0.02,
            min_measurement_var: 1e-9,
            attitude_alpha: 0.98,
            initial_pos_var: 100.0,
            initial_vel_var: 1.0,
            covariance_ceiling: 1e7,
        }
    }
}

/// Two-state (position, velocity) filter with constant-velocity model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisFilter {
    pub x: Vector2<f64>,
    pub p: Matrix2<f64>,
}

impl AxisFilter {
    pub fn new(pos: f64, vel: f64, pos_var: f64, vel_var: f64) -> Self {
        Self { x: Vector2::new(pos, vel), p: Matrix2::new(pos_var, 0.0, 0.0, vel_var) }
    }

    pub fn transition(dt: f64) -> Matrix2<f64> {
        Matrix2::new(1.0, dt, 0.0, 1.0)
    }

    pub fn process_cov(dt: f64, q: f64) -> Matrix2<f64> {
        let (d2, d3) = (dt * dt, dt * dt * dt);
        Matrix2::new(d3 / 3.0, d2 / 2.0, d2 / 2.0, dt) * q
    }

    pub fn predict(&mut self, dt: f64, q: f64) {
        let f = Self::transition(dt);
        self.x = f * self.x;
        self.p = f * self.p * f.transpose() + Self::process_cov(dt, q);
    }

    /// Position measurement `z` with variance `r`.
    pub fn update(&mut self, z: f64, r: f64) {
        let s = self.p[(0, 0)] + r;
        let k = Vector2::new(self.p[(0, 0)] / s, self.p[(1, 0)] / s);
        let y = z - self.x[0];
        self.x += k * y;
        let p = self.p;
        self.p = Matrix2::new(
            (1.0 - k[0]) * p[(0, 0)],
            (1.0 - k[0]) * p[(0, 1)],
            p[(1, 0)] - k[1] * p[(0, 0)],
            p[(1, 1)] - k[1] * p[(0, 1)],
        );
        let off = 0.5 * (self.p[(0, 1)] + self.p[(1, 0)]);
        self.p[(0, 1)] = off;
        self.p[(1, 0)] = off;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedState {
    pub position: Vec3,
    /// World-frame velocity.
    pub lin_vel: Vec3,
    pub orientation: UnitQuaternion<f64>,
    /// Body rates, taken from the gyro.
    pub ang_vel: Vec3,
    pub covariance: [Matrix2<f64>; 3],
}

impl EstimatedState {
    pub fn covariance_trace(&self) -> f64 {
        self.covariance.iter().map(|p| p.trace()).sum()
    }

    pub fn yaw(&self) -> f64 {
        self.orientation.euler_angles().2
    }

    pub fn nav(&self) -> NavState {
        NavState {
            position: self.position,
            yaw: self.yaw(),
            body_velocity: self.orientation.inverse() * self.lin_vel,
            yaw_rate: self.ang_vel.z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    axes: [AxisFilter; 3],
    orientation: UnitQuaternion<f64>,
    ang_vel: Vec3,
    attitude_initialized: bool,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Self {
        let axis = AxisFilter::new(0.0, 0.0, cfg.initial_pos_var, cfg.initial_vel_var);
        Self {
            cfg,
            axes: [axis; 3],
            orientation: UnitQuaternion::identity(),
            ang_vel: Vec3::zeros(),
            attitude_initialized: false,
        }
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn axis(&self, i: usize) -> &AxisFilter {
        &self.axes[i]
    }

    pub fn state(&self) -> EstimatedState {
        EstimatedState {
            position: Vec3::from_fn(|i, _| self.axes[i].x[0]),
            lin_vel: Vec3::from_fn(|i, _| self.axes[i].x[1]),
            orientation: self.orientation,
            ang_vel: self.ang_vel,
            covariance: [self.axes[0].p, self.axes[1].p, self.axes[2].p],
        }
    }

    /// Predicts over `dt`, then folds in whichever readings are present.
    /// Depth takes precedence over the fix for the z axis.
    pub fn step(&mut self, readings: &SensorReadings, dt: f64) -> Result<EstimatedState, EstimatorError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EstimatorError::InvalidTimeStep(dt));
        }
        let c = self.cfg;
        for a in &mut self.axes {
            a.predict(dt, c.process_noise);
        }
        if let Some(fix) = readings.fix {
            let r = c.fix_var.max(c.min_measurement_var);
            self.axes[0].update(fix.x, r);
            self.axes[1].update(fix.y, r);
            if readings.depth.is_none() {
                self.axes[2].update(fix.z, r);
            }
        }
        if let Some(depth) = readings.depth {
            self.axes[2].update(-depth, c.depth_var.max(c.min_measurement_var));
        }
        if let Some(imu) = &readings.imu {
            self.ang_vel = imu.gyro;
            if self.attitude_initialized {
                let gyro_q = self.orientation * UnitQuaternion::from_scaled_axis(imu.gyro * dt);
                let (gr, gp, gy) = gyro_q.euler_angles();
                let (ar, ap) = tilt_from_accel(&imu.accel);
                let a = c.attitude_alpha;
                let blend = |g: f64, m: f64| wrap_angle(g + (1.0 - a) * wrap_angle(m - g));
                self.orientation =
                    UnitQuaternion::from_euler_angles(blend(gr, ar), blend(gp, ap), blend(gy, imu.heading));
            } else {
                self.orientation = attitude_from_imu(imu);
                self.attitude_initialized = true;
            }
        }
        let st = self.state();
        let trace = st.covariance_trace();
        if !(trace <= c.covariance_ceiling) {
            return Err(EstimatorError::FilterDivergence { trace, ceiling: c.covariance_ceiling });
        }
        Ok(st)
    }
}

/// Free-function form: advances `est` by one step.
pub fn estimate_step(
    est: &mut Estimator,
    readings: &SensorReadings,
    dt: f64,
) -> Result<EstimatedState, EstimatorError> {
    est.step(readings, dt)
}
