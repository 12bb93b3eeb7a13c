//! Simulated IMU, compass, depth and position-fix readings.

use nalgebra::UnitQuaternion;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::hydro::{Vec3, VehicleState, GRAVITY};
use crate::wire::message::{sensor_flags, SensorPayload};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoiseConfig {
    pub accel_std: f64,
    pub gyro_std: f64,
    pub heading_std: f64,
    pub depth_std: f64,
    pub fix_std: f64,
    pub fix_rate: f64,
    pub depth_rate: f64,
    pub imu_rate: f64,
}

impl Default for SensorNoiseConfig {
    fn default() -> Self {
        Self {
            accel_std: 0.05,
            gyro_std: 0.005,
            heading_std: 0.01,
            depth_std: 0.02,
            fix_std: 0.05,
            fix_rate: 5.0,
            depth_rate: 25.0,
            imu_rate: 50.0,
        }
    }
}

impl SensorNoiseConfig {
    pub fn noiseless() -> Self {
        Self { accel_std: 0.0, gyro_std: 0.0, heading_std: 0.0, depth_std: 0.0, fix_std: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let stds = [self.accel_std, self.gyro_std, self.heading_std, self.depth_std, self.fix_std];
        if !stds.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err("sensor noise std must be >= 0".into());
        }
        if !([self.fix_rate, self.depth_rate, self.imu_rate].iter().all(|r| *r > 0.0)) {
            return Err("sensor rates must be > 0".into());
        }
        Ok(())
    }
}

/// Decimation: a sensor at `rate` fires on ticks that are multiples of
/// `round(1 / (rate·dt))` (at least every tick).
pub fn is_due(rate: f64, tick: u64, dt: f64) -> bool {
    let period = (1.0 / (rate * dt)).round().max(1.0) as u64;
    tick % period == 0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuReading {
    pub accel: Vec3,
    pub gyro: Vec3,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorReadings {
    pub time: f64,
    pub imu: Option<ImuReading>,
    pub depth: Option<f64>,
    pub fix: Option<Vec3>,
}

impl SensorReadings {
    pub fn to_payload(&self) -> SensorPayload {
        let f3 = |v: &Vec3| [v.x as f32, v.y as f32, v.z as f32];
        let mut p = SensorPayload { time_ms: (self.time * 1000.0).round() as u32, ..Default::default() };
        if let Some(imu) = &self.imu {
            p.flags |= sensor_flags::IMU;
            p.accel = f3(&imu.accel);
            p.gyro = f3(&imu.gyro);
            p.heading = imu.heading as f32;
        }
        if let Some(d) = self.depth {
            p.flags |= sensor_flags::DEPTH;
            p.depth = d as f32;
        }
        if let Some(f) = &self.fix {
            p.flags |= sensor_flags::FIX;
            p.fix = f3(f);
        }
        p
    }

    pub fn from_payload(p: &SensorPayload) -> Self {
        let v3 = |a: &[f32; 3]| Vec3::new(a[0] as f64, a[1] as f64, a[2] as f64);
        Self {
            time: p.time_ms as f64 / 1000.0,
            imu: (p.flags & sensor_flags::IMU != 0).then(|| ImuReading {
                accel: v3(&p.accel),
                gyro: v3(&p.gyro),
                heading: p.heading as f64,
            }),
            depth: (p.flags & sensor_flags::DEPTH != 0).then_some(p.depth as f64),
            fix: (p.flags & sensor_flags::FIX != 0).then(|| v3(&p.fix)),
        }
    }
}

/// Ground truth the sensor model needs beyond the state itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueKinematics {
    pub state: VehicleState,
    /// World-frame linear acceleration over the last step.
    pub world_accel: Vec3,
}

impl TrueKinematics {
    pub fn at_rest(state: VehicleState) -> Self {
        Self { state, world_accel: Vec3::zeros() }
    }
}

/// Every noise draw is taken whether or not the sensor fires, so the stream
/// position depends only on the tick count.
pub fn simulate_sensors<R: Rng + ?Sized>(
    truth: &TrueKinematics,
    cfg: &SensorNoiseConfig,
    rng: &mut R,
    tick: u64,
    dt: f64,
) -> SensorReadings {
    let mut n = |std: f64| -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        std * z
    };
    let mut n3 = |std: f64| Vec3::new(n(std), n(std), n(std));
    let accel_noise = n3(cfg.accel_std);
    let gyro_noise = n3(cfg.gyro_std);
    let fix_noise = n3(cfg.fix_std);
    let heading_noise = n(cfg.heading_std);
    let depth_noise = n(cfg.depth_std);

    let s = &truth.state;
    let specific_force = s.orientation.inverse() * (truth.world_accel + Vec3::new(0.0, 0.0, GRAVITY));
    SensorReadings {
        time: tick as f64 * dt,
        imu: is_due(cfg.imu_rate, tick, dt).then(|| ImuReading {
            accel: specific_force + accel_noise,
            gyro: s.ang_vel + gyro_noise,
            heading: crate::control::wrap_angle(s.yaw() + heading_noise),
        }),
        depth: is_due(cfg.depth_rate, tick, dt).then(|| -s.position.z + depth_noise),
        fix: is_due(cfg.fix_rate, tick, dt).then(|| s.position + fix_noise),
    }
}

/// Roll and pitch implied by a specific-force vector at rest.
pub fn tilt_from_accel(accel: &Vec3) -> (f64, f64) {
    let roll = accel.y.atan2(accel.z);
    let pitch = (-accel.x).atan2((accel.y * accel.y + accel.z * accel.z).sqrt());
    (roll, pitch)
}

pub fn attitude_from_imu(imu: &ImuReading) -> UnitQuaternion<f64> {
    let (roll, pitch) = tilt_from_accel(&imu.accel);
    UnitQuaternion::from_euler_angles(roll, pitch, imu.heading)
}
