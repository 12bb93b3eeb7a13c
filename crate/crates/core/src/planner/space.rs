//! Composite configuration space of all robots and its validity checks.

use rand::Rng;
use std::f64::consts::PI;

use crate::collision::{BodyGeometry, CollisionWorld};
use crate::control::{interpolate_pose, wrap_angle};
use crate::env_world::{ObstacleSnapshot, WorldBounds};
use crate::hydro::Vec3;

/// One (x, y, z, yaw) per robot.
pub type CompositeConfig = Vec<[f64; 4]>;

/// Metres charged per radian of yaw in the composite metric.
pub const YAW_WEIGHT: f64 = 0.5;

pub fn distance(a: &[[f64; 4]], b: &[[f64; 4]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| {
            let dp = Vec3::new(q[0] - p[0], q[1] - p[1], q[2] - p[2]).norm();
            dp + YAW_WEIGHT * wrap_angle(q[3] - p[3]).abs()
        })
        .sum()
}

pub fn interpolate(a: &[[f64; 4]], b: &[[f64; 4]], s: f64) -> CompositeConfig {
    if s == 0.0 {
        return a.to_vec();
    }
    if s == 1.0 {
        return b.to_vec();
    }
    a.iter().zip(b).map(|(p, q)| interpolate_pose(p, q, s)).collect()
}

pub fn path_length(path: &[CompositeConfig]) -> f64 {
    path.windows(2).map(|w| distance(&w[0], &w[1])).sum()
}

/// Uniform draw within `bounds` per robot; yaw on (−π, π].
pub fn sample_uniform<R: Rng + ?Sized>(bounds: &WorldBounds, robots: usize, rng: &mut R) -> CompositeConfig {
    let mut u = |lo: f64, hi: f64| {
        let t: f64 = rng.random();
        if hi > lo {
            lo + (hi - lo) * t
        } else {
            lo
        }
    };
    (0..robots)
        .map(|_| {
            let x = u(bounds.min.x, bounds.max.x);
            let y = u(bounds.min.y, bounds.max.y);
            let z = u(bounds.min.z, bounds.max.z);
            let yaw = PI - 2.0 * PI * u(0.0, 1.0);
            [x, y, z, yaw]
        })
        .collect()
}

/// Everything validity depends on: bounds, robot bodies and the frozen
/// obstacle index.
#[derive(Debug, Clone)]
pub struct PlanningScene {
    pub bounds: WorldBounds,
    pub robots: Vec<BodyGeometry>,
    pub world: CollisionWorld,
    /// Separation every robot must keep from obstacles and other robots.
    pub margin: f64,
}

impl PlanningScene {
    pub fn new(bounds: WorldBounds, robots: Vec<BodyGeometry>, snapshot: &ObstacleSnapshot) -> Self {
        let world = CollisionWorld::from_snapshot(snapshot, &robots);
        Self { bounds, robots, world, margin: 0.0 }
    }

    pub fn with_world(bounds: WorldBounds, robots: Vec<BodyGeometry>, world: CollisionWorld) -> Self {
        Self { bounds, robots, world, margin: 0.0 }
    }

    pub fn robot_count(&self) -> usize {
        self.robots.len()
    }

    pub fn in_bounds(&self, c: &[[f64; 4]]) -> bool {
        c.len() == self.robots.len()
            && c.iter().all(|p| p.iter().all(|v| v.is_finite()) && self.bounds.contains(&Vec3::new(p[0], p[1], p[2])))
    }

    pub fn valid(&self, c: &[[f64; 4]]) -> bool {
        self.in_bounds(c) && self.world.is_free(c, &self.robots, self.margin)
    }

    /// Largest distance any point of any robot body moves from `a` to `b`,
    /// bounding the swept yaw by each body's bounding radius.
    pub fn max_displacement(&self, a: &[[f64; 4]], b: &[[f64; 4]]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.robots)
            .map(|((p, q), g)| {
                let dp = Vec3::new(q[0] - p[0], q[1] - p[1], q[2] - p[2]).norm();
                let yaw_sweep = match g.primitives.as_slice() {
                    [crate::collision::Primitive::Sphere { center, .. }] if *center == Vec3::zeros() => 0.0,
                    _ => g.bounding_radius() * wrap_angle(q[3] - p[3]).abs(),
                };
                dp + yaw_sweep
            })
            .fold(0.0, f64::max)
    }

    /// Number of states `motion_valid` examines for this segment.
    pub fn motion_checks(&self, a: &[[f64; 4]], b: &[[f64; 4]], resolution: f64) -> usize {
        (self.max_displacement(a, b) / resolution).ceil() as usize + 1
    }

    /// Checks evenly spaced states from `a` to `b` inclusive, endpoints
    /// first. No body point is ever more than `resolution / 2` from a
    /// checked state, so each state must clear obstacles by that much (and
    /// other robots, which move too, by `resolution`); the whole motion is
    /// then collision-free, not just the samples.
    pub fn motion_valid(&self, a: &[[f64; 4]], b: &[[f64; 4]], resolution: f64) -> bool {
        self.motion_valid_points(a, b, self.motion_checks(a, b, resolution), resolution)
    }

    /// Like [`motion_valid`](Self::motion_valid) with each interval split
    /// `factor` more times and the same clearance. Its states are a superset
    /// of the coarse ones, so it can only reject more.
    pub fn motion_valid_refined(&self, a: &[[f64; 4]], b: &[[f64; 4]], resolution: f64, factor: usize) -> bool {
        let n = self.motion_checks(a, b, resolution);
        self.motion_valid_points(a, b, (n - 1) * factor + 1, resolution)
    }

    pub fn motion_valid_points(&self, a: &[[f64; 4]], b: &[[f64; 4]], n: usize, resolution: f64) -> bool {
        if !self.valid(a) {
            return false;
        }
        if n == 1 {
            return true;
        }
        let ok = |c: &[[f64; 4]]| {
            self.in_bounds(c)
                && self.world.is_free_split(c, &self.robots, self.margin + 0.5 * resolution, self.margin + resolution)
        };
        if !(ok(a) && ok(b)) {
            return false;
        }
        // Midpoints first: a blocked segment usually fails within a few checks.
        let mut queue = std::collections::VecDeque::from([(0usize, n - 1)]);
        while let Some((lo, hi)) = queue.pop_front() {
            if hi - lo < 2 {
                continue;
            }
            let mid = (lo + hi) / 2;
            if !ok(&interpolate(a, b, mid as f64 / (n - 1) as f64)) {
                return false;
            }
            queue.push_back((lo, mid));
            queue.push_back((mid, hi));
        }
        true
    }
}
