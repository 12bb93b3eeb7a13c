//! Distance and collision queries between robot bodies and obstacles.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env_world::{ObstacleSnapshot, Shape};
use crate::hydro::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Sphere { center: Vec3, radius: f64 },
    Capsule { a: Vec3, b: Vec3, radius: f64 },
    /// Axis-aligned.
    Box { center: Vec3, half_extents: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn inflate(&self, m: f64) -> Aabb {
        let d = Vec3::repeat(m);
        Aabb { min: self.min - d, max: self.max + d }
    }

    /// Lower bound on the distance between anything inside the two boxes.
    pub fn distance(&self, o: &Aabb) -> f64 {
        let gap = Vec3::from_fn(|i, _| (o.min[i] - self.max[i]).max(self.min[i] - o.max[i]).max(0.0));
        gap.norm()
    }
}

impl Primitive {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Primitive::Sphere { center, radius }
    }

    pub fn from_shape(shape: &Shape) -> Self {
        match *shape {
            Shape::Box { center, half_extents } => Primitive::Box { center, half_extents },
            Shape::Sphere { center, radius } => Primitive::Sphere { center, radius },
        }
    }

    pub fn aabb(&self) -> Aabb {
        match *self {
            Primitive::Sphere { center, radius } => Aabb { min: center.add_scalar(-radius), max: center.add_scalar(radius) },
            Primitive::Capsule { a, b, radius } => {
                Aabb { min: a.inf(&b).add_scalar(-radius), max: a.sup(&b).add_scalar(radius) }
            }
            Primitive::Box { center, half_extents } => Aabb { min: center - half_extents, max: center + half_extents },
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius, .. } => 2.0 * radius,
            Primitive::Capsule { a, b, radius } => (a - b).norm() + 2.0 * radius,
            Primitive::Box { half_extents, .. } => 2.0 * half_extents.norm(),
        }
    }

    pub fn translated(&self, d: &Vec3) -> Self {
        match *self {
            Primitive::Sphere { center, radius } => Primitive::Sphere { center: center + d, radius },
            Primitive::Capsule { a, b, radius } => Primitive::Capsule { a: a + d, b: b + d, radius },
            Primitive::Box { center, half_extents } => Primitive::Box { center: center + d, half_extents },
        }
    }

    /// Body-frame primitive placed at `pose` (x, y, z, yaw). Boxes stay axis
    /// aligned and grow to bound their rotated footprint.
    pub fn posed(&self, pose: &[f64; 4]) -> Self {
        let (s, c) = pose[3].sin_cos();
        let p = Vec3::new(pose[0], pose[1], pose[2]);
        let rot = |v: &Vec3| Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z) + p;
        match *self {
            Primitive::Sphere { center, radius } => Primitive::Sphere { center: rot(&center), radius },
            Primitive::Capsule { a, b, radius } => Primitive::Capsule { a: rot(&a), b: rot(&b), radius },
            Primitive::Box { center, half_extents: h } => Primitive::Box {
                center: rot(&center),
                half_extents: Vec3::new(c.abs() * h.x + s.abs() * h.y, s.abs() * h.x + c.abs() * h.y, h.z),
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match self {
            Primitive::Sphere { radius, .. } | Primitive::Capsule { radius, .. } => *radius > 0.0,
            Primitive::Box { half_extents, .. } => half_extents.iter().all(|h| *h > 0.0),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("degenerate primitive {self:?}"))
        }
    }
}

fn closest_on_segment(p: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest points between segments p1q1 and p2q2.
fn segment_segment(p1: &Vec3, q1: &Vec3, p2: &Vec3, q2: &Vec3) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a == 0.0 && e == 0.0 {
        return r.norm();
    }
    if a == 0.0 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e == 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Signed distance from a point to an axis-aligned box (negative inside).
fn point_box(p: &Vec3, center: &Vec3, h: &Vec3) -> f64 {
    let d = p - center;
    let q = Vec3::from_fn(|i, _| d[i].abs() - h[i]);
    let outside = q.sup(&Vec3::zeros()).norm();
    let inside = q.max().min(0.0);
    outside + inside
}

fn segment_hits_box(a: &Vec3, b: &Vec3, center: &Vec3, h: &Vec3) -> bool {
    let (lo, hi) = (center - h, center + h);
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        if d[i] == 0.0 {
            if a[i] < lo[i] || a[i] > hi[i] {
                return false;
            }
        } else {
            let (mut ta, mut tb) = ((lo[i] - a[i]) / d[i], (hi[i] - a[i]) / d[i]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Unsigned distance from a segment to a box. The point-to-box distance is
/// convex along the segment, so golden-section search finds its minimum.
fn segment_box(a: &Vec3, b: &Vec3, center: &Vec3, h: &Vec3) -> f64 {
    if segment_hits_box(a, b, center, h) {
        return 0.0;
    }
    let f = |t: f64| point_box(&(a + (b - a) * t), center, h);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..90 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    f(0.0).min(f(1.0)).min(f1).min(f2)
}

fn box_box(c1: &Vec3, h1: &Vec3, c2: &Vec3, h2: &Vec3) -> f64 {
    let q = Vec3::from_fn(|i, _| (c1[i] - c2[i]).abs() - (h1[i] + h2[i]));
    if q.iter().all(|v| *v < 0.0) {
        q.max()
    } else {
        q.sup(&Vec3::zeros()).norm()
    }
}

/// Signed separation: positive when disjoint, ≤ 0 when intersecting. The
/// magnitude of a negative value is a penetration depth for sphere pairs and
/// a rough estimate otherwise.
pub fn primitive_distance(p: &Primitive, q: &Primitive) -> f64 {
    use Primitive::*;
    match (p, q) {
        (Sphere { center: c1, radius: r1 }, Sphere { center: c2, radius: r2 }) => (c1 - c2).norm() - r1 - r2,
        (Sphere { center, radius: r1 }, Capsule { a, b, radius: r2 })
        | (Capsule { a, b, radius: r2 }, Sphere { center, radius: r1 }) => {
            (center - closest_on_segment(center, a, b)).norm() - r1 - r2
        }
        (Capsule { a: a1, b: b1, radius: r1 }, Capsule { a: a2, b: b2, radius: r2 }) => {
            if (p_key(a1, b1)) <= p_key(a2, b2) {
                segment_segment(a1, b1, a2, b2) - r1 - r2
            } else {
                segment_segment(a2, b2, a1, b1) - r1 - r2
            }
        }
        (Sphere { center: c, radius }, Box { center, half_extents })
        | (Box { center, half_extents }, Sphere { center: c, radius }) => point_box(c, center, half_extents) - radius,
        (Capsule { a, b, radius }, Box { center, half_extents })
        | (Box { center, half_extents }, Capsule { a, b, radius }) => segment_box(a, b, center, half_extents) - radius,
        (Box { center: c1, half_extents: h1 }, Box { center: c2, half_extents: h2 }) => box_box(c1, h1, c2, h2),
    }
}

/// Orders capsule pairs so the segment routine always sees them the same way
/// round, which makes the distance exactly symmetric.
fn p_key(a: &Vec3, b: &Vec3) -> [u64; 6] {
    let k = |x: f64| x.to_bits();
    [k(a.x), k(a.y), k(a.z), k(b.x), k(b.y), k(b.z)]
}

/// Robot collision model in its body frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyGeometry {
    pub robot_index: usize,
    pub primitives: Vec<Primitive>,
}

impl BodyGeometry {
    pub fn sphere(robot_index: usize, radius: f64) -> Self {
        Self { robot_index, primitives: vec![Primitive::sphere(Vec3::zeros(), radius)] }
    }

    pub fn posed(&self, pose: &[f64; 4]) -> Vec<Primitive> {
        self.primitives.iter().map(|p| p.posed(pose)).collect()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| match *p {
                Primitive::Sphere { center, radius } => center.norm() + radius,
                Primitive::Capsule { a, b, radius } => a.norm().max(b.norm()) + radius,
                Primitive::Box { center, half_extents } => center.norm() + half_extents.norm(),
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum BodyId {
    Robot(usize),
    Obstacle(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    RobotRobot,
    RobotObstacle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CollisionPair {
    pub a: BodyId,
    pub b: BodyId,
    pub kind: PairKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub colliding: bool,
    /// Sorted, one entry per colliding body pair.
    pub pairs: Vec<CollisionPair>,
    /// Smallest separation over all body pairs; `f64::INFINITY` when there is
    /// nothing to measure against. Only meaningful when not colliding.
    pub min_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CollisionError {
    #[error("state is in collision ({0} pairs)")]
    StateInCollision(usize),
    #[error("configuration has {got} poses for {expected} robots")]
    PoseCount { expected: usize, got: usize },
}

type Cell = (i64, i64, i64);

fn cell_range(b: &Aabb, cell: f64) -> (Cell, Cell) {
    let f = |v: f64| (v / cell).floor() as i64;
    ((f(b.min.x), f(b.min.y), f(b.min.z)), (f(b.max.x), f(b.max.y), f(b.max.z)))
}

fn for_cells(range: (Cell, Cell), mut f: impl FnMut(Cell)) {
    let ((x0, y0, z0), (x1, y1, z1)) = range;
    for x in x0..=x1 {
        for y in y0..=y1 {
            for z in z0..=z1 {
                f((x, y, z));
            }
        }
    }
}

/// Obstacles indexed once in a uniform hash grid; robots are posed per query.
#[derive(Debug, Clone)]
pub struct CollisionWorld {
    cell: f64,
    obstacles: Vec<(u32, Primitive, Aabb)>,
    grid: HashMap<Cell, Vec<u32>>,
}

/// Smallest cell edge the broadphase will use.
pub const MIN_CELL: f64 = 0.25;

impl CollisionWorld {
    /// `robot_diameter` is the largest robot primitive diameter; the grid cell
    /// is the largest of it and every non-box obstacle diameter. Boxes (tall
    /// pillars) are inserted into every cell they overlap.
    pub fn from_primitives(obstacles: impl IntoIterator<Item = (u32, Primitive)>, robot_diameter: f64) -> Self {
        let obstacles: Vec<(u32, Primitive, Aabb)> = obstacles.into_iter().map(|(id, p)| (id, p, p.aabb())).collect();
        let cell = obstacles
            .iter()
            .filter(|(_, p, _)| !matches!(p, Primitive::Box { .. }))
            .map(|(_, p, _)| p.diameter())
            .fold(robot_diameter, f64::max)
            .max(MIN_CELL);
        let mut grid: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (slot, (_, _, bb)) in obstacles.iter().enumerate() {
            for_cells(cell_range(bb, cell), |c| grid.entry(c).or_default().push(slot as u32));
        }
        Self { cell, obstacles, grid }
    }

    pub fn from_snapshot(snapshot: &ObstacleSnapshot, robots: &[BodyGeometry]) -> Self {
        let diam = robots.iter().flat_map(|r| r.primitives.iter()).map(|p| p.diameter()).fold(0.0, f64::max);
        Self::from_primitives(snapshot.obstacles().iter().map(|o| (o.id, Primitive::from_shape(&o.shape))), diam)
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.len()
    }

    /// Obstacle slots whose cells overlap `bb`.
    fn candidates(&self, bb: &Aabb) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for_cells(cell_range(bb, self.cell), |c| {
            if let Some(v) = self.grid.get(&c) {
                out.extend(v.iter().copied());
            }
        });
        out
    }

    fn posed_all(robots: &[BodyGeometry], config: &[[f64; 4]]) -> Vec<Vec<Primitive>> {
        robots.iter().zip(config).map(|(g, pose)| g.posed(pose)).collect()
    }

    /// Robot pairs sharing at least one grid cell after inflation by `margin`.
    fn robot_candidates(&self, posed: &[Vec<Primitive>], margin: f64) -> BTreeSet<(usize, usize)> {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, prims) in posed.iter().enumerate() {
            let mut mine = BTreeSet::new();
            for p in prims {
                for_cells(cell_range(&p.aabb().inflate(margin), self.cell), |c| {
                    mine.insert(c);
                });
            }
            for c in mine {
                cells.entry(c).or_default().push(i);
            }
        }
        let mut pairs = BTreeSet::new();
        for list in cells.values() {
            for (k, &i) in list.iter().enumerate() {
                for &j in &list[k + 1..] {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
        pairs
    }

    fn body_distance(a: &[Primitive], b: &[Primitive]) -> f64 {
        a.iter().flat_map(|p| b.iter().map(move |q| primitive_distance(p, q))).fold(f64::INFINITY, f64::min)
    }

    fn check_pose_count(robots: &[BodyGeometry], config: &[[f64; 4]]) -> Result<(), CollisionError> {
        if robots.len() != config.len() {
            return Err(CollisionError::PoseCount { expected: robots.len(), got: config.len() });
        }
        Ok(())
    }

    /// Colliding pairs come from the broadphase; `min_distance` is exact
    /// over every body pair, pruned by AABB lower bounds.
    pub fn check(&self, config: &[[f64; 4]], robots: &[BodyGeometry]) -> Result<CollisionReport, CollisionError> {
        Self::check_pose_count(robots, config)?;
        let posed = Self::posed_all(robots, config);
        let mut pairs = BTreeSet::new();
        for (i, j) in self.robot_candidates(&posed, 0.0) {
            if Self::body_distance(&posed[i], &posed[j]) <= 0.0 {
                pairs.insert(CollisionPair {
                    a: BodyId::Robot(robots[i].robot_index),
                    b: BodyId::Robot(robots[j].robot_index),
                    kind: PairKind::RobotRobot,
                });
            }
        }
        for (i, prims) in posed.iter().enumerate() {
            for p in prims {
                for slot in self.candidates(&p.aabb()) {
                    let (id, q, _) = &self.obstacles[slot as usize];
                    if primitive_distance(p, q) <= 0.0 {
                        pairs.insert(CollisionPair {
                            a: BodyId::Robot(robots[i].robot_index),
                            b: BodyId::Obstacle(*id),
                            kind: PairKind::RobotObstacle,
                        });
                    }
                }
            }
        }
        let pairs: Vec<CollisionPair> = pairs.into_iter().collect();
        Ok(CollisionReport { colliding: !pairs.is_empty(), pairs, min_distance: self.min_distance_posed(&posed) })
    }

    fn min_distance_posed(&self, posed: &[Vec<Primitive>]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..posed.len() {
            for j in i + 1..posed.len() {
                best = best.min(Self::body_distance(&posed[i], &posed[j]));
            }
        }
        for p in posed.iter().flatten() {
            let bb = p.aabb();
            for (_, q, qbb) in &self.obstacles {
                if bb.distance(qbb) <= best.max(0.0) {
                    best = best.min(primitive_distance(p, q));
                }
            }
        }
        best
    }

    pub fn min_clearance(&self, config: &[[f64; 4]], robots: &[BodyGeometry]) -> Result<f64, CollisionError> {
        let r = self.check(config, robots)?;
        if r.colliding {
            return Err(CollisionError::StateInCollision(r.pairs.len()));
        }
        Ok(r.min_distance)
    }

    /// True when every robot–robot and robot–obstacle separation exceeds
    /// `margin`. Only grid neighbours are examined.
    pub fn is_free(&self, config: &[[f64; 4]], robots: &[BodyGeometry], margin: f64) -> bool {
        self.is_free_split(config, robots, margin, margin)
    }

    /// Like [`is_free`](Self::is_free) with separate margins to obstacles
    /// and between robots.
    pub fn is_free_split(&self, config: &[[f64; 4]], robots: &[BodyGeometry], obstacle_margin: f64, robot_margin: f64) -> bool {
        let posed = Self::posed_all(robots, config);
        self.is_free_posed(&posed, obstacle_margin, robot_margin)
    }

    // Allocation-free: this is the planner's inner loop.
    fn is_free_posed(&self, posed: &[Vec<Primitive>], margin: f64, robot_margin: f64) -> bool {
        for p in posed.iter().flatten() {
            let mut hit = false;
            for_cells(cell_range(&p.aabb().inflate(margin), self.cell), |c| {
                if hit {
                    return;
                }
                if let Some(slots) = self.grid.get(&c) {
                    hit = slots.iter().any(|&k| primitive_distance(p, &self.obstacles[k as usize].1) <= margin);
                }
            });
            if hit {
                return false;
            }
        }
        for (i, a) in posed.iter().enumerate() {
            for b in &posed[i + 1..] {
                for p in a {
                    for q in b {
                        if p.aabb().distance(&q.aabb()) <= robot_margin && primitive_distance(p, q) <= robot_margin {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Like [`is_free`](Self::is_free) but only against obstacles (robot
    /// pairs ignored).
    pub fn robot_is_free(&self, geometry: &BodyGeometry, pose: &[f64; 4], margin: f64) -> bool {
        let posed = vec![geometry.posed(pose)];
        self.is_free_posed(&posed, margin, margin)
    }
}

pub fn check_state(
    config: &[[f64; 4]],
    robots: &[BodyGeometry],
    snapshot: &ObstacleSnapshot,
) -> Result<CollisionReport, CollisionError> {
    CollisionWorld::from_snapshot(snapshot, robots).check(config, robots)
}

pub fn min_clearance(
    config: &[[f64; 4]],
    robots: &[BodyGeometry],
    snapshot: &ObstacleSnapshot,
) -> Result<f64, CollisionError> {
    CollisionWorld::from_snapshot(snapshot, robots).min_clearance(config, robots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env_world::{Obstacle, ObstacleKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn sph(x: f64, y: f64, z: f64, r: f64) -> Primitive {
        Primitive::sphere(Vec3::new(x, y, z), r)
    }

    #[test]
    fn sphere_examples() {
        assert_relative_eq!(primitive_distance(&sph(0., 0., 0., 1.), &sph(3., 0., 0., 1.)), 1.0);
        assert!(primitive_distance(&sph(1., 2., 3., 1.), &sph(1., 2., 3., 1.)) < 0.0);
        assert_relative_eq!(primitive_distance(&sph(0., 0., 0., 1.), &sph(1.5, 0., 0., 1.)), -0.5);
    }

    #[test]
    fn capsule_cases() {
        let cap = Primitive::Capsule { a: Vec3::new(-1., 0., 0.), b: Vec3::new(1., 0., 0.), radius: 0.5 };
        assert_relative_eq!(primitive_distance(&cap, &sph(0., 2., 0., 0.5)), 1.0, epsilon = 1e-12);
        assert_relative_eq!(primitive_distance(&cap, &sph(3., 0., 0., 0.5)), 1.0, epsilon = 1e-12);
        let cap2 = Primitive::Capsule { a: Vec3::new(0., -1., 3.), b: Vec3::new(0., 1., 3.), radius: 0.25 };
        assert_relative_eq!(primitive_distance(&cap, &cap2), 2.25, epsilon = 1e-12);
        let bx = Primitive::Box { center: Vec3::new(0., 0., -3.), half_extents: Vec3::new(0.5, 0.5, 1.0) };
        assert_relative_eq!(primitive_distance(&cap, &bx), 1.5, epsilon = 1e-9);
        let through = Primitive::Box { center: Vec3::zeros(), half_extents: Vec3::repeat(0.1) };
        assert!(primitive_distance(&cap, &through) <= 0.0);
    }

    #[test]
    fn box_box_cases() {
        let a = Primitive::Box { center: Vec3::zeros(), half_extents: Vec3::repeat(1.0) };
        let b = Primitive::Box { center: Vec3::new(3.0, 4.0, 0.0), half_extents: Vec3::repeat(1.0) };
        assert_relative_eq!(primitive_distance(&a, &b), (1.0f64 + 4.0).sqrt(), epsilon = 1e-12);
        let c = Primitive::Box { center: Vec3::new(1.5, 0.0, 0.0), half_extents: Vec3::repeat(1.0) };
        assert!(primitive_distance(&a, &c) <= 0.0);
    }

    fn clamp_oracle(c: &Vec3, r: f64, bc: &Vec3, h: &Vec3) -> f64 {
        let lo = bc - h;
        let hi = bc + h;
        let q = Vec3::new(c.x.clamp(lo.x, hi.x), c.y.clamp(lo.y, hi.y), c.z.clamp(lo.z, hi.z));
        (c - q).norm() - r
    }

    fn v3() -> impl Strategy<Value = Vec3> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_prim() -> impl Strategy<Value = Primitive> {
        prop_oneof![
            (v3(), 0.1..2.0f64).prop_map(|(c, r)| Primitive::Sphere { center: c, radius: r }),
            (v3(), v3(), 0.1..2.0f64).prop_map(|(a, b, r)| Primitive::Capsule { a, b, radius: r }),
            (v3(), (0.1..3.0f64, 0.1..3.0f64, 0.1..3.0f64))
                .prop_map(|(c, (x, y, z))| Primitive::Box { center: c, half_extents: Vec3::new(x, y, z) }),
        ]
    }

    proptest! {
        #[test]
        fn sphere_box_matches_clamp_oracle(c in v3(), r in 0.1..2.0f64, bc in v3(), h in (0.1..3.0f64, 0.1..3.0f64, 0.1..3.0f64)) {
            let h = Vec3::new(h.0, h.1, h.2);
            let oracle = clamp_oracle(&c, r, &bc, &h);
            let d = primitive_distance(&sph(c.x, c.y, c.z, r), &Primitive::Box { center: bc, half_extents: h });
            if oracle > 0.0 {
                prop_assert!((d - oracle).abs() < 1e-12);
            } else {
                prop_assert!(d <= 0.0);
            }
        }

        #[test]
        fn distance_is_symmetric(p in arb_prim(), q in arb_prim()) {
            prop_assert!((primitive_distance(&p, &q) - primitive_distance(&q, &p)).abs() < 1e-12);
        }

        #[test]
        fn distance_is_translation_invariant(p in arb_prim(), q in arb_prim(), d in v3()) {
            let a = primitive_distance(&p, &q);
            let b = primitive_distance(&p.translated(&d), &q.translated(&d));
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }

        #[test]
        fn capsule_box_matches_dense_sampling(a in v3(), b in v3(), r in 0.1..1.0f64, bc in v3(), h in (0.1..3.0f64, 0.1..3.0f64, 0.1..3.0f64)) {
            let h = Vec3::new(h.0, h.1, h.2);
            let d = primitive_distance(&Primitive::Capsule { a, b, radius: r }, &Primitive::Box { center: bc, half_extents: h });
            let sampled = (0..=4000).map(|k| {
                let p = a + (b - a) * (k as f64 / 4000.0);
                clamp_oracle(&p, r, &bc, &h)
            }).fold(f64::INFINITY, f64::min);
            if sampled > 1e-3 {
                prop_assert!(d <= sampled + 1e-12 && d >= sampled - 0.01, "{} vs {}", d, sampled);
            }
        }
    }

    fn random_scene(seed: u64) -> (Vec<BodyGeometry>, Vec<[f64; 4]>, ObstacleSnapshot) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..5);
        let robots: Vec<BodyGeometry> = (0..n)
            .map(|i| {
                if rng.random_bool(0.3) {
                    BodyGeometry {
                        robot_index: i,
                        primitives: vec![Primitive::Capsule {
                            a: Vec3::new(-0.3, 0.0, 0.0),
                            b: Vec3::new(0.3, 0.0, 0.0),
                            radius: rng.random_range(0.2..0.5),
                        }],
                    }
                } else {
                    BodyGeometry::sphere(i, rng.random_range(0.2..0.6))
                }
            })
            .collect();
        let config: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                [rng.random_range(0.0..8.0), rng.random_range(0.0..8.0), rng.random_range(-4.0..0.0), rng.random_range(-3.0..3.0)]
            })
            .collect();
        let obstacles = (0..rng.random_range(0..30))
            .map(|id| {
                let c = Vec3::new(rng.random_range(0.0..8.0), rng.random_range(0.0..8.0), rng.random_range(-4.0..0.0));
                let shape = if rng.random_bool(0.5) {
                    Shape::Sphere { center: c, radius: rng.random_range(0.1..0.8) }
                } else {
                    Shape::Box { center: c, half_extents: Vec3::new(rng.random_range(0.1..1.0), rng.random_range(0.1..1.0), rng.random_range(0.1..3.0)) }
                };
                Obstacle { id, shape, kind: ObstacleKind::Static, velocity: Vec3::zeros(), buoyancy_bias: 0.0 }
            })
            .collect();
        (robots, config, ObstacleSnapshot::new(0.0, obstacles))
    }

    fn brute_force(robots: &[BodyGeometry], config: &[[f64; 4]], snap: &ObstacleSnapshot) -> (Vec<CollisionPair>, f64) {
        let posed: Vec<Vec<Primitive>> = robots.iter().zip(config).map(|(g, p)| g.posed(p)).collect();
        let mut pairs = BTreeSet::new();
        let mut best = f64::INFINITY;
        for i in 0..posed.len() {
            for j in i + 1..posed.len() {
                let d = CollisionWorld::body_distance(&posed[i], &posed[j]);
                best = best.min(d);
                if d <= 0.0 {
                    pairs.insert(CollisionPair { a: BodyId::Robot(i), b: BodyId::Robot(j), kind: PairKind::RobotRobot });
                }
            }
            for o in snap.obstacles() {
                let d = CollisionWorld::body_distance(&posed[i], &[Primitive::from_shape(&o.shape)]);
                best = best.min(d);
                if d <= 0.0 {
                    pairs.insert(CollisionPair { a: BodyId::Robot(i), b: BodyId::Obstacle(o.id), kind: PairKind::RobotObstacle });
                }
            }
        }
        (pairs.into_iter().collect(), best)
    }

    #[test]
    fn broadphase_matches_brute_force_on_1000_scenes() {
        for seed in 0..1000 {
            let (robots, config, snap) = random_scene(seed);
            let report = check_state(&config, &robots, &snap).unwrap();
            let (pairs, best) = brute_force(&robots, &config, &snap);
            assert_eq!(report.pairs, pairs, "seed {seed}");
            assert_eq!(report.colliding, !pairs.is_empty());
            assert_eq!(report.min_distance, best, "seed {seed}");
            if !report.colliding {
                assert_eq!(min_clearance(&config, &robots, &snap).unwrap(), best);
            }
            let world = CollisionWorld::from_snapshot(&snap, &robots);
            assert_eq!(world.is_free(&config, &robots, 0.0), best > 0.0, "seed {seed}");
        }
    }

    #[test]
    fn empty_world_has_infinite_clearance() {
        let robots = [BodyGeometry::sphere(0, 0.5)];
        let r = check_state(&[[0.0; 4]], &robots, &ObstacleSnapshot::empty(0.0)).unwrap();
        assert!(!r.colliding);
        assert_eq!(r.min_distance, f64::INFINITY);
    }

    #[test]
    fn identical_robots_collide() {
        let robots = [BodyGeometry::sphere(0, 0.5), BodyGeometry::sphere(1, 0.5)];
        let r = check_state(&[[1.0, 1.0, -1.0, 0.0]; 2], &robots, &ObstacleSnapshot::empty(0.0)).unwrap();
        assert_eq!(r.pairs, vec![CollisionPair { a: BodyId::Robot(0), b: BodyId::Robot(1), kind: PairKind::RobotRobot }]);
        assert!(matches!(
            min_clearance(&[[1.0, 1.0, -1.0, 0.0]; 2], &robots, &ObstacleSnapshot::empty(0.0)),
            Err(CollisionError::StateInCollision(1))
        ));
    }

    #[test]
    fn clearance_to_sphere_obstacle() {
        let robots = [BodyGeometry::sphere(0, 0.5)];
        let obs = Obstacle {
            id: 0,
            shape: Shape::Sphere { center: Vec3::new(2.0, 0.0, 0.0), radius: 0.5 },
            kind: ObstacleKind::Dynamic,
            velocity: Vec3::zeros(),
            buoyancy_bias: 0.0,
        };
        let snap = ObstacleSnapshot::new(0.0, vec![obs]);
        assert_relative_eq!(min_clearance(&[[0.0; 4]], &robots, &snap).unwrap(), 1.0);
    }

    #[test]
    fn symmetric_pair_clearance() {
        let robots = [BodyGeometry::sphere(0, 0.4), BodyGeometry::sphere(1, 0.4)];
        let a = [[-1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]];
        let b = [[1.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0]];
        let snap = ObstacleSnapshot::empty(0.0);
        assert_eq!(min_clearance(&a, &robots, &snap).unwrap(), min_clearance(&b, &robots, &snap).unwrap());
    }

    #[test]
    fn check_is_repeatable() {
        let (robots, config, snap) = random_scene(77);
        let a = check_state(&config, &robots, &snap).unwrap();
        let b = check_state(&config, &robots, &snap).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.min_distance.to_bits(), b.min_distance.to_bits());
    }
}
