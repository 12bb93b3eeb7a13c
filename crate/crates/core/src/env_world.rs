//! World model: bounds, ocean current, a cellular-automaton pillar field and
//! current-driven dynamic obstacles.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, streams};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error("could not place dynamic obstacle {index} collision-free within {attempts} attempts")]
    PlacementFailure { index: usize, attempts: usize },
}

/// Axis-aligned world box. The water surface is z = 0 and depth is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl WorldBounds {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        for a in 0..3 {
            if !(self.min[a] < self.max[a]) {
                return Err(EnvError::InvalidSpec(format!(
                    "bounds.min[{a}] must be below bounds.max[{a}]"
                )));
            }
        }
        if !(self.min.z <= 0.0 && self.max.z >= 0.0) {
            return Err(EnvError::InvalidSpec("bounds z-range must include the surface z=0".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }
}

/// Spatially uniform current with a sinusoidal gust term per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentField {
    pub base: Vec3,
    #[serde(default = "Vector3::zeros")]
    pub gust_amplitude: Vec3,
    #[serde(default = "default_gust_period")]
    pub gust_period: f64,
    #[serde(default)]
    pub gust_phase: f64,
}

fn default_gust_period() -> f64 {
    10.0
}

impl Default for CurrentField {
    fn default() -> Self {
        Self::still()
    }
}

impl CurrentField {
    pub fn still() -> Self {
        Self::constant(Vec3::zeros())
    }

    pub fn constant(base: Vec3) -> Self {
        Self { base, gust_amplitude: Vec3::zeros(), gust_period: default_gust_period(), gust_phase: 0.0 }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.gust_period > 0.0 && self.gust_period.is_finite()) {
            return Err(EnvError::InvalidSpec("gust_period must be > 0".into()));
        }
        if !(self.base.iter().chain(self.gust_amplitude.iter()).all(|v| v.is_finite())
            && self.gust_phase.is_finite())
        {
            return Err(EnvError::InvalidSpec("current field must be finite".into()));
        }
        Ok(())
    }

    /// Current velocity at `position` and time `t`. The field is uniform in space.
    pub fn sample(&self, _position: &Vec3, t: f64) -> Vec3 {
        let s = (2.0 * PI * t / self.gust_period + self.gust_phase).sin();
        self.base + self.gust_amplitude * s
    }
}

/// Free-function form of [`CurrentField::sample`].
pub fn sample_current(field: &CurrentField, position: &Vec3, t: f64) -> Vec3 {
    field.sample(position, t)
}

/// Vertical cylinder kept free of pillars and dynamic obstacles (start/goal areas).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clearing {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub seed: u64,
    pub grid_dims: (usize, usize),
    pub cell_size: f64,
    #[serde(default = "default_fill_prob")]
    pub fill_prob: f64,
    #[serde(default = "default_ca_iterations")]
    pub ca_iterations: usize,
    pub pillar_height_range: (f64, f64),
    #[serde(default)]
    pub dynamic_count: usize,
    #[serde(default = "default_radius_range")]
    pub dynamic_radius_range: (f64, f64),
    #[serde(default)]
    pub dynamic_buoyancy_bias_range: (f64, f64),
    pub bounds: WorldBounds,
    #[serde(default)]
    pub clearings: Vec<Clearing>,
}

fn default_fill_prob() -> f64 {
    0.45
}
fn default_ca_iterations() -> usize {
    4
}
fn default_radius_range() -> (f64, f64) {
    (0.3, 0.6)
}

impl EnvironmentSpec {
    /// A spec on a `nx × ny` grid of unit cells whose footprint exactly fills the bounds.
    pub fn with_grid(seed: u64, nx: usize, ny: usize, cell_size: f64, depth: f64) -> Self {
        let bounds = WorldBounds::new(
            Vec3::new(0.0, 0.0, -depth),
            Vec3::new(nx as f64 * cell_size, ny as f64 * cell_size, 0.0),
        );
        Self {
            seed,
            grid_dims: (nx, ny),
            cell_size,
            fill_prob: default_fill_prob(),
            ca_iterations: default_ca_iterations(),
            pillar_height_range: (depth, depth),
            dynamic_count: 0,
            dynamic_radius_range: default_radius_range(),
            dynamic_buoyancy_bias_range: (0.0, 0.0),
            bounds,
            clearings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.bounds.validate()?;
        let bad = |m: &str| Err(EnvError::InvalidSpec(m.to_string()));
        if !(0.0..=1.0).contains(&self.fill_prob) {
            return bad("fill_prob must lie in [0, 1]");
        }
        if !(self.cell_size > 0.0) {
            return bad("cell_size must be > 0");
        }
        let (h_min, h_max) = self.pillar_height_range;
        if !(h_min > 0.0 && h_min <= h_max) {
            return bad("pillar_height_range must satisfy 0 < h_min <= h_max");
        }
        let (r_min, r_max) = self.dynamic_radius_range;
        if self.dynamic_count > 0 && !(r_min > 0.0 && r_min <= r_max) {
            return bad("dynamic_radius_range must satisfy 0 < r_min <= r_max");
        }
        let (b_min, b_max) = self.dynamic_buoyancy_bias_range;
        if !(b_min <= b_max) {
            return bad("dynamic_buoyancy_bias_range must satisfy b_min <= b_max");
        }
        let ext = self.bounds.extent();
        let (nx, ny) = self.grid_dims;
        if nx as f64 * self.cell_size > ext.x + 1e-9 || ny as f64 * self.cell_size > ext.y + 1e-9 {
            return bad("grid footprint exceeds bounds");
        }
        if self.dynamic_count > 0 && (0..3).any(|a| 2.0 * r_max >= ext[a]) {
            return bad("dynamic obstacle diameter exceeds bounds");
        }
        if self.clearings.iter().any(|c| !(c.radius >= 0.0)) {
            return bad("clearing radius must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Box { center: Vec3, half_extents: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

impl Shape {
    pub fn center(&self) -> Vec3 {
        match *self {
            Shape::Box { center, .. } | Shape::Sphere { center, .. } => center,
        }
    }

    fn center_mut(&mut self) -> &mut Vec3 {
        match self {
            Shape::Box { center, .. } | Shape::Sphere { center, .. } => center,
        }
    }

    /// Half extents of the shape's axis-aligned bounding box.
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            Shape::Box { half_extents, .. } => half_extents,
            Shape::Sphere { radius, .. } => Vec3::repeat(radius),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub id: u32,
    pub shape: Shape,
    pub kind: ObstacleKind,
    pub velocity: Vec3,
    pub buoyancy_bias: f64,
}

/// Occupancy grid of the pillar field, row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellGrid {
    nx: usize,
    ny: usize,
    cells: Vec<bool>,
}

impl CellGrid {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny, cells: vec![false; nx * ny] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.cells[j * self.nx + i] = v;
    }

    pub fn solid_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn density(&self) -> f64 {
        if self.cells.is_empty() {
            0.0
        } else {
            self.solid_count() as f64 / self.cells.len() as f64
        }
    }

    /// Moore-neighbourhood solid count. Out-of-grid neighbours take the value
    /// of the nearest in-grid cell (edge replication).
    pub fn solid_neighbors(&self, i: usize, j: usize) -> u8 {
        let mut n = 0;
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 {
                    continue;
                }
                let x = (i as i64 + di).clamp(0, self.nx as i64 - 1) as usize;
                let y = (j as i64 + dj).clamp(0, self.ny as i64 - 1) as usize;
                n += self.get(x, y) as u8;
            }
        }
        n
    }

    /// One smoothing pass: solid iff count >= 5, or already solid and count >= 4.
    pub fn smooth(&self) -> CellGrid {
        let mut next = CellGrid::new(self.nx, self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let n = self.solid_neighbors(i, j);
                next.set(i, j, n >= 5 || (self.get(i, j) && n >= 4));
            }
        }
        next
    }

    /// 4-connected component labels of solid cells, numbered in row-major
    /// order of each component's first cell.
    pub fn components(&self) -> (Vec<Option<usize>>, usize) {
        let mut labels = vec![None; self.cells.len()];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.cells.len() {
            if !self.cells[start] || labels[start].is_some() {
                continue;
            }
            labels[start] = Some(count);
            queue.push_back(start);
            while let Some(idx) = queue.pop_front() {
                let (i, j) = (idx % self.nx, idx / self.nx);
                let mut visit = |x: usize, y: usize| {
                    let k = y * self.nx + x;
                    if self.cells[k] && labels[k].is_none() {
                        labels[k] = Some(count);
                        queue.push_back(k);
                    }
                };
                if i > 0 {
                    visit(i - 1, j);
                }
                if i + 1 < self.nx {
                    visit(i + 1, j);
                }
                if j > 0 {
                    visit(i, j - 1);
                }
                if j + 1 < self.ny {
                    visit(i, j + 1);
                }
            }
            count += 1;
        }
        (labels, count)
    }

    /// One character per cell (`#` solid, `.` free), one line per row, row 0 first.
    pub fn dump(&self) -> String {
        let mut s = String::with_capacity((self.nx + 1) * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                s.push(if self.get(i, j) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: EnvironmentSpec,
    grid: CellGrid,
    obstacles: Vec<Obstacle>,
    /// Dynamic obstacles that ignore the current and move at a fixed velocity.
    scripted: BTreeMap<u32, Vec3>,
}

/// Immutable view of all obstacles at one instant. Cheap to clone and safe to
/// share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSnapshot {
    timestamp: f64,
    obstacles: Arc<[Obstacle]>,
}

impl ObstacleSnapshot {
    pub fn new(timestamp: f64, obstacles: Vec<Obstacle>) -> Self {
        Self { timestamp, obstacles: obstacles.into() }
    }

    pub fn empty(timestamp: f64) -> Self {
        Self::new(timestamp, Vec::new())
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    /// Constant-velocity extrapolation of dynamic obstacles by `dt` seconds.
    pub fn predict(&self, dt: f64) -> ObstacleSnapshot {
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| {
                let mut o = *o;
                if o.kind == ObstacleKind::Dynamic {
                    *o.shape.center_mut() += o.velocity * dt;
                }
                o
            })
            .collect();
        ObstacleSnapshot::new(self.timestamp + dt, obstacles)
    }
}

fn sphere_box_overlap(c: &Vec3, r: f64, bc: &Vec3, h: &Vec3) -> bool {
    let mut d2 = 0.0;
    for a in 0..3 {
        let e = (c[a] - bc[a]).abs() - h[a];
        if e > 0.0 {
            d2 += e * e;
        }
    }
    d2 < r * r
}

fn horizontal_distance(a: &Vec3, b: &Vec3) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

pub const PLACEMENT_ATTEMPTS: usize = 1000;

pub fn generate_environment(spec: &EnvironmentSpec) -> Result<Environment, EnvError> {
    Environment::generate(spec)
}

impl Environment {
    pub fn generate(spec: &EnvironmentSpec) -> Result<Self, EnvError> {
        spec.validate()?;
        let (nx, ny) = spec.grid_dims;

        let mut fill_rng = rng::stream(spec.seed, streams::CA_FILL);
        let mut grid = CellGrid::new(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let u: f64 = fill_rng.random();
                grid.set(i, j, u < spec.fill_prob);
            }
        }
        for _ in 0..spec.ca_iterations {
            grid = grid.smooth();
        }

        let cs = spec.cell_size;
        let origin = spec.bounds.min;
        let cell_center = |i: usize, j: usize| {
            Vec3::new(origin.x + (i as f64 + 0.5) * cs, origin.y + (j as f64 + 0.5) * cs, 0.0)
        };
        for c in &spec.clearings {
            for j in 0..ny {
                for i in 0..nx {
                    if grid.get(i, j) && cell_hits_disk(&cell_center(i, j), cs, &c.center, c.radius) {
                        grid.set(i, j, false);
                    }
                }
            }
        }

        let (labels, n_components) = grid.components();
        let mut height_rng = rng::stream(spec.seed, streams::PILLAR_HEIGHTS);
        let (h_min, h_max) = spec.pillar_height_range;
        let heights: Vec<f64> = (0..n_components).map(|_| height_rng.random_range(h_min..=h_max)).collect();

        let mut obstacles = Vec::new();
        let floor = spec.bounds.min.z;
        for j in 0..ny {
            for i in 0..nx {
                if let Some(label) = labels[j * nx + i] {
                    let h = heights[label];
                    let mut center = cell_center(i, j);
                    center.z = floor + 0.5 * h;
                    obstacles.push(Obstacle {
                        id: obstacles.len() as u32,
                        shape: Shape::Box { center, half_extents: Vec3::new(0.5 * cs, 0.5 * cs, 0.5 * h) },
                        kind: ObstacleKind::Static,
                        velocity: Vec3::zeros(),
                        buoyancy_bias: 0.0,
                    });
                }
            }
        }
        let n_static = obstacles.len();

        let mut dyn_rng = rng::stream(spec.seed, streams::DYNAMIC_PLACEMENT);
        let (r_min, r_max) = spec.dynamic_radius_range;
        let (b_min, b_max) = spec.dynamic_buoyancy_bias_range;
        for index in 0..spec.dynamic_count {
            let radius = dyn_rng.random_range(r_min..=r_max);
            let bias = dyn_rng.random_range(b_min..=b_max);
            let lo = spec.bounds.min.add_scalar(radius);
            let hi = spec.bounds.max.add_scalar(-radius);
            let mut placed = None;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let c = Vec3::new(
                    dyn_rng.random_range(lo.x..=hi.x),
                    dyn_rng.random_range(lo.y..=hi.y),
                    dyn_rng.random_range(lo.z..=hi.z),
                );
                let hits_static = obstacles[..n_static].iter().any(|o| match o.shape {
                    Shape::Box { center, half_extents } => sphere_box_overlap(&c, radius, &center, &half_extents),
                    Shape::Sphere { .. } => false,
                });
                let hits_clearing =
                    spec.clearings.iter().any(|cl| horizontal_distance(&c, &cl.center) < cl.radius + radius);
                if !hits_static && !hits_clearing {
                    placed = Some(c);
                    break;
                }
            }
            let center = placed.ok_or(EnvError::PlacementFailure { index, attempts: PLACEMENT_ATTEMPTS })?;
            obstacles.push(Obstacle {
                id: obstacles.len() as u32,
                shape: Shape::Sphere { center, radius },
                kind: ObstacleKind::Dynamic,
                velocity: Vec3::zeros(),
                buoyancy_bias: bias,
            });
        }

        Ok(Self { spec: spec.clone(), grid, obstacles, scripted: BTreeMap::new() })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &WorldBounds {
        &self.spec.bounds
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    /// Adds a dynamic sphere after generation (scripted scenarios).
    pub fn push_dynamic(&mut self, center: Vec3, radius: f64, buoyancy_bias: f64) -> u32 {
        let id = self.obstacles.len() as u32;
        self.obstacles.push(Obstacle {
            id,
            shape: Shape::Sphere { center, radius },
            kind: ObstacleKind::Dynamic,
            velocity: Vec3::zeros(),
            buoyancy_bias,
        });
        id
    }

    /// Adds a dynamic sphere that moves at a constant velocity regardless of
    /// the current. It still bounces off the world bounds.
    pub fn push_scripted(&mut self, center: Vec3, radius: f64, velocity: Vec3) -> u32 {
        let id = self.push_dynamic(center, radius, 0.0);
        self.obstacles[id as usize].velocity = velocity;
        self.scripted.insert(id, velocity);
        id
    }

    pub fn obstacle_density(&self) -> f64 {
        self.grid.density()
    }

    /// Advances dynamic obstacles by one explicit-Euler step of the current
    /// plus buoyancy drift. Spheres that leave the bounds are mirrored back
    /// inside; a vertical bounce also reverses the buoyancy bias.
    pub fn step_obstacles(&mut self, dt: f64, field: &CurrentField, t: f64) {
        let bounds = self.spec.bounds;
        for o in self.obstacles.iter_mut().filter(|o| o.kind == ObstacleKind::Dynamic) {
            let Shape::Sphere { center, radius } = &mut o.shape else {
                continue;
            };
            let scripted = self.scripted.get_mut(&o.id);
            let mut v = match &scripted {
                Some(v) => **v,
                None => field.sample(center, t) + Vec3::new(0.0, 0.0, o.buoyancy_bias),
            };
            let mut p = *center + v * dt;
            for a in 0..3 {
                let lo = bounds.min[a] + *radius;
                let hi = bounds.max[a] - *radius;
                let reflected = if p[a] > hi {
                    p[a] = 2.0 * hi - p[a];
                    true
                } else if p[a] < lo {
                    p[a] = 2.0 * lo - p[a];
                    true
                } else {
                    false
                };
                p[a] = p[a].clamp(lo, hi);
                if reflected {
                    v[a] = -v[a];
                    if a == 2 {
                        o.buoyancy_bias = -o.buoyancy_bias;
                    }
                }
            }
            *center = p;
            o.velocity = v;
            if let Some(sv) = scripted {
                *sv = v;
            }
        }
    }

    pub fn snapshot(&self, t: f64) -> ObstacleSnapshot {
        ObstacleSnapshot::new(t, self.obstacles.clone())
    }

    /// Plain-text dump: the grid followed by one line per obstacle.
    pub fn dump(&self) -> String {
        let mut s = self.grid.dump();
        for o in &self.obstacles {
            let c = o.shape.center();
            let h = o.shape.half_extents();
            let _ = writeln!(
                s,
                "{} {:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
                o.id, o.kind, c.x, c.y, c.z, h.x, h.y, h.z, o.buoyancy_bias
            );
        }
        s
    }
}

fn cell_hits_disk(cell_center: &Vec3, cs: f64, disk_center: &Vec3, radius: f64) -> bool {
    let dx = ((disk_center.x - cell_center.x).abs() - 0.5 * cs).max(0.0);
    let dy = ((disk_center.y - cell_center.y).abs() - 0.5 * cs).max(0.0);
    dx * dx + dy * dy < radius * radius
}

pub fn obstacle_density(env: &Environment) -> f64 {
    env.obstacle_density()
}
