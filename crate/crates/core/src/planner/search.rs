//! RRT, RRT-Connect and PRM over a [`PlanningScene`].

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::Rng;

use super::space::{distance, interpolate, sample_uniform, CompositeConfig, PlanningScene};
use super::PlanRequest;

/// Stops the search on an iteration cap or the wall-clock budget.
pub(crate) struct Budget {
    started: Instant,
    seconds: f64,
    max_iterations: Option<u64>,
    pub iterations: u64,
}

impl Budget {
    pub fn new(req: &PlanRequest, started: Instant) -> Self {
        Self { started, seconds: req.time_budget, max_iterations: req.max_iterations, iterations: 0 }
    }

    /// Counts one iteration; false once the budget is spent.
    pub fn tick(&mut self) -> bool {
        if self.max_iterations.is_some_and(|m| self.iterations >= m) {
            return false;
        }
        if self.started.elapsed().as_secs_f64() > self.seconds {
            return false;
        }
        self.iterations += 1;
        true
    }
}

struct Tree {
    nodes: Vec<CompositeConfig>,
    parent: Vec<usize>,
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

impl Tree {
    fn new(root: CompositeConfig) -> Self {
        Self { nodes: vec![root], parent: vec![usize::MAX] }
    }

    fn nearest(&self, q: &[[f64; 4]]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d = distance(n, q);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn add(&mut self, q: CompositeConfig, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(parent);
        self.nodes.len() - 1
    }

    /// Root-to-node path.
    fn path_to(&self, mut i: usize) -> Vec<CompositeConfig> {
        let mut out = vec![self.nodes[i].clone()];
        while self.parent[i] != usize::MAX {
            i = self.parent[i];
            out.push(self.nodes[i].clone());
        }
        out.reverse();
        out
    }

    fn extend(&mut self, scene: &PlanningScene, target: &[[f64; 4]], step: f64, res: f64) -> Extend {
        let near = self.nearest(target);
        let d = distance(&self.nodes[near], target);
        let (q, reached) = if d <= step {
            (target.to_vec(), true)
        } else {
            (interpolate(&self.nodes[near], target, step / d), false)
        };
        if !scene.motion_valid(&self.nodes[near], &q, res) {
            return Extend::Trapped;
        }
        let i = self.add(q, near);
        if reached {
            Extend::Reached(i)
        } else {
            Extend::Advanced(i)
        }
    }
}

pub const GOAL_BIAS: f64 = 0.05;
pub const STEP_FACTOR: f64 = 5.0;
pub const PRM_NEIGHBORS: usize = 10;

pub(crate) fn rrt<R: Rng>(req: &PlanRequest, scene: &PlanningScene, budget: &mut Budget, rng: &mut R) -> Option<Vec<CompositeConfig>> {
    let res = req.validity_resolution;
    let step = STEP_FACTOR * res;
    let mut tree = Tree::new(req.start.clone());
    if distance(&req.start, &req.goal) <= step && scene.motion_valid(&req.start, &req.goal, res) {
        let g = tree.add(req.goal.clone(), 0);
        return Some(tree.path_to(g));
    }
    while budget.tick() {
        let target =
            if rng.random::<f64>() < GOAL_BIAS { req.goal.clone() } else { sample_uniform(&scene.bounds, req.start.len(), rng) };
        let new = match tree.extend(scene, &target, step, res) {
            Extend::Trapped => continue,
            Extend::Advanced(i) | Extend::Reached(i) => i,
        };
        let d = distance(&tree.nodes[new], &req.goal);
        if d <= req.goal_tolerance {
            return Some(tree.path_to(new));
        }
        if d <= step && scene.motion_valid(&tree.nodes[new], &req.goal, res) {
            let g = tree.add(req.goal.clone(), new);
            return Some(tree.path_to(g));
        }
    }
    None
}

pub(crate) fn rrt_connect<R: Rng>(
    req: &PlanRequest,
    scene: &PlanningScene,
    budget: &mut Budget,
    rng: &mut R,
) -> Option<Vec<CompositeConfig>> {
    let res = req.validity_resolution;
    let step = STEP_FACTOR * res;
    let mut trees = [Tree::new(req.start.clone()), Tree::new(req.goal.clone())];
    // trees[0] grows from `a_is_start ? start : goal`.
    let mut a_is_start = true;
    while budget.tick() {
        let q = sample_uniform(&scene.bounds, req.start.len(), rng);
        let (a, b) = {
            let (x, y) = trees.split_at_mut(1);
            (&mut x[0], &mut y[0])
        };
        let i = match a.extend(scene, &q, step, res) {
            Extend::Trapped => None,
            Extend::Advanced(i) | Extend::Reached(i) => Some(i),
        };
        if let Some(i) = i {
            let qn = a.nodes[i].clone();
            loop {
                match b.extend(scene, &qn, step, res) {
                    Extend::Advanced(_) => continue,
                    Extend::Trapped => break,
                    Extend::Reached(j) => {
                        let mut path = a.path_to(i);
                        let mut tail = b.path_to(j);
                        tail.pop();
                        tail.reverse();
                        path.extend(tail);
                        if !a_is_start {
                            path.reverse();
                        }
                        return Some(path);
                    }
                }
            }
        }
        trees.swap(0, 1);
        a_is_start = !a_is_start;
    }
    None
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn shortest_path(nodes: &[CompositeConfig], adj: &[Vec<(usize, f64)>], from: usize, to: usize) -> Option<Vec<CompositeConfig>> {
    let mut dist = vec![f64::INFINITY; nodes.len()];
    let mut prev = vec![usize::MAX; nodes.len()];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    // Non-negative f64 bit patterns sort like their values.
    heap.push(Reverse((0f64.to_bits(), from)));
    while let Some(Reverse((bits, u))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[u] {
            continue;
        }
        if u == to {
            break;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                prev[v] = u;
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut out = vec![nodes[to].clone()];
    let mut i = to;
    while i != from {
        i = prev[i];
        out.push(nodes[i].clone());
    }
    out.reverse();
    Some(out)
}

/// Grows the roadmap until start and goal share a component, then returns
/// the shortest roadmap path.
pub(crate) fn prm<R: Rng>(req: &PlanRequest, scene: &PlanningScene, budget: &mut Budget, rng: &mut R) -> Option<Vec<CompositeConfig>> {
    let res = req.validity_resolution;
    let mut nodes = vec![req.start.clone(), req.goal.clone()];
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(), Vec::new()];
    let mut sets = DisjointSet(vec![0, 1]);
    if scene.motion_valid(&req.start, &req.goal, res) {
        let w = distance(&req.start, &req.goal);
        adj[0].push((1, w));
        adj[1].push((0, w));
        sets.union(0, 1);
    }
    while sets.find(0) != sets.find(1) {
        if !budget.tick() {
            return None;
        }
        let q = sample_uniform(&scene.bounds, req.start.len(), rng);
        if !scene.valid(&q) {
            continue;
        }
        let mut near: Vec<(f64, usize)> = nodes.iter().enumerate().map(|(i, n)| (distance(n, &q), i)).collect();
        let by_distance = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
        if near.len() > PRM_NEIGHBORS {
            near.select_nth_unstable_by(PRM_NEIGHBORS - 1, by_distance);
            near.truncate(PRM_NEIGHBORS);
        }
        near.sort_by(by_distance);
        let id = nodes.len();
        nodes.push(q);
        adj.push(Vec::new());
        sets.0.push(id);
        for (w, j) in near {
            if scene.motion_valid(&nodes[j], &nodes[id], res) {
                adj[id].push((j, w));
                adj[j].push((id, w));
                sets.union(id, j);
            }
        }
    }
    shortest_path(&nodes, &adj, 0, 1)
}
