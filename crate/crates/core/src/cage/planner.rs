//! Batch-sampled roadmap search for escape paths.
//!
//! Samples are drawn from a single seeded stream and inserted one at a time.
//! Each new node connects to its nearest predecessors within a radius that
//! shrinks with the node count, so edges are never removed: the roadmap built
//! from a longer prefix of the stream always contains the shorter one. At
//! every batch boundary the roadmap is searched (Dijkstra, edges validated
//! lazily) and the best path is locally refined; the estimate is the best
//! refined cost seen so far. Budgets that are multiples of the batch size
//! therefore give non-increasing estimates.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{path_cost, status_for, CageError, EnergyModel, FreeSpace, MeeQuery, MeeResult, MeeStatus};
use crate::geom::ConfigSE2;
use crate::rng::{split_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Samples per batch; the roadmap is searched at every batch boundary.
    pub batch_size: usize,
    /// Upper bound on connections made by one new node.
    pub max_neighbors: usize,
    /// Multiplier on the shrinking connection radius.
    pub radius_scale: f64,
    /// Fraction of samples drawn near obstacle boundaries.
    pub near_obstacle_fraction: f64,
    /// Local refinement sweeps per step size (0 disables refinement).
    pub refine_sweeps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            max_neighbors: 16,
            radius_scale: 1.5,
            near_obstacle_fraction: 0.3,
            refine_sweeps: 6,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum EdgeState {
    Unknown,
    Valid,
    Invalid,
}

struct Edge {
    a: usize,
    b: usize,
    state: EdgeState,
}

/// Lexicographic search label: (primary cost, path length).
#[derive(Clone, Copy, PartialEq)]
struct Label(f64, f64);

impl Label {
    fn cmp_total(&self, o: &Label) -> Ordering {
        self.0.total_cmp(&o.0).then(self.1.total_cmp(&o.1))
    }
}

#[derive(PartialEq)]
struct HeapItem(Label, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on the label, ties by node index for determinism
        o.0.cmp_total(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

struct Roadmap<'q> {
    space: FreeSpace<'q>,
    query: &'q MeeQuery,
    planar: bool,
    nodes: Vec<ConfigSE2>,
    goal: Vec<bool>,
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    // spatial hash on (x, y)
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
    gamma: f64,
    min_radius: f64,
}

impl<'q> Roadmap<'q> {
    fn new(query: &'q MeeQuery, budget: usize, cfg: &PlannerConfig) -> Self {
        let planar = query.object_shape.is_rotationally_symmetric();
        let b = &query.bounds;
        let dim = if planar { 2.0 } else { 3.0 };
        let measure = if planar {
            b.width() * b.height()
        } else {
            b.width() * b.height() * 2.0 * PI * query.theta_weight.max(1e-9)
        };
        let unit_ball = if planar { PI } else { 4.0 * PI / 3.0 };
        let gamma = cfg.radius_scale
            * 2.0
            * ((1.0 + 1.0 / dim) * measure / unit_ball).powf(1.0 / dim);
        let min_radius = 2.0 * query.edge_resolution;
        let n_ref = budget.max(2) as f64;
        let cell = (gamma * (n_ref.ln() / n_ref).powf(1.0 / dim)).max(min_radius);
        let cols = ((b.width() / cell).ceil() as usize).clamp(1, 512);
        let rows = ((b.height() / cell).ceil() as usize).clamp(1, 512);
        let cell = (b.width() / cols as f64).max(b.height() / rows as f64);
        Self {
            space: FreeSpace::new(query),
            query,
            planar,
            nodes: Vec::new(),
            goal: Vec::new(),
            edges: Vec::new(),
            adj: Vec::new(),
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
            gamma,
            min_radius,
        }
    }

    fn bucket_of(&self, q: &ConfigSE2) -> (usize, usize) {
        let b = &self.query.bounds;
        let cx = (((q.x - b.min.x) / self.cell) as isize).clamp(0, self.cols as isize - 1);
        let cy = (((q.y - b.min.y) / self.cell) as isize).clamp(0, self.rows as isize - 1);
        (cx as usize, cy as usize)
    }

    fn radius(&self, n: usize) -> f64 {
        let dim = if self.planar { 2.0 } else { 3.0 };
        let n = (n.max(2)) as f64;
        (self.gamma * (n.ln() / n).powf(1.0 / dim)).max(self.min_radius)
    }

    fn insert(&mut self, q: ConfigSE2, max_neighbors: usize) {
        let idx = self.nodes.len();
        let r = self.radius(idx + 1);
        let tw = self.query.theta_weight;
        let (cx, cy) = self.bucket_of(&q);
        let span = (r / self.cell).ceil() as usize;
        let mut near: Vec<(f64, usize)> = Vec::new();
        for y in cy.saturating_sub(span)..=(cy + span).min(self.rows - 1) {
            for x in cx.saturating_sub(span)..=(cx + span).min(self.cols - 1) {
                for &j in &self.buckets[y * self.cols + x] {
                    let d = self.nodes[j].distance(&q, tw);
                    if d <= r {
                        near.push((d, j));
                    }
                }
            }
        }
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.truncate(max_neighbors);
        let in_goal = self.space.in_goal(&q);
        self.nodes.push(q);
        self.goal.push(in_goal);
        self.adj.push(Vec::new());
        for (_, j) in near {
            let e = self.edges.len();
            self.edges.push(Edge {
                a: j,
                b: idx,
                state: EdgeState::Unknown,
            });
            self.adj[j].push(e);
            self.adj[idx].push(e);
        }
        self.buckets[cy * self.cols + cx].push(idx);
    }

    fn edge_valid(&mut self, e: usize) -> bool {
        match self.edges[e].state {
            EdgeState::Valid => true,
            EdgeState::Invalid => false,
            EdgeState::Unknown => {
                let (a, b) = (self.edges[e].a, self.edges[e].b);
                let ok = self.space.segment_free(&self.nodes[a], &self.nodes[b]);
                self.edges[e].state = if ok { EdgeState::Valid } else { EdgeState::Invalid };
                ok
            }
        }
    }

    /// Cheapest roadmap path from node 0 to any goal node.
    fn search(&mut self) -> Option<Vec<ConfigSE2>> {
        let n = self.nodes.len();
        let energy = self.query.energy;
        let e0 = energy.potential(&self.nodes[0]);
        let mut best: Vec<Option<Label>> = vec![None; n];
        let mut parent = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[0] = Some(Label(0.0, 0.0));
        heap.push(HeapItem(Label(0.0, 0.0), 0));
        while let Some(HeapItem(label, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if self.goal[u] {
                let mut path = vec![self.nodes[u]];
                let mut v = u;
                while parent[v] != usize::MAX {
                    v = parent[v];
                    path.push(self.nodes[v]);
                }
                path.reverse();
                return Some(path);
            }
            for k in 0..self.adj[u].len() {
                let e = self.adj[u][k];
                let v = if self.edges[e].a == u { self.edges[e].b } else { self.edges[e].a };
                if done[v] {
                    continue;
                }
                let step = (self.nodes[v].translation() - self.nodes[u].translation()).norm();
                let cand = match energy {
                    EnergyModel::Gravity { .. } => {
                        Label(label.0.max(energy.potential(&self.nodes[v]) - e0), label.1 + step)
                    }
                    EnergyModel::FrictionWork { .. } => Label(label.0 + step, label.1 + step),
                };
                if best[v].is_some_and(|b| b.cmp_total(&cand) != Ordering::Greater) {
                    continue;
                }
                if !self.edge_valid(e) {
                    continue;
                }
                best[v] = Some(cand);
                parent[v] = u;
                heap.push(HeapItem(cand, v));
            }
        }
        None
    }

    fn sample(&self, rng: &mut Rng, near_fraction: f64) -> Option<ConfigSE2> {
        let u = self.uniform(rng);
        if rng.random::<f64>() >= near_fraction {
            return self.space.is_free(&u).then_some(u);
        }
        // Gaussian pair: keep the free member of a free/blocked pair
        let sigma = 2.0 * self.query.object_shape.circumradius().max(self.query.edge_resolution);
        let dx: f64 = StandardNormal.sample(rng);
        let dy: f64 = StandardNormal.sample(rng);
        let dt: f64 = StandardNormal.sample(rng);
        let dth = if self.planar { 0.0 } else { dt * sigma / self.query.theta_weight.max(1e-9) };
        let v = ConfigSE2::new(u.x + sigma * dx, u.y + sigma * dy, u.theta + dth);
        let v_in = self.query.bounds.contains(v.translation());
        match (self.space.is_free(&u), v_in && self.space.is_free(&v)) {
            (true, false) => Some(u),
            (false, true) => Some(v),
            _ => None,
        }
    }

    fn uniform(&self, rng: &mut Rng) -> ConfigSE2 {
        let b = &self.query.bounds;
        let x = b.min.x + rng.random::<f64>() * b.width();
        let y = b.min.y + rng.random::<f64>() * b.height();
        let th = rng.random::<f64>() * 2.0 * PI - PI;
        let th = if self.planar { self.query.start.theta } else { th };
        ConfigSE2::new(x, y, th)
    }
}

/// Upper bound on the minimum escape energy of `query.start`.
///
/// `budget` counts drawn samples (including rejected ones). Returns
/// [`MeeStatus::NotCaged`] with zero energy when a zero-cost escape is found
/// and [`MeeStatus::BudgetExhausted`] with `query.mee_cap` when no escape path
/// is found at all.
pub fn estimate_mee(query: &MeeQuery, budget: usize, rng: &mut Rng) -> Result<MeeResult, CageError> {
    estimate_mee_with(query, budget, &PlannerConfig::default(), rng)
}

pub fn estimate_mee_with(
    query: &MeeQuery,
    budget: usize,
    cfg: &PlannerConfig,
    rng: &mut Rng,
) -> Result<MeeResult, CageError> {
    query.validate()?;
    if budget == 0 {
        return Err(CageError::InvalidQuery("budget must be at least 1"));
    }
    let mut map = Roadmap::new(query, budget, cfg);
    if !map.space.is_free(&query.start) {
        return Err(CageError::InvalidQuery("start configuration is in collision"));
    }
    // refinement draws from its own streams so the sample stream stays a prefix
    let refine_seed = rng.next_u64();
    if map.space.in_goal(&query.start) {
        return Ok(MeeResult {
            mee: 0.0,
            status: MeeStatus::NotCaged,
            witness_path: vec![query.start],
            samples_used: 0,
        });
    }
    map.insert(query.start, cfg.max_neighbors);

    let batch = cfg.batch_size.max(1);
    let mut best: Option<(f64, Vec<ConfigSE2>)> = None;
    let mut drawn = 0usize;
    while drawn < budget {
        let this_batch = batch.min(budget - drawn);
        for _ in 0..this_batch {
            if let Some(q) = map.sample(rng, cfg.near_obstacle_fraction) {
                map.insert(q, cfg.max_neighbors);
            }
        }
        drawn += this_batch;
        if let Some(raw) = map.search() {
            let mut refine_rng = rng_from_seed(split_seed(refine_seed, drawn as u64));
            let path = refine(&map.space, query, raw, cfg.refine_sweeps, &mut refine_rng);
            let cost = path_cost(query, &path)?.value;
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, path));
            }
        }
        if best.as_ref().is_some_and(|(c, _)| *c == 0.0) {
            break;
        }
    }

    Ok(match best {
        Some((mee, path)) => MeeResult {
            mee,
            status: status_for(mee),
            witness_path: path,
            samples_used: drawn,
        },
        None => MeeResult {
            mee: query.mee_cap,
            status: MeeStatus::BudgetExhausted,
            witness_path: Vec::new(),
            samples_used: drawn,
        },
    })
}

/// Local objective of waypoint `i` given its neighbours.
fn local_objective(energy: &EnergyModel, prev: &ConfigSE2, q: &ConfigSE2, next: Option<&ConfigSE2>) -> (f64, f64) {
    let len = (q.translation() - prev.translation()).norm()
        + next.map_or(0.0, |n| (n.translation() - q.translation()).norm());
    match energy {
        EnergyModel::Gravity { .. } => (energy.potential(q), len),
        EnergyModel::FrictionWork { .. } => (len, 0.0),
    }
}

fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 - 1e-15 || (a.0 <= b.0 && a.1 < b.1 - 1e-12)
}

/// Shortcutting, densification and randomized local descent on the
/// waypoints. Every accepted change keeps the path collision-free, the start
/// fixed and the end inside the goal region.
fn refine(space: &FreeSpace<'_>, query: &MeeQuery, mut path: Vec<ConfigSE2>, sweeps: usize, rng: &mut Rng) -> Vec<ConfigSE2> {
    if sweeps == 0 || path.len() < 2 {
        return path;
    }
    shortcut(space, &mut path);
    let planar = query.object_shape.is_rotationally_symmetric();
    let tw = query.theta_weight.max(1e-9);
    let r = query.object_shape.circumradius();
    let mut step = 0.5 * r;
    let min_step = 0.25 * query.edge_resolution;
    while step >= min_step {
        densify(space, &mut path, 2.0 * step.max(query.edge_resolution), tw);
        for _ in 0..sweeps {
            let last = path.len() - 1;
            for i in 1..=last {
                let cur = path[i];
                let dx: f64 = StandardNormal.sample(rng);
                let dy: f64 = StandardNormal.sample(rng);
                let dt: f64 = StandardNormal.sample(rng);
                let th = if planar { cur.theta } else { cur.theta + dt * step / tw };
                let cand = ConfigSE2::new(cur.x + dx * step, cur.y + dy * step, th);
                let next = (i < last).then(|| path[i + 1]);
                let before = local_objective(&query.energy, &path[i - 1], &cur, next.as_ref());
                let after = local_objective(&query.energy, &path[i - 1], &cand, next.as_ref());
                if !better(after, before) {
                    continue;
                }
                if !query.bounds.contains(cand.translation()) || !space.is_free(&cand) {
                    continue;
                }
                if i == last && !space.in_goal(&cand) {
                    continue;
                }
                if !space.segment_free(&path[i - 1], &cand) {
                    continue;
                }
                if let Some(n) = next {
                    if !space.segment_free(&cand, &n) {
                        continue;
                    }
                }
                path[i] = cand;
            }
        }
        shortcut(space, &mut path);
        step *= 0.5;
    }
    path
}

/// Greedy shortcutting: from each kept waypoint jump to the farthest
/// waypoint reachable in a straight valid segment. Never raises the gravity
/// cost (a segment peaks at an endpoint) nor the friction cost (triangle
/// inequality).
fn shortcut(space: &FreeSpace<'_>, path: &mut Vec<ConfigSE2>) {
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !space.segment_free(&path[i], &path[j]) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    *path = out;
}

/// Splits long segments; intermediate points that graze an obstacle between
/// the validated samples are skipped so every waypoint stays free.
fn densify(space: &FreeSpace<'_>, path: &mut Vec<ConfigSE2>, max_len: f64, tw: f64) {
    let mut out = Vec::with_capacity(path.len() * 2);
    out.push(path[0]);
    for w in path.windows(2) {
        let d = w[0].distance(&w[1], tw);
        let k = (d / max_len).ceil().max(1.0) as usize;
        for s in 1..k {
            let q = w[0].lerp(&w[1], s as f64 / k as f64);
            if space.is_free(&q) {
                out.push(q);
            }
        }
        out.push(w[1]);
    }
    *path = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cage::{is_free, in_goal};
    use crate::geom::{Aabb, ShapeGeom, Vec2};
    use crate::rng::rng_from_seed;

    #[test]
    fn open_space_descent_is_not_caged() {
        let q = MeeQuery::new(
            ShapeGeom::circle(0.05).unwrap(),
            ConfigSE2::new(0.0, 0.0, 0.0),
            vec![],
            EnergyModel::Gravity { mass: 1.0, g: 9.81 },
        )
        .with_bounds(Aabb::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0)));
        let res = estimate_mee(&q, 500, &mut rng_from_seed(1)).unwrap();
        assert_eq!(res.status, MeeStatus::NotCaged);
        assert_eq!(res.mee, 0.0);
        assert!(in_goal(&q, res.witness_path.last().unwrap()));
    }

    #[test]
    fn start_in_collision_is_rejected() {
        let q = MeeQuery::new(
            ShapeGeom::circle(0.05).unwrap(),
            ConfigSE2::new(0.0, 0.0, 0.0),
            vec![(ShapeGeom::circle(0.1).unwrap(), ConfigSE2::new(0.0, 0.0, 0.0))],
            EnergyModel::Gravity { mass: 1.0, g: 9.81 },
        );
        assert!(matches!(
            estimate_mee(&q, 100, &mut rng_from_seed(1)),
            Err(CageError::InvalidQuery(_))
        ));
    }

    #[test]
    fn sealed_box_exhausts_budget() {
        let wall = |x: f64, y: f64, w: f64, h: f64| (ShapeGeom::rectangle(w, h).unwrap(), ConfigSE2::new(x, y, 0.0));
        let obstacles = vec![
            wall(0.0, -0.14, 0.3, 0.02),
            wall(0.0, 0.14, 0.3, 0.02),
            wall(-0.14, 0.0, 0.02, 0.3),
            wall(0.14, 0.0, 0.02, 0.3),
        ];
        let q = MeeQuery::new(
            ShapeGeom::circle(0.05).unwrap(),
            ConfigSE2::new(0.0, 0.0, 0.0),
            obstacles,
            EnergyModel::FrictionWork { mu: 0.5, mass: 1.0, g: 9.81 },
        );
        let res = estimate_mee(&q, 300, &mut rng_from_seed(4)).unwrap();
        assert_eq!(res.status, MeeStatus::BudgetExhausted);
        assert_eq!(res.mee, q.mee_cap);
        assert!(res.witness_path.is_empty());
    }

    #[test]
    fn witness_is_sound() {
        // square held in a V: must slide out through the mouth
        let arm = |a: Vec2, b: Vec2| ShapeGeom::segment(a, b, 0.01).unwrap();
        let q = MeeQuery::new(
            ShapeGeom::rectangle(0.02, 0.02).unwrap(),
            ConfigSE2::new(0.06, 0.0, 0.3),
            vec![
                arm(Vec2::ZERO, Vec2::new(0.12, 0.1)),
                arm(Vec2::ZERO, Vec2::new(0.12, -0.1)),
            ],
            EnergyModel::FrictionWork { mu: 0.5, mass: 1.0, g: 9.81 },
        );
        let res = estimate_mee(&q, 600, &mut rng_from_seed(12)).unwrap();
        assert_eq!(res.status, MeeStatus::Caged);
        assert_eq!(res.witness_path[0], q.start);
        assert!(in_goal(&q, res.witness_path.last().unwrap()));
        assert!(res.witness_path.iter().all(|c| is_free(&q, c)));
        assert_eq!(path_cost(&q, &res.witness_path).unwrap().value, res.mee);
    }
}
