//! Grid Dijkstra over the discretized free configuration space.
//!
//! Cells are centred on a regular `(x, y, θ)` lattice over the query bounds.
//! A cell is a node when its centre is collision-free; neighbours are joined
//! through a 16-direction planar stencil combined with θ steps of −1, 0, +1,
//! and an edge is kept when its midpoint is also free. The gravity model
//! minimizes the highest potential along the path (bottleneck shortest
//! path); the friction model minimizes summed translational length. The
//! answer is exact for the lattice graph and converges as the resolution
//! shrinks.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{path_cost, status_for, CageError, EnergyModel, FreeSpace, MeeQuery, MeeResult, MeeStatus};
use crate::geom::ConfigSE2;

pub const DEFAULT_MAX_GRID_CELLS: usize = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResolution {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl GridResolution {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        Self { dx, dy, dtheta }
    }
}

const STENCIL: [(i32, i32); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

const UNKNOWN: u8 = 0;
const FREE: u8 = 1;
const BLOCKED: u8 = 2;

struct Grid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    res: GridResolution,
    theta_fixed: Option<f64>,
}

impl Grid {
    fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        (it * self.ny + iy) * self.nx + ix
    }

    fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let ix = idx % self.nx;
        let iy = (idx / self.nx) % self.ny;
        let it = idx / (self.nx * self.ny);
        (ix, iy, it)
    }

    fn config(&self, idx: usize) -> ConfigSE2 {
        let (ix, iy, it) = self.coords(idx);
        let theta = match self.theta_fixed {
            Some(t) => t,
            None => -PI + (it as f64 + 0.5) * self.res.dtheta,
        };
        ConfigSE2::new(
            self.x0 + (ix as f64 + 0.5) * self.res.dx,
            self.y0 + (iy as f64 + 0.5) * self.res.dy,
            theta,
        )
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, f64);

#[derive(PartialEq)]
struct Item(Key, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0 .0
            .total_cmp(&self.0 .0)
            .then(o.0 .1.total_cmp(&self.0 .1))
            .then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Exact escape cost on a `(dx, dy, dθ)` lattice, with the default cell cap.
pub fn grid_mee_oracle(query: &MeeQuery, res: GridResolution) -> Result<MeeResult, CageError> {
    grid_mee_oracle_capped(query, res, DEFAULT_MAX_GRID_CELLS)
}

pub fn grid_mee_oracle_capped(
    query: &MeeQuery,
    res: GridResolution,
    max_cells: usize,
) -> Result<MeeResult, CageError> {
    query.validate()?;
    if !(res.dx > 0.0 && res.dy > 0.0 && res.dtheta > 0.0) {
        return Err(CageError::InvalidQuery("grid resolution must be positive"));
    }
    let space = FreeSpace::new(query);
    if !space.is_free(&query.start) {
        return Err(CageError::InvalidQuery("start configuration is in collision"));
    }
    let b = &query.bounds;
    let nx = (b.width() / res.dx).floor().max(1.0) as usize;
    let ny = (b.height() / res.dy).floor().max(1.0) as usize;
    let planar = query.object_shape.is_rotationally_symmetric();
    let nt = if planar { 1 } else { ((2.0 * PI) / res.dtheta).round().max(1.0) as usize };
    let cells = nx.saturating_mul(ny).saturating_mul(nt);
    if cells > max_cells {
        return Err(CageError::GridTooLarge { cells, cap: max_cells });
    }
    if space.in_goal(&query.start) {
        return Ok(MeeResult {
            mee: 0.0,
            status: MeeStatus::NotCaged,
            witness_path: vec![query.start],
            samples_used: 0,
        });
    }
    // centre the lattice inside the bounds
    let x0 = b.min.x + 0.5 * (b.width() - nx as f64 * res.dx);
    let y0 = b.min.y + 0.5 * (b.height() - ny as f64 * res.dy);
    let grid = Grid {
        nx,
        ny,
        x0,
        y0,
        res: GridResolution {
            dtheta: 2.0 * PI / nt as f64,
            ..res
        },
        theta_fixed: planar.then_some(query.start.theta),
    };

    let mut state = vec![UNKNOWN; cells];
    let free = |idx: usize, state: &mut Vec<u8>| -> bool {
        if state[idx] == UNKNOWN {
            state[idx] = if space.is_free(&grid.config(idx)) { FREE } else { BLOCKED };
        }
        state[idx] == FREE
    };

    let energy = query.energy;
    let e0 = energy.potential(&query.start);
    let relax = |from: Key, a: &ConfigSE2, b: &ConfigSE2| -> Key {
        let step = (b.translation() - a.translation()).norm();
        match energy {
            EnergyModel::Gravity { .. } => Key(from.0.max(energy.potential(b) - e0), from.1 + step),
            EnergyModel::FrictionWork { .. } => Key(from.0 + step, from.1 + step),
        }
    };

    // the start is a virtual node (index `cells`) joined to the lattice around it
    let start = query.start;
    let sx = ((start.x - x0) / res.dx).floor() as i64;
    let sy = ((start.y - y0) / res.dy).floor() as i64;
    let st = if planar {
        0
    } else {
        (((start.theta + PI) / grid.res.dtheta).floor() as i64).rem_euclid(nt as i64)
    };
    let mut best: Vec<Option<Key>> = vec![None; cells];
    let mut parent = vec![usize::MAX; cells];
    let mut heap = BinaryHeap::new();
    let t_range: &[i64] = if nt > 1 { &[-1, 0, 1] } else { &[0] };
    for ddy in -2i64..=2 {
        for ddx in -2i64..=2 {
            for &ddt in t_range {
                let (ix, iy) = (sx + ddx, sy + ddy);
                if ix < 0 || iy < 0 || ix >= nx as i64 || iy >= ny as i64 {
                    continue;
                }
                let it = (st + ddt).rem_euclid(nt as i64) as usize;
                let idx = grid.index(ix as usize, iy as usize, it);
                if !free(idx, &mut state) {
                    continue;
                }
                let c = grid.config(idx);
                if !space.segment_free(&start, &c) {
                    continue;
                }
                let k = relax(Key(0.0, 0.0), &start, &c);
                if best[idx].is_none_or(|b| (k.0, k.1) < (b.0, b.1)) {
                    best[idx] = Some(k);
                    parent[idx] = cells;
                    heap.push(Item(k, idx));
                }
            }
        }
    }

    let mut done = vec![false; cells];
    let mut reached = None;
    while let Some(Item(key, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        let cu = grid.config(u);
        if space.in_goal(&cu) {
            reached = Some(u);
            break;
        }
        let (ix, iy, it) = grid.coords(u);
        for &(ox, oy) in STENCIL.iter().chain(core::iter::once(&(0, 0))) {
            let (jx, jy) = (ix as i64 + ox as i64, iy as i64 + oy as i64);
            if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                continue;
            }
            for &dt in t_range {
                if ox == 0 && oy == 0 && dt == 0 {
                    continue;
                }
                let jt = (it as i64 + dt).rem_euclid(nt as i64) as usize;
                let v = grid.index(jx as usize, jy as usize, jt);
                if done[v] || !free(v, &mut state) {
                    continue;
                }
                let cv = grid.config(v);
                let k = relax(key, &cu, &cv);
                if best[v].is_some_and(|b| (b.0, b.1) <= (k.0, k.1)) {
                    continue;
                }
                if !space.is_free(&cu.lerp(&cv, 0.5)) {
                    continue;
                }
                best[v] = Some(k);
                parent[v] = u;
                heap.push(Item(k, v));
            }
        }
    }

    let Some(goal) = reached else {
        return Ok(MeeResult {
            mee: query.mee_cap,
            status: MeeStatus::BudgetExhausted,
            witness_path: Vec::new(),
            samples_used: cells,
        });
    };
    let mut path = Vec::new();
    let mut v = goal;
    while v != cells {
        path.push(grid.config(v));
        v = parent[v];
    }
    path.push(start);
    path.reverse();
    let mee = path_cost(query, &path)?.value;
    Ok(MeeResult {
        mee,
        status: status_for(mee),
        witness_path: path,
        samples_used: cells,
    })
}
