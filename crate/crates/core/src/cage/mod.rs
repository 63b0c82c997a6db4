//! Minimum escape energy of a planar object held by a frozen scene.
//!
//! The escape energy of a configuration is approximated from above by the
//! cheapest collision-free path found from it to a goal region far from all
//! obstacles. Two cost models are supported:
//!
//! * [`EnergyModel::Gravity`]: conservative potential `m·g·y`. A path costs
//!   the highest potential it reaches above the start.
//! * [`EnergyModel::FrictionWork`]: non-conservative sliding friction. A path
//!   costs `μ·m·g` times its translational length.
//!
//! [`estimate_mee`] searches batch-sampled roadmaps; [`grid_mee_oracle`]
//! solves the same problem exactly on a lattice and is used to validate it.

mod oracle;
mod planner;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{is_separated, Placed, CONTACT_TOLERANCE};
use crate::geom::{convex_hull, strictly_inside_convex, Aabb, ConfigSE2, GeomError, ShapeGeom, Vec2};

pub use oracle::{grid_mee_oracle, grid_mee_oracle_capped, GridResolution, DEFAULT_MAX_GRID_CELLS};
pub use planner::{estimate_mee, PlannerConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CageError {
    #[error("invalid query: {0}")]
    InvalidQuery(&'static str),
    #[error("path must contain at least one configuration")]
    EmptyPath,
    #[error("grid of {cells} cells exceeds the cap of {cap}")]
    GridTooLarge { cells: usize, cap: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyModel {
    Gravity { mass: f64, g: f64 },
    FrictionWork { mu: f64, mass: f64, g: f64 },
}

impl EnergyModel {
    pub fn validate(&self) -> Result<(), CageError> {
        let (mass, g, mu) = match *self {
            EnergyModel::Gravity { mass, g } => (mass, g, 0.0),
            EnergyModel::FrictionWork { mu, mass, g } => (mass, g, mu),
        };
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(CageError::InvalidQuery("mass must be positive"));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(CageError::InvalidQuery("g must be positive"));
        }
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(CageError::InvalidQuery("mu must be non-negative"));
        }
        Ok(())
    }

    /// Potential energy at `q` (zero for the friction model).
    pub fn potential(&self, q: &ConfigSE2) -> f64 {
        match *self {
            EnergyModel::Gravity { mass, g } => mass * g * q.y,
            EnergyModel::FrictionWork { .. } => 0.0,
        }
    }

    /// Work per meter of sliding (zero for the gravity model).
    pub fn work_per_meter(&self) -> f64 {
        match *self {
            EnergyModel::Gravity { .. } => 0.0,
            EnergyModel::FrictionWork { mu, mass, g } => mu * mass * g,
        }
    }

    pub fn is_conservative(&self) -> bool {
        matches!(self, EnergyModel::Gravity { .. })
    }

    /// Energy of one lattice cell at resolution `(dx, dy)`: the most a grid
    /// answer can differ from the continuum one per crossing.
    pub fn cell_energy(&self, dx: f64, dy: f64) -> f64 {
        match *self {
            EnergyModel::Gravity { mass, g } => mass * g * dy,
            EnergyModel::FrictionWork { .. } => self.work_per_meter() * (dx * dx + dy * dy).sqrt(),
        }
    }
}

/// Escape target: configurations whose position lies in one of `boxes` and
/// whose clearance from every obstacle is at least `min_clearance`. With
/// `outside_obstacle_hull` the position must also lie outside the interior
/// of the convex hull of all obstacles. Orientation is unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub boxes: Vec<Aabb>,
    pub min_clearance: f64,
    #[serde(default)]
    pub outside_obstacle_hull: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeeStatus {
    Caged,
    NotCaged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeeResult {
    pub mee: f64,
    pub status: MeeStatus,
    pub witness_path: Vec<ConfigSE2>,
    pub samples_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EscapeCost {
    pub value: f64,
}

/// A frozen scene: the object, what it can collide with, and the energy model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeeQuery {
    pub object_shape: ShapeGeom,
    pub start: ConfigSE2,
    /// Manipulator parts and static geometry, in world coordinates.
    pub obstacles: Vec<(ShapeGeom, ConfigSE2)>,
    pub energy: EnergyModel,
    pub goal_region: GoalRegion,
    /// Sampling box for positions; orientation always spans the full circle.
    pub bounds: Aabb,
    /// Meters per radian in the SE(2) distance.
    pub theta_weight: f64,
    /// Reported energy when no escape path is found.
    pub mee_cap: f64,
    /// Edge validation step in the SE(2) metric.
    pub edge_resolution: f64,
    pub contact_tolerance: f64,
}

pub const DEFAULT_MEE_CAP: f64 = 5.0;
pub const DEFAULT_EDGE_RESOLUTION: f64 = 0.005;

impl MeeQuery {
    /// Builds a query with the default bounds, goal region and metric.
    ///
    /// Bounds are the bounding box of the obstacles and the object inflated by
    /// four object circumradii. Under gravity the goal is a band one
    /// circumradius wide along the four bounds faces (everything outside the
    /// obstacles' reach and below the rim for a basket); under friction it is
    /// every free position outside the convex hull of the obstacles, so an
    /// object that is not enclosed escapes for free.
    pub fn new(
        object_shape: ShapeGeom,
        start: ConfigSE2,
        obstacles: Vec<(ShapeGeom, ConfigSE2)>,
        energy: EnergyModel,
    ) -> Self {
        let r = object_shape.circumradius();
        let mut bb = object_shape.aabb(&start);
        for (s, p) in &obstacles {
            bb = bb.union(&s.aabb(p));
        }
        let bounds = bb.inflate(4.0 * r);
        let goal_region = default_goal(&energy, &bounds, r);
        Self {
            object_shape,
            start,
            obstacles,
            energy,
            goal_region,
            bounds,
            theta_weight: r,
            mee_cap: DEFAULT_MEE_CAP,
            edge_resolution: DEFAULT_EDGE_RESOLUTION,
            contact_tolerance: CONTACT_TOLERANCE,
        }
    }

    pub fn with_bounds(mut self, bounds: Aabb) -> Self {
        let r = self.object_shape.circumradius();
        self.goal_region = default_goal(&self.energy, &bounds, r);
        self.bounds = bounds;
        self
    }

    pub fn with_goal(mut self, goal: GoalRegion) -> Self {
        self.goal_region = goal;
        self
    }

    pub fn validate(&self) -> Result<(), CageError> {
        self.object_shape.validate()?;
        for (s, _) in &self.obstacles {
            s.validate()?;
        }
        self.energy.validate()?;
        if !self.start.is_finite() {
            return Err(CageError::InvalidQuery("start is not finite"));
        }
        if self.bounds.is_empty() || !self.bounds.contains(self.start.translation()) {
            return Err(CageError::InvalidQuery("bounds must contain the start"));
        }
        if !(self.theta_weight >= 0.0 && self.edge_resolution > 0.0 && self.contact_tolerance > 0.0) {
            return Err(CageError::InvalidQuery("metric parameters must be positive"));
        }
        if self.goal_region.min_clearance < 0.0 {
            return Err(CageError::InvalidQuery("goal clearance must be non-negative"));
        }
        if !(self.mee_cap >= 0.0) {
            return Err(CageError::InvalidQuery("mee cap must be non-negative"));
        }
        Ok(())
    }

    /// Recomputes the goal region from the current bounds and energy model.
    pub fn default_goal(&self) -> GoalRegion {
        default_goal(&self.energy, &self.bounds, self.object_shape.circumradius())
    }
}

fn default_goal(energy: &EnergyModel, bounds: &Aabb, r: f64) -> GoalRegion {
    match energy {
        EnergyModel::Gravity { .. } => {
            let (lo, hi) = (bounds.min, bounds.max);
            let w = r.min(0.5 * bounds.width()).min(0.5 * bounds.height());
            GoalRegion {
                boxes: alloc::vec![
                    Aabb::new(lo, Vec2::new(hi.x, lo.y + w)),
                    Aabb::new(Vec2::new(lo.x, hi.y - w), hi),
                    Aabb::new(lo, Vec2::new(lo.x + w, hi.y)),
                    Aabb::new(Vec2::new(hi.x - w, lo.y), hi),
                ],
                min_clearance: 2.0 * r,
                outside_obstacle_hull: false,
            }
        }
        EnergyModel::FrictionWork { .. } => GoalRegion {
            boxes: alloc::vec![*bounds],
            min_clearance: 0.0,
            outside_obstacle_hull: true,
        },
    }
}

/// Collision and goal tests for one query, with obstacles placed once.
pub(crate) struct FreeSpace<'q> {
    query: &'q MeeQuery,
    obstacles: Vec<Placed>,
    hull: Vec<Vec2>,
}

const HULL_CIRCLE_POINTS: usize = 32;

impl<'q> FreeSpace<'q> {
    pub(crate) fn new(query: &'q MeeQuery) -> Self {
        let obstacles = query
            .obstacles
            .iter()
            .map(|(s, p)| Placed::new(s, p))
            .collect::<Vec<_>>();
        let hull = if query.goal_region.outside_obstacle_hull {
            let mut pts = Vec::new();
            for o in &obstacles {
                match o {
                    Placed::Circle { center, radius } => pts.extend((0..HULL_CIRCLE_POINTS).map(|k| {
                        *center + Vec2::from_angle(core::f64::consts::TAU * k as f64 / HULL_CIRCLE_POINTS as f64) * *radius
                    })),
                    Placed::Polygon { vertices, .. } => pts.extend_from_slice(vertices),
                }
            }
            convex_hull(&pts)
        } else {
            Vec::new()
        };
        Self { query, obstacles, hull }
    }

    pub(crate) fn is_free(&self, q: &ConfigSE2) -> bool {
        let obj = Placed::new(&self.query.object_shape, q);
        let tol = self.query.contact_tolerance;
        self.obstacles.iter().all(|o| is_separated(o, &obj, tol))
    }

    pub(crate) fn in_goal(&self, q: &ConfigSE2) -> bool {
        let goal = &self.query.goal_region;
        let p = q.translation();
        if !self.query.bounds.contains(p) || !goal.boxes.iter().any(|b| b.contains(p)) {
            return false;
        }
        if strictly_inside_convex(p, &self.hull) {
            return false;
        }
        if goal.min_clearance <= 0.0 {
            return self.is_free(q);
        }
        let obj = Placed::new(&self.query.object_shape, q);
        self.obstacles
            .iter()
            .all(|o| is_separated(o, &obj, goal.min_clearance))
    }

    /// Checks the straight SE(2) segment `a → b` at the query's edge resolution.
    /// Endpoints are assumed to be checked by the caller.
    pub(crate) fn segment_free(&self, a: &ConfigSE2, b: &ConfigSE2) -> bool {
        let len = a.distance(b, self.query.theta_weight);
        let steps = (len / self.query.edge_resolution).ceil() as usize;
        (1..steps).all(|k| self.is_free(&a.lerp(b, k as f64 / steps as f64)))
    }
}

/// True when the object at `q` is separated from every obstacle by more
/// than the contact tolerance.
pub fn is_free(query: &MeeQuery, q: &ConfigSE2) -> bool {
    FreeSpace::new(query).is_free(q)
}

/// True when `q` lies inside the query's goal region.
pub fn in_goal(query: &MeeQuery, q: &ConfigSE2) -> bool {
    FreeSpace::new(query).in_goal(q)
}

/// Energy cost of a path relative to the query start.
///
/// Gravity: the largest potential reached above the start's, at least zero.
/// Friction: `μ·m·g` times the summed translational segment lengths.
pub fn path_cost(query: &MeeQuery, path: &[ConfigSE2]) -> Result<EscapeCost, CageError> {
    if path.is_empty() {
        return Err(CageError::EmptyPath);
    }
    let value = match query.energy {
        EnergyModel::Gravity { .. } => {
            let e0 = query.energy.potential(&query.start);
            path.iter()
                .map(|q| query.energy.potential(q) - e0)
                .fold(0.0, f64::max)
        }
        EnergyModel::FrictionWork { .. } => {
            let len: f64 = path
                .windows(2)
                .map(|w| (w[1].translation() - w[0].translation()).norm())
                .sum();
            query.energy.work_per_meter() * len
        }
    };
    Ok(EscapeCost { value })
}

pub(crate) fn status_for(mee: f64) -> MeeStatus {
    if mee == 0.0 {
        MeeStatus::NotCaged
    } else {
        MeeStatus::Caged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::collide;
    use crate::rng::rng_from_seed;
    use alloc::vec;
    use rand::Rng as _;

    fn gravity() -> EnergyModel {
        EnergyModel::Gravity { mass: 1.0, g: 9.81 }
    }

    fn wall_query() -> MeeQuery {
        let wall = ShapeGeom::rectangle(0.05, 0.05).unwrap();
        MeeQuery::new(
            ShapeGeom::circle(0.05).unwrap(),
            ConfigSE2::new(1.0, 0.0, 0.0),
            vec![(wall, ConfigSE2::new(0.0, 0.0, 0.0))],
            gravity(),
        )
    }

    #[test]
    fn free_far_away_and_blocked_at_obstacle() {
        let q = wall_query();
        assert!(is_free(&q, &ConfigSE2::new(1.0, 0.0, 0.0)));
        assert!(!is_free(&q, &ConfigSE2::new(0.0, 0.0, 0.0)));
    }

    /// Grazing poses: is_free must agree with collide's empty-set rule.
    #[test]
    fn grazing_poses_agree_with_collide() {
        let q = wall_query();
        let mut rng = rng_from_seed(42);
        for _ in 0..100 {
            let dir = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
            // walk out along a ray until the separation crosses the tolerance
            let mut lo = 0.0;
            let mut hi = 1.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let p = Vec2::from_angle(dir) * mid;
                let c = collide(&q.obstacles[0].0, &q.obstacles[0].1, &q.object_shape, &ConfigSE2::new(p.x, p.y, 0.0)).unwrap();
                if c.is_empty() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            for t in [lo, hi, 0.5 * (lo + hi)] {
                let p = Vec2::from_angle(dir) * t;
                let pose = ConfigSE2::new(p.x, p.y, 0.0);
                let c = collide(&q.obstacles[0].0, &q.obstacles[0].1, &q.object_shape, &pose).unwrap();
                assert_eq!(is_free(&q, &pose), c.is_empty());
            }
        }
    }

    #[test]
    fn path_cost_examples() {
        let q = MeeQuery::new(
            ShapeGeom::circle(0.05).unwrap(),
            ConfigSE2::new(0.0, 0.0, 0.0),
            vec![],
            gravity(),
        )
        .with_bounds(Aabb::new(Vec2::new(-5.0, -5.0), Vec2::new(5.0, 5.0)));
        assert_eq!(path_cost(&q, &[q.start]).unwrap().value, 0.0);
        let up_down = [
            ConfigSE2::new(0.0, 0.0, 0.0),
            ConfigSE2::new(0.1, 0.1, 0.0),
            ConfigSE2::new(0.2, -0.2, 0.0),
        ];
        assert!((path_cost(&q, &up_down).unwrap().value - 0.981).abs() < 1e-12);
        assert_eq!(path_cost(&q, &[]), Err(CageError::EmptyPath));

        let mut f = q.clone();
        f.energy = EnergyModel::FrictionWork { mu: 0.5, mass: 1.0, g: 9.81 };
        let straight = [ConfigSE2::new(0.0, 0.0, 0.0), ConfigSE2::new(2.0, 0.0, 1.0)];
        assert!((path_cost(&f, &straight).unwrap().value - 9.81).abs() < 1e-12);
    }

    #[test]
    fn path_cost_concatenation() {
        let q = wall_query();
        let mut rng = rng_from_seed(8);
        let mut pts = |n: usize| -> Vec<ConfigSE2> {
            (0..n)
                .map(|_| ConfigSE2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0))
                .collect()
        };
        let a = pts(5);
        let b = pts(6);
        let mut ab = a.clone();
        ab.extend_from_slice(&b);
        let g = |p: &[ConfigSE2]| path_cost(&q, p).unwrap().value;
        assert_eq!(g(&ab), g(&a).max(g(&b)));

        let mut f = q.clone();
        f.energy = EnergyModel::FrictionWork { mu: 0.3, mass: 2.0, g: 9.81 };
        let h = |p: &[ConfigSE2]| path_cost(&f, p).unwrap().value;
        // joining the two pieces adds the bridging segment
        let bridge = [*a.last().unwrap(), b[0]];
        assert!((h(&ab) - (h(&a) + h(&bridge) + h(&b))).abs() < 1e-12);
    }

    #[test]
    fn default_goal_is_clear_of_obstacles() {
        let q = wall_query();
        let fs = FreeSpace::new(&q);
        for b in &q.goal_region.boxes {
            for p in [b.min, b.max, Vec2::new(b.min.x, b.max.y), Vec2::new(b.max.x, b.min.y)] {
                let c = ConfigSE2::new(p.x, p.y, 0.0);
                assert!(fs.in_goal(&c), "{p:?}");
            }
        }
        assert!(!fs.in_goal(&ConfigSE2::new(0.12, 0.0, 0.0)));
    }
}
