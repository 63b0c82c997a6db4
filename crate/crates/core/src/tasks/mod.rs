//! Task catalog: `Catch`, `VPush` and `UPush`.
//!
//! A [`TaskSpec`] is plain data (bounds, shapes, goal, episode length, world
//! settings) so a task can be fully described by a config block. Morphology
//! vectors `d` are given in physical units, in the order of
//! [`TaskSpec::morphology_names`].

mod build;
mod episode;

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cage::{CageError, EnergyModel, MeeQuery};
use crate::collision::{is_separated, separation, Placed, CONTACT_TOLERANCE};
use crate::geom::{ConfigSE2, GeomError, ShapeGeom, Vec2};
use crate::rng::Rng;
use crate::world::{BodyState, Manipulator, Part, Twist, WorldConfig, WorldKind, WorldState};

pub use build::{aperture, make_manipulator, rim_height};
pub use episode::{Episode, StepOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("invalid morphology: {0}")]
    InvalidMorphology(&'static str),
    #[error("shape index {0} out of range")]
    InvalidShape(usize),
    #[error("no collision-free initial state after {0} attempts")]
    ResetFailed(usize),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Catch,
    VPush,
    UPush,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedShape {
    pub name: String,
    pub shape: ShapeGeom,
}

/// Closed disc in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalDisc {
    pub center: Vec2,
    pub radius: f64,
}

impl GoalDisc {
    pub fn contains(&self, p: Vec2) -> bool {
        (p - self.center).norm() <= self.radius
    }
}

/// Half-widths of the uniform ranges used by [`reset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetRanges {
    /// Object position: centre and per-axis half-width.
    pub object_center: Vec2,
    pub object_spread: Vec2,
    /// Manipulator offset from the object, in the manipulator frame.
    pub tool_offset: Vec2,
    pub tool_spread: Vec2,
    pub tool_heading_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    pub morphology_names: Vec<String>,
    pub morphology_bounds: Vec<(f64, f64)>,
    pub shapes: Vec<NamedShape>,
    /// Largest magnitude of each action component, in physical units.
    pub action_bounds: Vec<f64>,
    pub episode_length: usize,
    pub energy_model: EnergyModel,
    /// Escape energy that maps to a normalized score of 1.
    pub mee_reference: f64,
    /// Target region for pushing tasks; `None` for `Catch`.
    pub goal: Option<GoalDisc>,
    pub object_mass: f64,
    pub thickness: f64,
    /// Fixed arm length of the V tool.
    pub arm_length: f64,
    pub world: WorldConfig,
    pub reset: ResetRanges,
}

pub const RESET_ATTEMPTS: usize = 100;

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn named(name: &str, shape: Result<ShapeGeom, GeomError>) -> NamedShape {
    NamedShape {
        name: name.to_string(),
        shape: shape.expect("built-in shape"),
    }
}

impl TaskSpec {
    pub fn by_name(name: &str) -> Option<TaskSpec> {
        match name.to_ascii_lowercase().as_str() {
            "catch" => Some(Self::catch()),
            "vpush" => Some(Self::vpush()),
            "upush" | "panda-upush" => Some(Self::upush()),
            _ => None,
        }
    }

    pub fn catalog() -> Vec<TaskSpec> {
        vec![Self::catch(), Self::vpush(), Self::upush()]
    }

    /// Basket catching a falling object under gravity.
    pub fn catch() -> TaskSpec {
        let mass = 0.5;
        let g = 9.81;
        TaskSpec {
            name: "catch".to_string(),
            kind: TaskKind::Catch,
            morphology_names: names(&["l1", "l2", "l3", "alpha1", "alpha2"]),
            morphology_bounds: vec![
                (0.05, 0.3),
                (0.05, 0.3),
                (0.05, 0.3),
                (PI / 6.0, 5.0 * PI / 6.0),
                (PI / 6.0, 5.0 * PI / 6.0),
            ],
            shapes: vec![
                named("circle", ShapeGeom::circle(0.04)),
                named("square", ShapeGeom::rectangle(0.035, 0.035)),
            ],
            action_bounds: vec![0.6],
            episode_length: 200,
            energy_model: EnergyModel::Gravity { mass, g },
            // deepest basket: vertical 0.3 m walls
            mee_reference: mass * g * 0.3,
            goal: None,
            object_mass: mass,
            thickness: 0.01,
            arm_length: 0.0,
            world: WorldConfig {
                kind: WorldKind::Vertical,
                gravity: g,
                friction_mu: 0.5,
                dt: 0.02,
                disturbance_sigma: 0.0,
                substeps: 8,
                ..WorldConfig::default()
            },
            reset: ResetRanges {
                object_center: Vec2::new(0.0, 0.55),
                object_spread: Vec2::new(0.12, 0.05),
                tool_offset: Vec2::ZERO,
                tool_spread: Vec2::ZERO,
                tool_heading_spread: 0.0,
            },
        }
    }

    /// Symmetric V tool pushing an object into a goal disc.
    pub fn vpush() -> TaskSpec {
        let (mass, g, mu) = (1.0, 9.81, 0.5);
        TaskSpec {
            name: "vpush".to_string(),
            kind: TaskKind::VPush,
            morphology_names: names(&["alpha3"]),
            morphology_bounds: vec![(PI / 6.0, PI)],
            shapes: vec![
                named("circle", ShapeGeom::circle(0.04)),
                named("square", ShapeGeom::rectangle(0.03, 0.03)),
            ],
            action_bounds: vec![0.2, 0.2, 1.0],
            episode_length: 200,
            energy_model: EnergyModel::FrictionWork { mu, mass, g },
            mee_reference: mu * mass * g * VPUSH_REFERENCE_LENGTH,
            goal: Some(GoalDisc {
                center: Vec2::new(0.45, 0.0),
                radius: 0.06,
            }),
            object_mass: mass,
            thickness: 0.01,
            arm_length: 0.15,
            world: WorldConfig {
                kind: WorldKind::TopDown,
                gravity: g,
                friction_mu: mu,
                dt: 0.1,
                disturbance_sigma: 0.0,
                substeps: 6,
                ..WorldConfig::default()
            },
            reset: ResetRanges {
                object_center: Vec2::new(0.0, 0.0),
                object_spread: Vec2::new(0.05, 0.1),
                tool_offset: Vec2::new(-0.22, 0.0),
                tool_spread: Vec2::new(0.03, 0.04),
                tool_heading_spread: 0.3,
            },
        }
    }

    /// Planar U tool with five object shapes.
    pub fn upush() -> TaskSpec {
        let (mass, g, mu) = (1.0, 9.81, 0.5);
        let irregular = ShapeGeom::polygon(vec![
            Vec2::new(0.045, -0.01),
            Vec2::new(0.02, 0.035),
            Vec2::new(-0.03, 0.03),
            Vec2::new(-0.04, -0.015),
            Vec2::new(0.0, -0.04),
        ]);
        TaskSpec {
            name: "upush".to_string(),
            kind: TaskKind::UPush,
            morphology_names: names(&["alpha4", "alpha5", "l4", "l5"]),
            morphology_bounds: vec![(PI / 3.0, PI), (PI / 3.0, PI), (0.05, 0.2), (0.05, 0.2)],
            shapes: vec![
                named("circle", ShapeGeom::circle(0.04)),
                named("rectangle", ShapeGeom::rectangle(0.045, 0.025)),
                named("square", ShapeGeom::rectangle(0.03, 0.03)),
                named("oval", ShapeGeom::ellipse(0.05, 0.03, 16)),
                named("irregular", irregular),
            ],
            action_bounds: vec![0.2, 0.2, 1.0],
            episode_length: 200,
            energy_model: EnergyModel::FrictionWork { mu, mass, g },
            mee_reference: mu * mass * g * VPUSH_REFERENCE_LENGTH,
            goal: Some(GoalDisc {
                center: Vec2::new(0.45, 0.0),
                radius: 0.04,
            }),
            object_mass: mass,
            thickness: 0.01,
            arm_length: 0.0,
            world: WorldConfig {
                kind: WorldKind::TopDown,
                gravity: g,
                friction_mu: mu,
                dt: 0.1,
                disturbance_sigma: 0.0,
                substeps: 6,
                ..WorldConfig::default()
            },
            reset: ResetRanges {
                object_center: Vec2::new(0.0, 0.0),
                object_spread: Vec2::new(0.05, 0.1),
                tool_offset: Vec2::new(-0.25, 0.0),
                tool_spread: Vec2::new(0.03, 0.04),
                tool_heading_spread: 0.3,
            },
        }
    }

    pub fn morphology_dim(&self) -> usize {
        self.morphology_bounds.len()
    }

    pub fn action_dim(&self) -> usize {
        self.action_bounds.len()
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        if self.morphology_bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(TaskError::InvalidMorphology("bounds must satisfy lo < hi"));
        }
        if self.episode_length == 0 {
            return Err(TaskError::InvalidMorphology("episode length must be at least 1"));
        }
        if self.shapes.is_empty() {
            return Err(TaskError::InvalidShape(0));
        }
        for s in &self.shapes {
            s.shape.validate()?;
        }
        Ok(())
    }

    pub fn shape(&self, h: usize) -> Result<&ShapeGeom, TaskError> {
        self.shapes.get(h).map(|s| &s.shape).ok_or(TaskError::InvalidShape(h))
    }

    /// Maps `d` to `[0, 1]` per dimension.
    pub fn normalize(&self, d: &[f64]) -> Vec<f64> {
        d.iter()
            .zip(&self.morphology_bounds)
            .map(|(x, (lo, hi))| ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.morphology_bounds)
            .map(|(x, (lo, hi))| lo + x.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    pub fn in_bounds(&self, d: &[f64]) -> bool {
        d.len() == self.morphology_dim()
            && d.iter().zip(&self.morphology_bounds).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    /// Uniform morphology in bounds, redrawn until the linkage is valid.
    pub fn sample_morphology(&self, rng: &mut Rng) -> Result<Vec<f64>, TaskError> {
        for _ in 0..RESET_ATTEMPTS {
            let u: Vec<f64> = (0..self.morphology_dim()).map(|_| rng.random::<f64>()).collect();
            let d = self.denormalize(&u);
            if make_manipulator(self, &d).is_ok() {
                return Ok(d);
            }
        }
        Err(TaskError::InvalidMorphology("no valid morphology found by sampling"))
    }

    /// Observation length: object, tool and goal features plus `d` and the
    /// one-hot shape code.
    pub fn observation_dim(&self) -> usize {
        BASE_FEATURES + self.morphology_dim() + self.shapes.len()
    }
}

/// Escape length (m) behind the pushing tasks' reference energy: a disc held
/// at the apex of a V opened to 80° must slide this far to leave it.
pub const VPUSH_REFERENCE_LENGTH: f64 = 0.045;

const BASE_FEATURES: usize = 10;

/// Samples a collision-free initial state for `(d, h)`.
pub fn reset(spec: &TaskSpec, d: &[f64], h: usize, rng: &mut Rng) -> Result<WorldState, TaskError> {
    let parts = make_manipulator(spec, d)?;
    let shape = spec.shape(h)?.clone();
    let r = &spec.reset;
    let uniform = |c: f64, s: f64, rng: &mut Rng| c + s * (2.0 * rng.random::<f64>() - 1.0);
    for _ in 0..RESET_ATTEMPTS {
        let ox = uniform(r.object_center.x, r.object_spread.x, rng);
        let oy = uniform(r.object_center.y, r.object_spread.y, rng);
        let oth = rng.random::<f64>() * 2.0 * PI - PI;
        let heading = uniform(0.0, r.tool_heading_spread, rng);
        let off = Vec2::new(
            uniform(r.tool_offset.x, r.tool_spread.x, rng),
            uniform(r.tool_offset.y, r.tool_spread.y, rng),
        );
        let tool_pos = match spec.kind {
            TaskKind::Catch => Vec2::ZERO,
            _ => Vec2::new(ox, oy) + off.rotate(heading),
        };
        let state = WorldState {
            object: BodyState {
                pose: ConfigSE2::new(ox, oy, oth),
                velocity: Twist::default(),
                shape: shape.clone(),
                mass: spec.object_mass,
            },
            manipulator: Manipulator {
                pose: ConfigSE2::new(tool_pos.x, tool_pos.y, heading),
                velocity: Twist::default(),
                parts: parts.clone(),
            },
            time: 0.0,
        };
        let goal_clear = spec
            .goal
            .is_none_or(|g| (g.center - state.object.pose.translation()).norm() > g.radius + shape.circumradius());
        if goal_clear && object_is_free(&state, spec.world.contact_tolerance) {
            return Ok(state);
        }
    }
    Err(TaskError::ResetFailed(RESET_ATTEMPTS))
}

pub fn object_is_free(state: &WorldState, tol: f64) -> bool {
    let obj = Placed::new(&state.object.shape, &state.object.pose);
    state
        .manipulator
        .world_parts()
        .all(|(s, p)| is_separated(&Placed::new(s, &p), &obj, tol))
}

/// Point the object should reach: the goal centre, or the basket floor.
pub fn goal_point(spec: &TaskSpec, state: &WorldState) -> Vec2 {
    match spec.goal {
        Some(g) => g.center,
        None => state.manipulator.pose.transform_point(Vec2::new(0.0, state.object.shape.circumradius())),
    }
}

pub fn goal_distance(spec: &TaskSpec, state: &WorldState) -> f64 {
    (goal_point(spec, state) - state.object.pose.translation()).norm()
}

/// Vertical speed below which a caught object counts as at rest.
pub const REST_SPEED: f64 = 0.1;

pub fn success(spec: &TaskSpec, state: &WorldState) -> bool {
    let p = state.object.pose.translation();
    match spec.goal {
        Some(g) => g.contains(p),
        None => {
            let d = basket_params(&state.manipulator);
            let Some(poly) = d else { return false };
            let local = state.manipulator.pose.inverse_transform_point(p);
            point_in_polygon(local, &poly) && state.object.velocity.vy.abs() <= REST_SPEED
        }
    }
}

/// Interior outline of a basket in its own frame, recovered from the parts.
fn basket_params(m: &Manipulator) -> Option<[Vec2; 4]> {
    if m.parts.len() != 3 {
        return None;
    }
    let ends = |p: &Part| {
        let ShapeGeom::ConvexPolygon { vertices } = &p.shape else { return None };
        let half = vertices.iter().map(|v| v.x).fold(0.0, f64::max);
        let dir = Vec2::from_angle(p.local.theta);
        Some((p.local.translation() - dir * half, p.local.translation() + dir * half))
    };
    let (bl, ltip) = ends(&m.parts[1])?;
    let (br, rtip) = ends(&m.parts[2])?;
    Some([ltip, bl, br, rtip])
}

/// Even-odd test; points on an edge count as inside.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let e = b - a;
        let t = (p - a).dot(e) / e.norm_sq().max(1e-300);
        if (0.0..=1.0).contains(&t) && (a + e * t - p).norm() <= 1e-12 {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Escape-energy query for the current state: the manipulator frozen in place.
///
/// Resting contacts sit inside the planner's contact tolerance, so the start
/// is first pushed out along the contact normals to a small clearance.
pub fn mee_scene(spec: &TaskSpec, state: &WorldState) -> Result<MeeQuery, CageError> {
    let obstacles: Vec<(ShapeGeom, ConfigSE2)> = state
        .manipulator
        .world_parts()
        .map(|(s, p)| (s.clone(), p))
        .collect();
    let start = lift_out_of_contact(&state.object.shape, state.object.pose, &obstacles, 2.0 * CONTACT_TOLERANCE);
    let energy = match spec.energy_model {
        EnergyModel::Gravity { g, .. } => EnergyModel::Gravity {
            mass: state.object.mass,
            g,
        },
        EnergyModel::FrictionWork { mu, g, .. } => EnergyModel::FrictionWork {
            mu,
            mass: state.object.mass,
            g,
        },
    };
    let q = MeeQuery::new(state.object.shape.clone(), start, obstacles, energy);
    q.validate()?;
    Ok(q)
}

fn lift_out_of_contact(shape: &ShapeGeom, mut pose: ConfigSE2, obstacles: &[(ShapeGeom, ConfigSE2)], clearance: f64) -> ConfigSE2 {
    let placed: Vec<Placed> = obstacles.iter().map(|(s, p)| Placed::new(s, p)).collect();
    for _ in 0..8 {
        let obj = Placed::new(shape, &pose);
        let mut moved = false;
        for o in &placed {
            if is_separated(o, &obj, clearance) {
                continue;
            }
            let sep = separation(o, &obj);
            let push = sep.normal * (clearance - sep.distance + 1e-6);
            pose = ConfigSE2::new(pose.x + push.x, pose.y + push.y, pose.theta);
            moved = true;
        }
        if !moved {
            break;
        }
    }
    pose
}

/// Maps a normalized action in `[-1, 1]^n` to a world-frame manipulator twist.
///
/// Pushing tools are commanded in their own frame; the basket only moves
/// horizontally.
pub fn action_twist(spec: &TaskSpec, state: &WorldState, action: &[f64]) -> Twist {
    let a = |i: usize| action.get(i).copied().unwrap_or(0.0).clamp(-1.0, 1.0) * spec.action_bounds[i];
    match spec.kind {
        TaskKind::Catch => Twist::new(a(0), 0.0, 0.0),
        TaskKind::VPush | TaskKind::UPush => {
            let v = Vec2::new(a(0), a(1)).rotate(state.manipulator.pose.theta);
            Twist::new(v.x, v.y, a(2))
        }
    }
}

/// Policy input for the current state.
///
/// Layout: object position in the tool frame (2), object orientation in the
/// tool frame as cos/sin (2), target in the tool frame (2), target relative to
/// the object in the tool frame (2), object velocity in the tool frame (2),
/// then normalized `d` and the one-hot shape code.
pub fn observe(spec: &TaskSpec, d: &[f64], h: usize, state: &WorldState) -> Vec<f64> {
    let tool = &state.manipulator.pose;
    let obj = &state.object.pose;
    let rel = tool.inverse_transform_point(obj.translation());
    let rth = obj.theta - tool.theta;
    let target = goal_point(spec, state);
    let t_rel = tool.inverse_transform_point(target);
    let to_goal = (target - obj.translation()).rotate(-tool.theta);
    let v = state.object.velocity.linear().rotate(-tool.theta);
    let mut o = Vec::with_capacity(spec.observation_dim());
    o.extend_from_slice(&[
        rel.x * 5.0,
        rel.y * 5.0,
        rth.cos(),
        rth.sin(),
        t_rel.x * 2.0,
        t_rel.y * 2.0,
        to_goal.x * 2.0,
        to_goal.y * 2.0,
        v.x,
        v.y,
    ]);
    o.extend(spec.normalize(d));
    o.extend((0..spec.shapes.len()).map(|i| if i == h { 1.0 } else { 0.0 }));
    o
}
