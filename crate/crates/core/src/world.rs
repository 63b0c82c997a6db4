//! Deterministic planar world: a kinematic manipulator made of convex parts
//! and one free object.
//!
//! The object model is quasi-static. Contacts push the object out of
//! penetration along the contact normal and drag it tangentially within the
//! friction cone. In a [`WorldKind::TopDown`] world (no in-plane gravity, the
//! object slides on a support surface) the object velocity is reset at the
//! end of every step. In a [`WorldKind::Vertical`] world gravity acts along
//! −y, the object keeps its velocity in free flight, and contacts remove the
//! approaching normal velocity.
//!
//! A disturbance force is drawn once per control step and applied to the
//! object's centre of mass as the impulse `F·dt`.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{separation, Placed, CONTACT_TOLERANCE};
use crate::geom::{wrap_angle, ConfigSE2, ShapeGeom, Vec2};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("invalid world configuration: {0}")]
    Config(&'static str),
    #[error("simulation diverged (non-finite state)")]
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    /// Gravity acts in the plane along −y.
    Vertical,
    /// Gravity is normal to the plane; objects slide on a support surface.
    TopDown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub kind: WorldKind,
    /// Magnitude in m/s². In a vertical world it acts along −y; in a
    /// top-down world it only sets the support normal force.
    pub gravity: f64,
    pub friction_mu: f64,
    pub dt: f64,
    /// Standard deviation of the per-axis disturbance force, in Newtons.
    pub disturbance_sigma: f64,
    pub substeps: u32,
    pub contact_tolerance: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            kind: WorldKind::TopDown,
            gravity: 9.81,
            friction_mu: 0.5,
            dt: 0.05,
            disturbance_sigma: 0.0,
            substeps: 4,
            contact_tolerance: CONTACT_TOLERANCE,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return Err(WorldError::Config("dt must lie in (0, 0.1]"));
        }
        if self.substeps < 1 {
            return Err(WorldError::Config("substeps must be at least 1"));
        }
        if !(self.friction_mu >= 0.0 && self.friction_mu.is_finite()) {
            return Err(WorldError::Config("friction_mu must be non-negative"));
        }
        if !(self.gravity >= 0.0 && self.gravity.is_finite()) {
            return Err(WorldError::Config("gravity must be non-negative"));
        }
        if !(self.disturbance_sigma >= 0.0 && self.disturbance_sigma.is_finite()) {
            return Err(WorldError::Config("disturbance_sigma must be non-negative"));
        }
        if !(self.contact_tolerance > 0.0) {
            return Err(WorldError::Config("contact_tolerance must be positive"));
        }
        Ok(())
    }
}

/// Planar twist `(vx, vy, ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl Twist {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub pose: ConfigSE2,
    pub velocity: Twist,
    pub shape: ShapeGeom,
    pub mass: f64,
}

/// One rigid part of the manipulator, posed in the manipulator frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub shape: ShapeGeom,
    pub local: ConfigSE2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manipulator {
    pub pose: ConfigSE2,
    pub velocity: Twist,
    pub parts: Vec<Part>,
}

impl Manipulator {
    pub fn world_parts(&self) -> impl Iterator<Item = (&ShapeGeom, ConfigSE2)> + '_ {
        self.parts.iter().map(|p| (&p.shape, self.pose.compose(&p.local)))
    }

    fn placed(&self) -> Vec<Placed> {
        self.world_parts().map(|(s, p)| Placed::new(s, &p)).collect()
    }

    /// Velocity of the manipulator material point at `p`.
    fn point_velocity(&self, p: Vec2) -> Vec2 {
        let r = p - self.pose.translation();
        self.velocity.linear() + r.perp() * self.velocity.omega
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub object: BodyState,
    pub manipulator: Manipulator,
    pub time: f64,
}

impl WorldState {
    pub fn is_finite(&self) -> bool {
        self.object.pose.is_finite()
            && self.object.velocity.is_finite()
            && self.manipulator.pose.is_finite()
            && self.manipulator.velocity.is_finite()
            && self.time.is_finite()
    }

    /// Deepest current penetration between the object and any manipulator part.
    pub fn max_penetration(&self) -> f64 {
        let obj = Placed::new(&self.object.shape, &self.object.pose);
        self.manipulator
            .placed()
            .iter()
            .map(|p| (-separation(p, &obj).distance).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Draws a disturbance force with i.i.d. `N(0, sigma²)` components.
///
/// Always consumes two normals from the stream, so runs with different
/// `sigma` stay aligned on the same seed.
pub fn sample_disturbance(sigma: f64, rng: &mut Rng) -> Result<Vec2, WorldError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(WorldError::Config("disturbance sigma must be non-negative"));
    }
    let zx: f64 = StandardNormal.sample(rng);
    let zy: f64 = StandardNormal.sample(rng);
    if sigma == 0.0 {
        return Ok(Vec2::ZERO);
    }
    Ok(Vec2::new(sigma * zx, sigma * zy))
}

const RESOLVE_PASSES: usize = 8;
const FINAL_PASSES: usize = 64;
const MAX_SPIN_PER_PASS: f64 = 0.1;

/// Advances the world by one control step of `config.dt`.
///
/// The manipulator follows `action` (world-frame twist) kinematically.
pub fn step(
    config: &WorldConfig,
    state: &WorldState,
    action: Twist,
    rng: &mut Rng,
) -> Result<WorldState, WorldError> {
    config.validate()?;
    if !state.is_finite() || !action.is_finite() {
        return Err(WorldError::Diverged);
    }
    let dt = config.dt;
    let force = sample_disturbance(config.disturbance_sigma, rng)?;
    let mut next = state.clone();
    next.manipulator.velocity = action;
    let obj = &mut next.object;
    let impulse_dv = force * (dt / obj.mass);

    // object displacement over the whole step, before contacts
    let (displacement, mut velocity) = match config.kind {
        WorldKind::Vertical => {
            let v0 = obj.velocity.linear() + impulse_dv;
            let g = Vec2::new(0.0, -config.gravity);
            (v0 * dt + g * (0.5 * dt * dt), v0 + g * dt)
        }
        WorldKind::TopDown => (impulse_dv * dt, Vec2::ZERO),
    };

    let n_sub = config.substeps as usize;
    let h = 1.0 / n_sub as f64;
    for _ in 0..n_sub {
        let mp = &mut next.manipulator.pose;
        *mp = ConfigSE2::new(
            mp.x + action.vx * dt * h,
            mp.y + action.vy * dt * h,
            mp.theta + action.omega * dt * h,
        );
        let op = &mut next.object.pose;
        *op = ConfigSE2::new(op.x + displacement.x * h, op.y + displacement.y * h, op.theta);
        resolve_contacts(config, &mut next, &mut velocity, dt * h, RESOLVE_PASSES);
    }
    resolve_contacts(config, &mut next, &mut velocity, dt * h, FINAL_PASSES);

    next.object.velocity = match config.kind {
        WorldKind::Vertical => Twist::new(velocity.x, velocity.y, 0.0),
        WorldKind::TopDown => Twist::default(),
    };
    next.time = state.time + dt;
    if !next.is_finite() {
        return Err(WorldError::Diverged);
    }
    Ok(next)
}

/// Position projection of the object out of every part.
///
/// Each pass runs one Gauss–Seidel sweep over the parts in forward order and
/// one in reverse order from the same starting pose and averages the two, so
/// the result does not depend on the order the parts are listed in.
fn resolve_contacts(
    config: &WorldConfig,
    state: &mut WorldState,
    velocity: &mut Vec2,
    sub_dt: f64,
    passes: usize,
) {
    let parts = state.manipulator.placed();
    // contacts count as resolved a little inside the tolerance band
    let target = 0.5 * config.contact_tolerance;
    for _ in 0..passes {
        let (fwd_pose, fwd_vel, fwd_worst) = sweep(config, state, *velocity, sub_dt, parts.iter());
        if fwd_worst == 0.0 {
            break;
        }
        let (bwd_pose, bwd_vel, bwd_worst) = sweep(config, state, *velocity, sub_dt, parts.iter().rev());
        let pose = &mut state.object.pose;
        *pose = ConfigSE2::new(
            0.5 * (fwd_pose.x + bwd_pose.x),
            0.5 * (fwd_pose.y + bwd_pose.y),
            pose.theta + 0.5 * (wrap_angle(fwd_pose.theta - pose.theta) + wrap_angle(bwd_pose.theta - pose.theta)),
        );
        *velocity = (fwd_vel + bwd_vel) * 0.5;
        if fwd_worst.max(bwd_worst) <= target {
            break;
        }
    }
}

/// One Gauss–Seidel sweep; returns the new pose, velocity and the deepest
/// penetration met.
fn sweep<'a>(
    config: &WorldConfig,
    state: &WorldState,
    mut velocity: Vec2,
    sub_dt: f64,
    parts: impl Iterator<Item = &'a Placed>,
) -> (ConfigSE2, Vec2, f64) {
    let shape = &state.object.shape;
    let gyration = shape.radius_of_gyration().max(1e-6);
    let spins = !shape.is_rotationally_symmetric();
    let mut pose = state.object.pose;
    // unwrapped orientation so the averaged result never straddles ±π
    let mut theta = pose.theta;
    let mut worst = 0.0f64;
    for part in parts {
        let obj = Placed::new(shape, &pose);
        let sep = separation(part, &obj);
        if sep.distance >= 0.0 {
            continue;
        }
        let pen = -sep.distance;
        worst = worst.max(pen);
        let n = sep.normal;
        let mut push = n * pen;

        // tangential drag from the moving part, bounded by the friction cone
        let wall_v = state.manipulator.point_velocity(sep.point);
        let wall_t = wall_v - n * wall_v.dot(n);
        let wall_t_disp = wall_t * sub_dt;
        let t_len = wall_t_disp.norm();
        if t_len > 0.0 {
            let allowed = config.friction_mu * pen;
            push += wall_t_disp * (t_len.min(allowed) / t_len);
        }

        if spins {
            let r = sep.point - pose.translation();
            theta += (r.cross(n * pen) / (gyration * gyration)).clamp(-MAX_SPIN_PER_PASS, MAX_SPIN_PER_PASS);
        }
        pose = ConfigSE2 {
            x: pose.x + push.x,
            y: pose.y + push.y,
            theta,
        };

        if config.kind == WorldKind::Vertical {
            let rel = velocity - wall_v;
            let vn = rel.dot(n);
            if vn < 0.0 {
                // inelastic normal response plus Coulomb damping of the slip
                velocity -= n * vn;
                let rel = velocity - wall_v;
                let vt = rel - n * rel.dot(n);
                let vt_len = vt.norm();
                if vt_len > 0.0 {
                    let cut = (config.friction_mu * (-vn)).min(vt_len);
                    velocity -= vt * (cut / vt_len);
                }
            }
        }
    }
    (ConfigSE2::new(pose.x, pose.y, theta), velocity, worst)
}
