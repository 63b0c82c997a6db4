//! Planar geometry: vectors, SE(2) poses and convex shapes.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("invalid shape: {0}")]
    InvalidShape(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-15).then(|| self * (1.0 / n))
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    if (-PI..PI).contains(&theta) {
        return theta;
    }
    let w = theta - TAU * ((theta + PI) / TAU).floor();
    // floor can land exactly on the upper edge through rounding
    if w >= PI {
        w - TAU
    } else {
        w
    }
}

/// A planar pose `(x, y, θ)` with `θ` kept in `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfigSE2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl ConfigSE2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a point from the local frame into the world frame.
    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        p.rotate(self.theta) + self.translation()
    }

    /// Maps a world point into the local frame.
    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        (p - self.translation()).rotate(-self.theta)
    }

    /// `self ∘ local`: places a pose given in this frame into the world.
    pub fn compose(&self, local: &ConfigSE2) -> ConfigSE2 {
        let t = self.transform_point(local.translation());
        ConfigSE2::new(t.x, t.y, self.theta + local.theta)
    }

    /// Euclidean distance on `(x, y)` plus `theta_weight · |Δθ|`, with
    /// `Δθ` taken the short way around the circle.
    pub fn distance(&self, o: &ConfigSE2, theta_weight: f64) -> f64 {
        let dxy = (self.translation() - o.translation()).norm();
        dxy + theta_weight * wrap_angle(o.theta - self.theta).abs()
    }

    /// Interpolates along the short angular arc.
    pub fn lerp(&self, o: &ConfigSE2, t: f64) -> ConfigSE2 {
        let dth = wrap_angle(o.theta - self.theta);
        ConfigSE2::new(
            self.x + (o.x - self.x) * t,
            self.y + (o.y - self.y) * t,
            self.theta + dth * t,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// A convex planar shape in its local frame, origin at the centroid.
///
/// Polygons are validated on construction and on deserialization: at least
/// three vertices, counter-clockwise, strictly convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShape", into = "RawShape")]
pub enum ShapeGeom {
    Circle { radius: f64 },
    ConvexPolygon { vertices: Vec<Vec2> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawShape {
    Circle { radius: f64 },
    ConvexPolygon { vertices: Vec<Vec2> },
}

impl TryFrom<RawShape> for ShapeGeom {
    type Error = GeomError;
    fn try_from(raw: RawShape) -> Result<Self, GeomError> {
        match raw {
            RawShape::Circle { radius } => ShapeGeom::circle(radius),
            RawShape::ConvexPolygon { vertices } => ShapeGeom::polygon(vertices),
        }
    }
}

impl From<ShapeGeom> for RawShape {
    fn from(s: ShapeGeom) -> RawShape {
        match s {
            ShapeGeom::Circle { radius } => RawShape::Circle { radius },
            ShapeGeom::ConvexPolygon { vertices } => RawShape::ConvexPolygon { vertices },
        }
    }
}

impl ShapeGeom {
    pub fn circle(radius: f64) -> Result<Self, GeomError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeomError::InvalidShape("circle radius must be positive"));
        }
        Ok(ShapeGeom::Circle { radius })
    }

    pub fn polygon(vertices: Vec<Vec2>) -> Result<Self, GeomError> {
        validate_polygon(&vertices)?;
        Ok(ShapeGeom::ConvexPolygon { vertices })
    }

    /// Axis-aligned rectangle centred on the origin.
    pub fn rectangle(half_width: f64, half_height: f64) -> Result<Self, GeomError> {
        Self::polygon(alloc::vec![
            Vec2::new(-half_width, -half_height),
            Vec2::new(half_width, -half_height),
            Vec2::new(half_width, half_height),
            Vec2::new(-half_width, half_height),
        ])
    }

    /// Thin rectangle whose centerline runs from `a` to `b` (in the frame the
    /// returned pose is expressed in).
    pub fn segment(a: Vec2, b: Vec2, thickness: f64) -> Result<(Self, ConfigSE2), GeomError> {
        let d = b - a;
        let len = d.norm();
        if len <= 0.0 {
            return Err(GeomError::InvalidShape("segment has zero length"));
        }
        let mid = (a + b) * 0.5;
        let theta = d.y.atan2(d.x);
        let shape = Self::rectangle(0.5 * len, 0.5 * thickness)?;
        Ok((shape, ConfigSE2::new(mid.x, mid.y, theta)))
    }

    /// Regular `n`-gon with the given circumradius, first vertex at angle `phase`.
    pub fn regular(n: usize, circumradius: f64, phase: f64) -> Result<Self, GeomError> {
        if n < 3 {
            return Err(GeomError::InvalidShape("regular polygon needs n >= 3"));
        }
        let verts = (0..n)
            .map(|i| Vec2::from_angle(phase + TAU * i as f64 / n as f64) * circumradius)
            .collect();
        Self::polygon(verts)
    }

    /// Convex polygon approximation of an ellipse with semi-axes `(a, b)`.
    pub fn ellipse(a: f64, b: f64, n: usize) -> Result<Self, GeomError> {
        if n < 3 {
            return Err(GeomError::InvalidShape("ellipse needs n >= 3"));
        }
        let verts = (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                Vec2::new(a * t.cos(), b * t.sin())
            })
            .collect();
        Self::polygon(verts)
    }

    pub fn circumradius(&self) -> f64 {
        match self {
            ShapeGeom::Circle { radius } => *radius,
            ShapeGeom::ConvexPolygon { vertices } => {
                vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
            }
        }
    }

    /// Radius of gyration about the origin, treating the shape as a uniform lamina.
    pub fn radius_of_gyration(&self) -> f64 {
        match self {
            ShapeGeom::Circle { radius } => radius / core::f64::consts::SQRT_2,
            ShapeGeom::ConvexPolygon { vertices } => {
                // fan triangulation about the origin
                let n = vertices.len();
                let mut area = 0.0;
                let mut second = 0.0;
                for i in 0..n {
                    let a = vertices[i];
                    let b = vertices[(i + 1) % n];
                    let c = a.cross(b);
                    area += 0.5 * c;
                    second += c * (a.dot(a) + a.dot(b) + b.dot(b)) / 12.0;
                }
                if area > 0.0 {
                    (second / area).sqrt()
                } else {
                    self.circumradius()
                }
            }
        }
    }

    /// Circles are invariant under rotation about their centre.
    pub fn is_rotationally_symmetric(&self) -> bool {
        matches!(self, ShapeGeom::Circle { .. })
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        match self {
            ShapeGeom::Circle { radius } => {
                if radius.is_finite() && *radius > 0.0 {
                    Ok(())
                } else {
                    Err(GeomError::InvalidShape("circle radius must be positive"))
                }
            }
            ShapeGeom::ConvexPolygon { vertices } => validate_polygon(vertices),
        }
    }

    /// Lowest point of the shape placed at `pose`, as a y coordinate.
    pub fn min_y(&self, pose: &ConfigSE2) -> f64 {
        match self {
            ShapeGeom::Circle { radius } => pose.y - radius,
            ShapeGeom::ConvexPolygon { vertices } => vertices
                .iter()
                .map(|v| pose.transform_point(*v).y)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// World-space axis-aligned bounding box at `pose`.
    pub fn aabb(&self, pose: &ConfigSE2) -> Aabb {
        match self {
            ShapeGeom::Circle { radius } => Aabb::new(
                Vec2::new(pose.x - radius, pose.y - radius),
                Vec2::new(pose.x + radius, pose.y + radius),
            ),
            ShapeGeom::ConvexPolygon { vertices } => {
                let mut b = Aabb::empty();
                for v in vertices {
                    b.include(pose.transform_point(*v));
                }
                b
            }
        }
    }
}

/// Convex hull (counter-clockwise, collinear points dropped) by the
/// monotone-chain method. Fewer than three distinct points give a degenerate
/// hull with no interior.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: &mut dyn Iterator<Item = &Vec2> = if pass == 0 { &mut pts.iter() } else { &mut pts.iter().rev() };
        for &p in iter {
            while hull.len() >= start + 2 {
                let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                if (b - a).cross(p - b) > 0.0 {
                    break;
                }
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// True when `p` lies strictly inside the convex CCW polygon `hull`.
pub fn strictly_inside_convex(p: Vec2, hull: &[Vec2]) -> bool {
    let n = hull.len();
    n >= 3 && (0..n).all(|i| (hull[(i + 1) % n] - hull[i]).cross(p - hull[i]) > 0.0)
}

fn validate_polygon(vertices: &[Vec2]) -> Result<(), GeomError> {
    let n = vertices.len();
    if n < 3 {
        return Err(GeomError::InvalidShape("polygon needs at least 3 vertices"));
    }
    if vertices.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::InvalidShape("polygon has non-finite vertex"));
    }
    let scale = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-12);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let c = vertices[(i + 2) % n];
        let turn = (b - a).cross(c - b);
        if turn <= 1e-12 * scale * scale {
            return Err(GeomError::InvalidShape(
                "polygon must be strictly convex and counter-clockwise",
            ));
        }
    }
    // a star polygon turns left at every vertex yet winds more than once
    let mut winding = 0.0;
    for i in 0..n {
        let e0 = vertices[(i + 1) % n] - vertices[i];
        let e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
        winding += e0.cross(e1).atan2(e0.dot(e1));
    }
    if (winding - TAU).abs() > 1e-6 {
        return Err(GeomError::InvalidShape("polygon winds more than once"));
    }
    Ok(())
}

/// Axis-aligned box in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Vec2::new(f64::INFINITY, f64::INFINITY),
            max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn include(&mut self, p: Vec2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        let mut b = *self;
        b.include(o.min);
        b.include(o.max);
        b
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb::new(
            Vec2::new(self.min.x - r, self.min.y - r),
            Vec2::new(self.max.x + r, self.max.y + r),
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}
