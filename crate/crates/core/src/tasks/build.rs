//! Manipulator geometry for each task.

use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{TaskError, TaskKind, TaskSpec};
use crate::collision::{separation, Placed};
use crate::geom::{ShapeGeom, Vec2};
use crate::world::Part;

fn bar(a: Vec2, b: Vec2, thickness: f64) -> Result<Part, TaskError> {
    let (shape, local) = ShapeGeom::segment(a, b, thickness)?;
    Ok(Part { shape, local })
}

fn gap(a: &Part, b: &Part) -> f64 {
    separation(&Placed::new(&a.shape, &a.local), &Placed::new(&b.shape, &b.local)).distance
}

/// Segment endpoints `(a, b)` of every part, in the manipulator frame.
fn centerlines(spec: &TaskSpec, d: &[f64]) -> Result<Vec<(Vec2, Vec2)>, TaskError> {
    if !spec.in_bounds(d) {
        return Err(TaskError::InvalidMorphology("d outside the morphology bounds"));
    }
    Ok(match spec.kind {
        TaskKind::Catch => {
            // floor surface on y = 0 between the arm roots (±l2/2, 0); arms
            // rise at α measured from the outward horizontal
            let (l1, l2, l3, a1, a2) = (d[0], d[1], d[2], d[3], d[4]);
            let bl = Vec2::new(-0.5 * l2, 0.0);
            let br = Vec2::new(0.5 * l2, 0.0);
            let half_t = 0.5 * spec.thickness;
            alloc::vec![
                (Vec2::new(bl.x - half_t, -half_t), Vec2::new(br.x + half_t, -half_t)),
                (bl, bl + Vec2::new(-a1.cos(), a1.sin()) * l1),
                (br, br + Vec2::new(a2.cos(), a2.sin()) * l3),
            ]
        }
        TaskKind::VPush => {
            // arms leave the apex at ±α3/2 about the pushing direction +x
            let half = 0.5 * d[0];
            let l = spec.arm_length;
            alloc::vec![
                (Vec2::ZERO, Vec2::from_angle(half) * l),
                (Vec2::ZERO, Vec2::from_angle(-half) * l),
            ]
        }
        TaskKind::UPush => {
            // base along y facing +x; α is the angle between the base and an arm
            let (a4, a5, l4, l5) = (d[0], d[1], d[2], d[3]);
            let top = Vec2::new(0.0, 0.5 * l4);
            let bottom = Vec2::new(0.0, -0.5 * l4);
            alloc::vec![
                (top, bottom),
                (top, top + Vec2::new(a4.sin(), -a4.cos()) * l5),
                (bottom, bottom + Vec2::new(a5.sin(), a5.cos()) * l5),
            ]
        }
    })
}

/// Thin-rectangle parts of the manipulator for morphology `d`.
///
/// Fails when `d` is out of bounds or when two non-adjacent links touch (or a
/// U tool closes).
pub fn make_manipulator(spec: &TaskSpec, d: &[f64]) -> Result<Vec<Part>, TaskError> {
    let lines = centerlines(spec, d)?;
    let t = spec.thickness;
    let parts = lines
        .iter()
        .map(|(a, b)| bar(*a, *b, t))
        .collect::<Result<Vec<_>, _>>()?;
    match spec.kind {
        TaskKind::Catch => {
            if gap(&parts[1], &parts[2]) <= 0.0 {
                return Err(TaskError::InvalidMorphology("basket arms intersect"));
            }
        }
        TaskKind::VPush => {
            if !(d[0] > 0.0 && d[0] <= PI) {
                return Err(TaskError::InvalidMorphology("opening angle must lie in (0, π]"));
            }
        }
        TaskKind::UPush => {
            if gap(&parts[1], &parts[2]) <= 0.0 {
                return Err(TaskError::InvalidMorphology("U tool is closed"));
            }
        }
    }
    Ok(parts)
}

/// Height of the lower basket rim above the basket floor (`Catch` only).
pub fn rim_height(spec: &TaskSpec, d: &[f64]) -> Result<f64, TaskError> {
    if spec.kind != TaskKind::Catch {
        return Err(TaskError::InvalidMorphology("rim height is defined for the basket only"));
    }
    let lines = centerlines(spec, d)?;
    Ok(lines[1].1.y.min(lines[2].1.y))
}

/// Clear width between the two arms of a U tool (`UPush` only).
pub fn aperture(spec: &TaskSpec, d: &[f64]) -> Result<f64, TaskError> {
    if spec.kind != TaskKind::UPush {
        return Err(TaskError::InvalidMorphology("aperture is defined for the U tool only"));
    }
    let lines = centerlines(spec, d)?;
    let t = spec.thickness;
    Ok(gap(&bar(lines[1].0, lines[1].1, t)?, &bar(lines[2].0, lines[2].1, t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng as _;

    #[test]
    fn flat_bar_at_full_opening() {
        let spec = TaskSpec::vpush();
        let parts = make_manipulator(&spec, &[PI]).unwrap();
        let dirs: Vec<Vec2> = parts.iter().map(|p| Vec2::from_angle(p.local.theta)).collect();
        // both arms lie on the y axis
        assert!(dirs[0].x.abs() < 1e-12 && dirs[1].x.abs() < 1e-12);
        assert!((parts[0].local.y + parts[1].local.y).abs() < 1e-12);
    }

    #[test]
    fn symmetric_basket_rim_is_arm_length() {
        let spec = TaskSpec::catch();
        let d = [0.2, 0.15, 0.2, PI / 2.0, PI / 2.0];
        assert!((rim_height(&spec, &d).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(make_manipulator(&spec, &d).unwrap().len(), 3);
    }

    #[test]
    fn crossing_basket_arms_are_rejected() {
        let spec = TaskSpec::catch();
        let d = [0.3, 0.05, 0.3, 5.0 * PI / 6.0, 5.0 * PI / 6.0];
        assert!(matches!(make_manipulator(&spec, &d), Err(TaskError::InvalidMorphology(_))));
    }

    #[test]
    fn out_of_bounds_is_rejected() {
        let spec = TaskSpec::vpush();
        assert!(make_manipulator(&spec, &[0.1]).is_err());
    }

    /// Symmetric U with inward or upright arms: the gap is between the inner
    /// tip corners, `l4 − 2·l5·cos α − t·sin α`.
    #[test]
    fn u_aperture_matches_tip_geometry() {
        let spec = TaskSpec::upush();
        let mut rng = rng_from_seed(11);
        let mut checked = 0;
        while checked < 20 {
            let a = PI / 3.0 + rng.random::<f64>() * (PI / 2.0 - PI / 3.0);
            let l4 = 0.05 + rng.random::<f64>() * 0.15;
            let l5 = 0.05 + rng.random::<f64>() * 0.15;
            let expected = l4 - 2.0 * l5 * a.cos() - spec.thickness * a.sin();
            let d = [a, a, l4, l5];
            if expected <= 1e-3 {
                assert!(make_manipulator(&spec, &d).is_err());
                continue;
            }
            let got = aperture(&spec, &d).unwrap();
            assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
            checked += 1;
        }
    }
}
