//! Curved obstacle templates for the `C` family.
//!
//! Each template is a star-shaped region given by its boundary radius as a
//! function of angle, in units of the obstacle's nominal diameter (so the
//! shape fits in a disc of radius 0.5).

use std::f64::consts::PI;

use crate::physics::BoardSpec;
use crate::Vec2;

pub const TEMPLATE_COUNT: usize = 4;

/// Boundary radius of template `id` at angle `theta`, or `None` for unknown ids.
pub fn template_radius(id: usize, theta: f64) -> Option<f64> {
    let r = match id {
        // trefoil
        0 => 0.72 + 0.28 * (3.0 * theta).cos(),
        // peanut
        1 => 0.65 + 0.35 * (2.0 * theta).cos(),
        // egg
        2 => 0.8 + 0.2 * theta.cos(),
        // lumpy kidney
        3 => 0.6 + 0.25 * (2.0 * theta).cos() + 0.15 * (3.0 * theta).sin(),
        _ => return None,
    };
    Some(0.5 * r)
}

/// Board cells covered by template `id` with the given nominal diameter,
/// centre and rotation.
pub fn rasterize_template(id: usize, diameter: f64, center: Vec2, angle: f64, board: &BoardSpec) -> Vec<bool> {
    (0..board.cells())
        .map(|i| {
            let p = Vec2::new((i % board.width) as f64, (i / board.width) as f64);
            let l = (p - center).rotated(-angle);
            let rho = l.norm();
            if rho > 0.5 * diameter {
                return false;
            }
            let theta = l.y.atan2(l.x).rem_euclid(2.0 * PI);
            rho <= diameter * template_radius(id, theta).unwrap_or(0.0)
        })
        .collect()
}
