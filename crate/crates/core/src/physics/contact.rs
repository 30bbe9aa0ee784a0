//! Time of first contact for a disc moving on a straight line.
//!
//! Every function returns the earliest `t` in `[0, horizon]` at which the
//! moving disc touches the target while approaching it, together with the
//! contact normal pointing from the target towards the disc.

use super::types::{BoardSpec, MaskShape};
use crate::geometry::Vec2;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Contact {
    pub time: f64,
    pub normal: Vec2,
}

/// Penetration depth (px) still treated as touching rather than embedded.
const EMBED_SLACK: f64 = 1e-3;

fn accept(time: f64, horizon: f64, normal: Vec2) -> Option<Contact> {
    (time <= horizon).then_some(Contact {
        time: time.max(0.0),
        normal,
    })
}

fn earliest(a: Option<Contact>, b: Option<Contact>) -> Option<Contact> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if y.time < x.time { y } else { x }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Contact with the interior faces of the perimeter walls.
pub(crate) fn wall(board: &BoardSpec, p: Vec2, v: Vec2, radius: f64, horizon: f64) -> Option<Contact> {
    let lo = board.interior_min();
    let hi = board.interior_max();
    let mut best = None;
    if v.x < 0.0 {
        let t = (p.x - (lo.x + radius)) / -v.x;
        best = earliest(best, accept(t, horizon, Vec2::new(1.0, 0.0)));
    } else if v.x > 0.0 {
        let t = ((hi.x - radius) - p.x) / v.x;
        best = earliest(best, accept(t, horizon, Vec2::new(-1.0, 0.0)));
    }
    if v.y < 0.0 {
        let t = (p.y - (lo.y + radius)) / -v.y;
        best = earliest(best, accept(t, horizon, Vec2::new(0.0, 1.0)));
    } else if v.y > 0.0 {
        let t = ((hi.y - radius) - p.y) / v.y;
        best = earliest(best, accept(t, horizon, Vec2::new(0.0, -1.0)));
    }
    best
}

/// Earliest approaching contact of a moving point with a static circle.
fn circle(p: Vec2, v: Vec2, centre: Vec2, radius: f64) -> Option<(f64, Vec2)> {
    let d = p - centre;
    let b = d.dot(v);
    if b >= 0.0 {
        return None;
    }
    let a = v.norm_sq();
    let c = d.norm_sq() - radius * radius;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    // c / (-b + sqrt(disc)) is the smaller root without cancellation.
    let t = c / (-b + disc.sqrt());
    if t < -EMBED_SLACK * 10.0 {
        return None;
    }
    let hit = p + v * t.max(0.0);
    Some((t, (hit - centre) * (1.0 / radius)))
}

/// Contact with a rectangle rotated by `angle`; solved in its local frame
/// against the rounded rectangle swept by the disc.
pub(crate) fn rect(
    centre: Vec2,
    half: Vec2,
    angle: f64,
    p: Vec2,
    v: Vec2,
    radius: f64,
    horizon: f64,
) -> Option<Contact> {
    let lp = (p - centre).rotated(-angle);
    let lv = v.rotated(-angle);
    let mut best: Option<Contact> = None;

    // Faces: x = +-(hx + r) valid for |y| <= hy, and likewise for y.
    for axis in 0..2 {
        let (pa, va, pb, vb, ha, hb) = if axis == 0 {
            (lp.x, lv.x, lp.y, lv.y, half.x, half.y)
        } else {
            (lp.y, lv.y, lp.x, lv.x, half.y, half.x)
        };
        for side in [1.0f64, -1.0] {
            // Approaching means moving against the outward normal.
            if va * side >= 0.0 {
                continue;
            }
            let gap = side * pa - (ha + radius);
            if gap < -radius {
                continue;
            }
            let t = gap / -(va * side);
            let along = pb + vb * t.max(0.0);
            if along.abs() > hb {
                continue;
            }
            let n = if axis == 0 {
                Vec2::new(side, 0.0)
            } else {
                Vec2::new(0.0, side)
            };
            best = earliest(best, accept(t, horizon, n));
        }
    }

    for (sx, sy) in [(1.0f64, 1.0f64), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
        let corner = Vec2::new(sx * half.x, sy * half.y);
        if let Some((t, n)) = circle(lp, lv, corner, radius) {
            // Only the quarter arc facing away from the rectangle belongs to the boundary.
            if n.x * sx < -1e-12 || n.y * sy < -1e-12 {
                continue;
            }
            best = earliest(best, accept(t, horizon, n));
        }
    }

    best.map(|c| Contact {
        time: c.time,
        normal: c.normal.rotated(angle),
    })
}

/// Contact between two moving discs; the normal points from `b` to `a`.
pub(crate) fn ball_pair(
    pa: Vec2,
    va: Vec2,
    ra: f64,
    pb: Vec2,
    vb: Vec2,
    rb: f64,
    horizon: f64,
) -> Option<Contact> {
    let (t, _) = circle(pa - pb, va - vb, Vec2::ZERO, ra + rb)?;
    let t = t.max(0.0);
    let d = (pa + va * t) - (pb + vb * t);
    let n = d.normalized()?;
    accept(t, horizon, n)
}

/// Contact with a curved obstacle, found by marching the interpolated
/// distance field in quarter-pixel steps and refining by bisection.
pub(crate) fn mask(shape: &MaskShape, p: Vec2, v: Vec2, radius: f64, horizon: f64) -> Option<Contact> {
    let speed = v.norm();
    if speed == 0.0 || horizon <= 0.0 {
        return None;
    }
    let gap = |t: f64| shape.signed_distance(p + v * t) - radius;
    let approaching = |t: f64| shape.normal(p + v * t).map(|n| (n.dot(v) < 0.0, n));

    let g0 = gap(0.0);
    if g0 <= 0.0 {
        if g0 < -EMBED_SLACK * 100.0 {
            return None;
        }
        return match approaching(0.0) {
            Some((true, n)) => Some(Contact { time: 0.0, normal: n }),
            _ => None,
        };
    }

    let dt = (0.25 / speed).min(horizon);
    let mut lo = 0.0;
    loop {
        let hi = (lo + dt).min(horizon);
        if gap(hi) <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if gap(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return match approaching(a) {
                Some((true, n)) => Some(Contact { time: a, normal: n }),
                _ => None,
            };
        }
        if hi >= horizon {
            return None;
        }
        lo = hi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_on_face() {
        let c = rect(Vec2::new(10.0, 10.0), Vec2::new(2.0, 2.0), 0.0, Vec2::new(2.0, 10.0), Vec2::new(1.0, 0.0), 1.0, 10.0)
            .unwrap();
        // face at x = 8, contact when centre reaches 7
        assert!((c.time - 5.0).abs() < 1e-12);
        assert_eq!(c.normal, Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn corner_hit_normal_is_diagonal() {
        // Aim straight at the (+,+) corner along the diagonal.
        let p = Vec2::new(10.0, 10.0);
        let c = rect(Vec2::ZERO, Vec2::new(1.0, 1.0), 0.0, p, Vec2::new(-1.0, -1.0), 1.0, 100.0).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((c.normal.x - s).abs() < 1e-12 && (c.normal.y - s).abs() < 1e-12);
        let hit = p + Vec2::new(-1.0, -1.0) * c.time;
        assert!((hit.distance(Vec2::new(1.0, 1.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_rect_matches_unrotated_frame() {
        let angle = 0.3;
        let centre = Vec2::new(5.0, 5.0);
        let dir = Vec2::new(-1.0, 0.0).rotated(angle);
        let start = centre + Vec2::new(10.0, 0.0).rotated(angle);
        let c = rect(centre, Vec2::new(2.0, 3.0), angle, start, dir, 1.0, 100.0).unwrap();
        assert!((c.time - 7.0).abs() < 1e-12);
        assert!((c.normal.dot(Vec2::new(1.0, 0.0).rotated(angle)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn receding_targets_are_ignored() {
        assert!(rect(Vec2::ZERO, Vec2::new(1.0, 1.0), 0.0, Vec2::new(3.0, 0.0), Vec2::new(1.0, 0.0), 1.0, 10.0).is_none());
        assert!(ball_pair(Vec2::ZERO, Vec2::new(-1.0, 0.0), 1.0, Vec2::new(3.0, 0.0), Vec2::ZERO, 1.0, 10.0).is_none());
    }

    #[test]
    fn beyond_horizon_is_none() {
        let board = BoardSpec::square(32, 2).unwrap();
        assert!(wall(&board, Vec2::new(16.0, 16.0), Vec2::new(1.0, 0.0), 2.0, 1.0).is_none());
        let c = wall(&board, Vec2::new(16.0, 16.0), Vec2::new(1.0, 0.0), 2.0, 100.0).unwrap();
        assert!((c.time - 11.5).abs() < 1e-12);
    }
}
