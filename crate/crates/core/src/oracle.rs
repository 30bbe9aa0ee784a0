//! Event-driven continuous-time reference simulator for test suites.
//!
//! Handles one ball, the perimeter walls and axis-aligned solid rectangles.
//! The trajectory is a chain of closed-form flight segments joined at
//! analytically computed reflection times, sampled at integer frames.

use crate::geometry::Vec2;
use crate::physics::BoardSpec;

/// Axis-aligned rectangle by its extreme coordinates.
#[derive(Clone, Copy, Debug)]
pub struct AaRect {
    pub min: Vec2,
    pub max: Vec2,
}

struct Hit {
    dt: f64,
    normal: Vec2,
}

fn keep_first(best: &mut Option<Hit>, dt: f64, normal: Vec2) {
    if dt >= 0.0 && best.as_ref().is_none_or(|b| dt < b.dt) {
        *best = Some(Hit { dt, normal });
    }
}

fn next_hit(board: &BoardSpec, rects: &[AaRect], p: Vec2, v: Vec2, r: f64) -> Option<Hit> {
    let mut best = None;
    let lo = board.interior_min();
    let hi = board.interior_max();

    if v.x > 0.0 {
        keep_first(&mut best, (hi.x - r - p.x) / v.x, Vec2::new(-1.0, 0.0));
    }
    if v.x < 0.0 {
        keep_first(&mut best, (lo.x + r - p.x) / v.x, Vec2::new(1.0, 0.0));
    }
    if v.y > 0.0 {
        keep_first(&mut best, (hi.y - r - p.y) / v.y, Vec2::new(0.0, -1.0));
    }
    if v.y < 0.0 {
        keep_first(&mut best, (lo.y + r - p.y) / v.y, Vec2::new(0.0, 1.0));
    }

    for rc in rects {
        // left face x = min.x - r, moving right
        if v.x > 0.0 && p.x <= rc.min.x - r {
            let dt = (rc.min.x - r - p.x) / v.x;
            let y = p.y + v.y * dt;
            if y >= rc.min.y && y <= rc.max.y {
                keep_first(&mut best, dt, Vec2::new(-1.0, 0.0));
            }
        }
        if v.x < 0.0 && p.x >= rc.max.x + r {
            let dt = (rc.max.x + r - p.x) / v.x;
            let y = p.y + v.y * dt;
            if y >= rc.min.y && y <= rc.max.y {
                keep_first(&mut best, dt, Vec2::new(1.0, 0.0));
            }
        }
        if v.y > 0.0 && p.y <= rc.min.y - r {
            let dt = (rc.min.y - r - p.y) / v.y;
            let x = p.x + v.x * dt;
            if x >= rc.min.x && x <= rc.max.x {
                keep_first(&mut best, dt, Vec2::new(0.0, -1.0));
            }
        }
        if v.y < 0.0 && p.y >= rc.max.y + r {
            let dt = (rc.max.y + r - p.y) / v.y;
            let x = p.x + v.x * dt;
            if x >= rc.min.x && x <= rc.max.x {
                keep_first(&mut best, dt, Vec2::new(0.0, 1.0));
            }
        }
        let corners = [
            Vec2::new(rc.min.x, rc.min.y),
            Vec2::new(rc.max.x, rc.min.y),
            Vec2::new(rc.max.x, rc.max.y),
            Vec2::new(rc.min.x, rc.max.y),
        ];
        for k in corners {
            // |p + v dt - k|^2 = r^2
            let d = p - k;
            let a = v.x * v.x + v.y * v.y;
            let b = 2.0 * (d.x * v.x + d.y * v.y);
            let c = d.x * d.x + d.y * d.y - r * r;
            if b >= 0.0 {
                continue;
            }
            let disc = b * b - 4.0 * a * c;
            if disc < 0.0 {
                continue;
            }
            let dt = (-b - disc.sqrt()) / (2.0 * a);
            let q = p + v * dt;
            let in_region_x = if k.x == rc.min.x { q.x <= k.x } else { q.x >= k.x };
            let in_region_y = if k.y == rc.min.y { q.y <= k.y } else { q.y >= k.y };
            if in_region_x && in_region_y {
                let n = (q - k) * (1.0 / r);
                keep_first(&mut best, dt, n);
            }
        }
    }
    best
}

/// Ball centre at integer frames `0..frames`.
pub fn event_driven_trajectory(
    board: &BoardSpec,
    rects: &[AaRect],
    start: Vec2,
    velocity: Vec2,
    radius: f64,
    frames: usize,
) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(frames);
    let mut seg_start = 0.0f64;
    let mut seg_pos = start;
    let mut vel = velocity;
    let mut frame = 0usize;
    while frame < frames {
        let hit = next_hit(board, rects, seg_pos, vel, radius);
        let seg_end = hit.as_ref().map_or(f64::INFINITY, |h| seg_start + h.dt);
        while frame < frames && (frame as f64) <= seg_end {
            out.push(seg_pos + vel * (frame as f64 - seg_start));
            frame += 1;
        }
        match hit {
            Some(h) => {
                seg_pos = seg_pos + vel * h.dt;
                seg_start = seg_end;
                vel = vel - h.normal * (2.0 * (vel.x * h.normal.x + vel.y * h.normal.y));
            }
            None => break,
        }
    }
    out
}
