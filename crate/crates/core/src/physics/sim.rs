//! Fixed-step integrator with continuous collision detection inside each
//! substep.
//!
//! A frame lasts one time unit and is split into `substeps` equal
//! sub-advances. Within a sub-advance the earliest contact over all balls is
//! located analytically (walls, rectangles, ball pairs) or by distance-field
//! marching (curved shapes); all balls move to that instant, the contact is
//! resolved, and the remainder of the sub-advance continues. Simultaneous
//! contacts resolve in ball-index order.

use super::contact::{self, Contact};
use super::types::{BallState, Obstacle, ObstacleShape, Run, Scenario};
use super::{PhysicsError, CONTACT_TOLERANCE};
use crate::geometry::Vec2;

pub const DEFAULT_SUBSTEPS: usize = 4;

/// Resolved contacts allowed per sub-advance before motion is forced through.
const MAX_EVENTS: usize = 256;

#[derive(Clone, Copy, Debug)]
enum Target {
    Wall,
    Obstacle(usize),
    Ball(usize),
}

#[derive(Clone, Copy, Debug)]
struct Event {
    ball: usize,
    target: Target,
    contact: Contact,
}

fn check_states(scenario: &Scenario, balls: &[BallState]) -> Result<(), PhysicsError> {
    for (i, b) in balls.iter().enumerate() {
        let finite = b.position.x.is_finite()
            && b.position.y.is_finite()
            && b.velocity.x.is_finite()
            && b.velocity.y.is_finite();
        if !finite || !(b.radius > 0.0) || !b.radius.is_finite() {
            return Err(PhysicsError::InvalidState(format!("ball {i} has non-finite state or radius")));
        }
        if !scenario.board.contains_disc(b.position, b.radius, CONTACT_TOLERANCE) {
            return Err(PhysicsError::InvalidState(format!("ball {i} overlaps the walls")));
        }
        for (j, o) in scenario.obstacles.iter().enumerate() {
            if o.kind.is_solid() && o.shape.signed_distance(b.position) - b.radius < -CONTACT_TOLERANCE {
                return Err(PhysicsError::InvalidState(format!("ball {i} overlaps solid obstacle {j}")));
            }
        }
    }
    Ok(())
}

fn obstacle_contact(o: &Obstacle, b: &BallState, horizon: f64) -> Option<Contact> {
    match &o.shape {
        ObstacleShape::RotatedRect {
            center,
            half_extents,
            angle,
        } => contact::rect(*center, *half_extents, *angle, b.position, b.velocity, b.radius, horizon),
        ObstacleShape::Mask(m) => contact::mask(m, b.position, b.velocity, b.radius, horizon),
    }
}

fn earliest_event(scenario: &Scenario, balls: &[BallState], horizon: f64) -> Option<Event> {
    let mut best: Option<Event> = None;
    let mut offer = |ball: usize, target: Target, c: Option<Contact>| {
        if let Some(contact) = c {
            if best.is_none_or(|e| contact.time < e.contact.time) {
                best = Some(Event { ball, target, contact });
            }
        }
    };
    for (i, b) in balls.iter().enumerate() {
        offer(i, Target::Wall, contact::wall(&scenario.board, b.position, b.velocity, b.radius, horizon));
        for (j, o) in scenario.obstacles.iter().enumerate() {
            if o.kind.is_solid() {
                offer(i, Target::Obstacle(j), obstacle_contact(o, b, horizon));
            }
        }
        for (j, other) in balls.iter().enumerate().skip(i + 1) {
            let c = contact::ball_pair(
                b.position,
                b.velocity,
                b.radius,
                other.position,
                other.velocity,
                other.radius,
                horizon,
            );
            offer(i, Target::Ball(j), c);
        }
    }
    best
}

fn drift(balls: &mut [BallState], dt: f64) {
    if dt > 0.0 {
        for b in balls.iter_mut() {
            b.position += b.velocity * dt;
        }
    }
}

/// Reflects velocities for `event` and removes any residual overlap.
fn resolve(scenario: &Scenario, balls: &mut [BallState], event: Event) {
    let n = event.contact.normal;
    match event.target {
        Target::Wall => {
            let b = &mut balls[event.ball];
            b.velocity = b.velocity.reflect(n);
            let lo = scenario.board.interior_min();
            let hi = scenario.board.interior_max();
            b.position.x = b.position.x.clamp(lo.x + b.radius, hi.x - b.radius);
            b.position.y = b.position.y.clamp(lo.y + b.radius, hi.y - b.radius);
        }
        Target::Obstacle(j) => {
            let shape = &scenario.obstacles[j].shape;
            let b = &mut balls[event.ball];
            b.velocity = b.velocity.reflect(n);
            for _ in 0..20 {
                let gap = shape.signed_distance(b.position) - b.radius;
                if gap >= 0.0 {
                    break;
                }
                let push = match shape {
                    ObstacleShape::Mask(m) => m.normal(b.position).unwrap_or(n),
                    ObstacleShape::RotatedRect { .. } => n,
                };
                b.position += push * (-gap + 1e-12);
            }
        }
        Target::Ball(j) => {
            let i = event.ball;
            // Equal masses: swap the velocity components along the line of centres.
            let dv = (balls[i].velocity - balls[j].velocity).dot(n);
            balls[i].velocity -= n * dv;
            balls[j].velocity += n * dv;
            let d = balls[i].position - balls[j].position;
            let overlap = balls[i].radius + balls[j].radius - d.norm();
            if overlap > 0.0 {
                balls[i].position += n * (0.5 * overlap);
                balls[j].position -= n * (0.5 * overlap);
            }
        }
    }
}

fn sub_advance(scenario: &Scenario, balls: &mut [BallState], dt: f64) {
    let mut remaining = dt;
    for _ in 0..MAX_EVENTS {
        match earliest_event(scenario, balls, remaining) {
            None => {
                drift(balls, remaining);
                return;
            }
            Some(event) => {
                let t = event.contact.time.min(remaining);
                drift(balls, t);
                resolve(scenario, balls, event);
                remaining -= t;
            }
        }
    }
    drift(balls, remaining);
}

/// Advances every ball by one frame.
///
/// The substep count is raised automatically so that no ball travels more
/// than its radius per sub-advance.
pub fn step(scenario: &Scenario, balls: &[BallState], substeps: usize) -> Result<Vec<BallState>, PhysicsError> {
    if substeps == 0 {
        return Err(PhysicsError::ZeroSubsteps);
    }
    check_states(scenario, balls)?;
    let mut next = balls.to_vec();
    let needed = balls
        .iter()
        .map(|b| (b.velocity.norm() / b.radius).ceil() as usize)
        .max()
        .unwrap_or(1);
    let n = substeps.max(needed);
    let dt = 1.0 / n as f64;
    for _ in 0..n {
        sub_advance(scenario, &mut next, dt);
    }
    Ok(next)
}

/// Simulates `frames` frames (frame 0 is the initial state) and returns the
/// run together with the ball states at the last frame.
pub fn simulate_with(
    scenario: &Scenario,
    initial: &[BallState],
    frames: usize,
    substeps: usize,
) -> Result<(Run, Vec<BallState>), PhysicsError> {
    if frames == 0 {
        return Err(PhysicsError::ZeroFrames);
    }
    if substeps == 0 {
        return Err(PhysicsError::ZeroSubsteps);
    }
    check_states(scenario, initial)?;
    let mut trajectories: Vec<Vec<Vec2>> = initial
        .iter()
        .map(|b| {
            let mut v = Vec::with_capacity(frames);
            v.push(b.position);
            v
        })
        .collect();
    let mut state = initial.to_vec();
    for _ in 1..frames {
        state = step(scenario, &state, substeps)?;
        for (tr, b) in trajectories.iter_mut().zip(&state) {
            tr.push(b.position);
        }
    }
    let run = Run {
        frames,
        radii: initial.iter().map(|b| b.radius).collect(),
        initial_velocities: initial.iter().map(|b| b.velocity).collect(),
        trajectories,
    };
    Ok((run, state))
}

pub fn simulate(scenario: &Scenario, initial: &[BallState], frames: usize) -> Result<Run, PhysicsError> {
    simulate_with(scenario, initial, frames, DEFAULT_SUBSTEPS).map(|(run, _)| run)
}

/// Ground-truth simulator with every obstacle removed (walls kept).
pub fn simulate_without_obstacles(
    scenario: &Scenario,
    initial: &[BallState],
    frames: usize,
) -> Result<Run, PhysicsError> {
    simulate(&scenario.without_obstacles(), initial, frames)
}
