//! 2.1D ball dynamics over a discrete scenario lattice.
//!
//! Balls move in the board plane and collide elastically with the perimeter
//! walls, with `Bounce` obstacles and with each other. `Above` and `Under`
//! obstacles carry a depth flag only: they change how a frame is drawn, never
//! how a ball moves.

mod contact;
pub mod sdf;
mod sim;
mod types;

pub use sdf::sdf_from_mask;
pub use sim::{simulate, simulate_with, simulate_without_obstacles, step, DEFAULT_SUBSTEPS};
pub use types::{
    Background, BallState, BoardSpec, MaskShape, Obstacle, ObstacleShape, ObstacleType, Run, Scenario,
};

/// Separation tolerance (px) below which a ball counts as overlapping a solid.
pub const CONTACT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("invalid board: {0}")]
    InvalidBoard(String),
    #[error("invalid obstacle shape: {0}")]
    InvalidShape(String),
    #[error("occupancy mask is empty")]
    EmptyMask,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid ball state: {0}")]
    InvalidState(String),
    #[error("frame count must be at least 1")]
    ZeroFrames,
    #[error("substeps must be at least 1")]
    ZeroSubsteps,
}
