//! Deterministic 2.1D intuitive-physics toolkit.
//!
//! * [`physics`]: ball dynamics with solid, above and under obstacles.
//! * [`render`]: scenario, frame and heatmap rasterization plus image codecs.
//! * [`experience`]: dynamic/median run summaries and run pooling.
//! * [`dataset`]: seeded scenario, run and meta-sample generation and storage.
//! * [`mask_learn`]: a small convolutional obstacle-mask regressor.
//! * [`eval`]: blob detection, trajectory metrics and the obstacle-free baseline.

pub mod geometry;
pub mod dataset;
pub mod eval;
pub mod experience;
pub mod mask_learn;
pub mod physics;
pub mod render;

#[cfg(any(test, feature = "oracle"))]
pub mod oracle;

pub use geometry::Vec2;
