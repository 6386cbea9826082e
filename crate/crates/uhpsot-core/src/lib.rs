//! Unsupervised single-object tracking: a regularized correlation-filter
//! appearance model fused with background-motion and trajectory box
//! proposals, plus a one-pass-evaluation benchmark harness.
//!
//! The numeric core is generic over the scalar type ([`num::Real`], i.e.
//! `f32` or `f64`); the concrete aliases below pick `f32` for tracking.

pub mod bgmotion;
pub mod config;
pub mod dcf;
pub mod error;
pub mod eval;
pub mod features;
pub mod fft;
pub mod frame;
pub mod fusion;
pub mod geometry;
pub mod num;
pub mod synth;
pub mod tracker;
pub mod trajectory;

pub use error::{Error, Result};

/// Scalar used by the CLI tracker.
pub type Scalar = f32;
pub type BoundingBox = geometry::BoundingBox<Scalar>;
