//! Dense articulation fields, axis inference and trajectory synthesis for
//! single-joint articulated objects, with a deterministic kinematic world for
//! closed-loop evaluation.
//!
//! The pipeline runs in this order:
//!
//! 1. [`scene`] parses a small URDF dialect, samples box surfaces and renders
//!    occluded point-cloud observations at a joint configuration.
//! 2. [`fields`] computes the per-point articulation flow and articulation
//!    projection for an observation.
//! 3. [`predictors`] is the plug-in boundary for field prediction (exact,
//!    noisy, or replayed from CSV).
//! 4. [`estimation`] turns dense fields into an axis estimate.
//! 5. [`trajectory`] turns an axis estimate into waypoints and end-effector
//!    orientations.
//! 6. [`rollout`] closes the loop in a kinematic world and scores the result.
//! 7. [`eval`] runs seeded batches of rollouts and tabulates them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod fields;
pub mod geometry;
pub mod predictors;
pub mod rollout;
pub mod scene;
pub mod seeds;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::Vec3;
