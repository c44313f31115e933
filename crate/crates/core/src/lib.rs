//! Extraction and modelling of left-turn-across-path / opposite-direction
//! (LTAP/OD) conflicts from naturalistic driving logs.
//!
//! Stages, in pipeline order:
//!
//! * [`association`] groups raw forward-radar returns into target tracks.
//! * [`screening`] keeps (host window, track) pairs that look like an
//!   unprotected left turn in front of a straight-driving host.
//! * [`metrics`] reconstructs both trajectories and evaluates distance and
//!   time to the conflict point, plus both speeds, at the crossing moment.
//! * [`stats`] summarizes and compares populations of those records.
//! * [`model`] fits a sampler over the records for scenario generation.
//!
//! [`synth`] generates encounters with exact ground truth in the same channel
//! formats, and [`pipeline`] ties the stages to files.

// `!(x < bound)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod error;
pub mod geo;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod pipeline;
pub mod screening;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use parallel::Parallelism;
pub use screening::Platform;
