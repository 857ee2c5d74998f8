//! Pairwise multi-view object recognition on a discretised viewing sphere,
//! with next-best-view policies, trajectory optimisation, and a seeded
//! benchmark harness.
//!
//! The classifier behind everything is an exactly computable oracle: either
//! a seeded synthetic world with closed-form posteriors, or an ingested
//! table of per-view class scores. That keeps every benchmark number
//! reproducible bit for bit from a master seed.

pub mod error;
pub mod fusion;
pub mod harness;
pub mod policy;
pub mod seed;
pub mod sensorium;
pub mod viewsphere;

pub use error::{Error, Result};
