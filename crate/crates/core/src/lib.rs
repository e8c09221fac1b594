//! Random-forest surrogate for an agent-based housing-policy simulation.
//!
//! The pipeline labels simulation runs as optimal (high production, low
//! inequality), trains a forest on run configurations, generates new
//! configurations around the empirical sample, classifies them, and
//! aggregates the predictions per region and policy.

pub mod analysis;
pub mod config;
pub mod error;
pub mod forest;
pub mod labeling;
pub mod pipeline;
pub mod sampler;
pub mod schema;
pub mod seeding;
pub mod stats;
pub mod toyabm;

pub use error::{Error, Result};
