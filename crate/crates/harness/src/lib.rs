//! Experiment orchestration: renders seeded scenes, runs every selector on
//! the same audio, and reports per-frame selection statistics.

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod snr;
pub mod sweep;

pub use error::{HarnessError, Result};
