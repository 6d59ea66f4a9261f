//! Head-steered remote channel selection.
//!
//! Given the STFT of a small head-worn microphone array and `R` remote
//! channels, the selector picks the remote channel whose content best explains
//! the output of a beamformer steered to the wearer's look direction. This
//! crate holds the signal-processing core: the STFT front end, the array
//! model, recursive covariance estimation, MPDR beamforming, the likelihood
//! statistic itself, and the turn-taking baselines it is compared against.

pub mod array;
pub mod baselines;
pub mod beamforming;
pub mod covariance;
pub mod error;
pub mod irset;
pub mod pipeline;
pub mod selector;
pub mod stft;
pub mod wav;
pub mod window;

pub use error::{Error, Result};

/// Complex STFT coefficient.
pub type C64 = num_complex::Complex64;
