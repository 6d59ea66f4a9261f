//! Analysis/synthesis windows.

use std::f64::consts::PI;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// Periodic Hann raised to the power 0.5. Used for both analysis and
    /// synthesis, so the squared window is constant-overlap-add at 50% hop.
    #[default]
    SqrtHann,
}

/// Builds a periodic window of `length` samples.
///
/// `length` must be even and non-zero so that the 50%-overlap COLA condition
/// holds exactly.
pub fn make_window(length: usize, kind: WindowKind) -> Result<Vec<f64>> {
    if length < 2 || length % 2 != 0 {
        return Err(Error::invalid(format!(
            "window length must be even and >= 2, got {length}"
        )));
    }
    let n = length as f64;
    Ok(match kind {
        WindowKind::SqrtHann => (0..length)
            .map(|i| {
                let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos();
                hann.max(0.0).sqrt()
            })
            .collect(),
    })
}
