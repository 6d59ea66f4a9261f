//! FFT convolution of long signals with room impulse responses.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// A source signal transformed once, ready to be convolved with many
/// impulse responses. Output is truncated to the source length.
pub struct SpectralSource {
    len: usize,
    fft_len: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn fft_len_for(len: usize, max_ir: usize) -> usize {
    (len + max_ir).next_power_of_two()
}

impl SpectralSource {
    /// `max_ir_len` bounds the impulse responses this source will meet;
    /// longer ones are truncated.
    pub fn new(signal: &[f64], max_ir_len: usize) -> Self {
        let fft_len = fft_len_for(signal.len(), max_ir_len);
        let mut spectrum: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        spectrum.resize(fft_len, Complex64::new(0.0, 0.0));
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        forward.process(&mut spectrum);
        SpectralSource {
            len: signal.len(),
            fft_len,
            spectrum,
            forward,
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn convolve(&self, ir: &[f64]) -> Vec<f64> {
        let n = self.fft_len;
        let take = ir.len().min(n - self.len);
        let mut buf: Vec<Complex64> = ir[..take].iter().map(|&x| Complex64::new(x, 0.0)).collect();
        buf.resize(n, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf[..self.len].iter().map(|v| v.re * scale).collect()
    }
}

/// `(x * h)[0..x.len()]`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    SpectralSource::new(x, h.len()).convolve(h)
}
