//! Speech-shaped noise, isotropic noise fields and SNR calibration.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::convolve::SpectralSource;
use crate::error::{invalid, Result, SceneError};

/// SNR reported for noise-free signals.
pub const SNR_CAP_DB: f64 = 120.0;

/// Long-term magnitude spectrum on an `fft_size` grid (`fft_size / 2 + 1`
/// bins), from Welch averaging with a periodic Hann window and 50% overlap.
pub fn long_term_spectrum(signals: &[&[f64]], fft_size: usize) -> Result<Vec<f64>> {
    if fft_size < 2 || fft_size % 2 != 0 {
        return Err(invalid("fft size must be even"));
    }
    let window: Vec<f64> = (0..fft_size)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / fft_size as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(fft_size);
    let nb = fft_size / 2 + 1;
    let mut acc = vec![0.0; nb];
    let mut count = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for s in signals {
        let mut start = 0;
        while start + fft_size <= s.len() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(s[start + i] * window[i], 0.0);
            }
            fft.process(&mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            count += 1;
            start += fft_size / 2;
        }
    }
    if count == 0 {
        return Err(SceneError::EmptyCorpus);
    }
    Ok(acc.into_iter().map(|p| (p / count as f64).sqrt()).collect())
}

/// Gaussian noise of `len` samples shaped by `template` (magnitudes on a
/// uniform grid from DC to Nyquist), scaled to unit RMS.
pub fn synth_ssn(template: &[f64], len: usize, seed: u64) -> Result<Vec<f64>> {
    if template.len() < 2 || template.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("spectral template must have >= 2 finite non-negative bins"));
    }
    if template.iter().all(|&v| v == 0.0) {
        return Err(SceneError::ZeroEnergy("spectral template".into()));
    }
    if len == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let last = (template.len() - 1) as f64;
    // Circular filtering keeps the output stationary end to end.
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = k.min(len - k);
        let pos = kk as f64 / (len as f64 / 2.0) * last;
        let i = (pos.floor() as usize).min(template.len() - 2);
        let frac = pos - i as f64;
        *b *= template[i] * (1.0 - frac) + template[i + 1] * frac;
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|v| v.re).collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(out)
}

/// Nominal third-octave centre frequencies (base-10) between `lo` and `hi`.
pub fn third_octave_centres(lo: f64, hi: f64) -> Vec<f64> {
    (-20..=20)
        .map(|n| 1000.0 * 10f64.powf(n as f64 / 10.0))
        .filter(|&f| f >= lo && f <= hi)
        .collect()
}

/// Band levels in dB of a signal's Welch spectrum, integrated over
/// third-octave bands around `centres`.
pub fn band_levels_db(signal: &[f64], sample_rate: f64, centres: &[f64], fft_size: usize) -> Result<Vec<f64>> {
    let spec = long_term_spectrum(&[signal], fft_size)?;
    Ok(band_levels_from_spectrum(&spec, sample_rate, centres))
}

pub fn band_levels_from_spectrum(spec: &[f64], sample_rate: f64, centres: &[f64]) -> Vec<f64> {
    let fft_size = 2 * (spec.len() - 1);
    let df = sample_rate / fft_size as f64;
    let edge = 10f64.powf(1.0 / 20.0);
    centres
        .iter()
        .map(|&fc| {
            let (lo, hi) = (fc / edge, fc * edge);
            let p: f64 = spec
                .iter()
                .enumerate()
                .filter(|(k, _)| {
                    let f = *k as f64 * df;
                    f >= lo && f < hi
                })
                .map(|(_, m)| m * m)
                .sum();
            10.0 * p.max(1e-300).log10()
        })
        .collect()
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `10 log10(|s|^2 / |v|^2)`, capped at [`SNR_CAP_DB`] for silent noise.
pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    snr_from_energies(energy(signal), energy(noise))
}

pub fn snr_from_energies(es: f64, ev: f64) -> f64 {
    if ev <= 0.0 {
        return SNR_CAP_DB;
    }
    if es <= 0.0 {
        return -SNR_CAP_DB;
    }
    (10.0 * (es / ev).log10()).min(SNR_CAP_DB)
}

/// Gain `g` such that `target` over `g * noise` has `target_snr_db`.
pub fn calibrate_snr(target: &[f64], noise: &[f64], target_snr_db: f64) -> Result<f64> {
    let es = energy(target);
    let ev = energy(noise);
    if !(es > 0.0) {
        return Err(SceneError::ZeroEnergy("target".into()));
    }
    if !(ev > 0.0) {
        return Err(SceneError::ZeroEnergy("noise".into()));
    }
    Ok((es / ev / 10f64.powf(target_snr_db / 10.0)).sqrt())
}

/// Independent SSN from every direction in `irs[direction][mic]`, convolved
/// and summed per microphone.
pub fn isotropic_noise(irs: &[Vec<Vec<f64>>], template: &[f64], len: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let num_mics = irs.first().map_or(0, Vec::len);
    if num_mics == 0 || irs.iter().any(|d| d.len() != num_mics || d.iter().any(Vec::is_empty)) {
        return Err(invalid("transfer set is missing directions or microphones"));
    }
    let max_ir = irs.iter().flatten().map(Vec::len).max().unwrap_or(0);
    let mut out = vec![vec![0.0; len]; num_mics];
    for (i, dir) in irs.iter().enumerate() {
        let ssn = synth_ssn(template, len, crate::seeds::derive(seed, i as u64))?;
        let src = SpectralSource::new(&ssn, max_ir);
        for (m, h) in dir.iter().enumerate() {
            for (o, v) in out[m].iter_mut().zip(src.convolve(h)) {
                *o += v;
            }
        }
    }
    Ok(out)
}
