//! Short-time Fourier transform with weighted overlap-add resynthesis.
//!
//! Frame `l` covers samples `[l * hop, l * hop + frame_len)`. There is no
//! pre-padding, so the first and last frames lack an overlap partner on one
//! side; [`StftFrameBlock::is_edge_frame`] flags them so metrics can skip them.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::window::{make_window, WindowKind};
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    /// 16 kHz, 32 ms square-root Hann frames, 50% overlap, 512-point FFT.
    fn default() -> Self {
        StftConfig {
            sample_rate: 16_000,
            frame_len: 512,
            hop: 256,
            fft_size: 512,
            window: WindowKind::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn new(sample_rate: u32, frame_len: usize, fft_size: usize) -> Result<Self> {
        let cfg = StftConfig {
            sample_rate,
            frame_len,
            hop: frame_len / 2,
            fft_size,
            window: WindowKind::SqrtHann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.frame_len < 2 || self.frame_len % 2 != 0 {
            return Err(Error::invalid(format!(
                "frame length must be even and >= 2, got {}",
                self.frame_len
            )));
        }
        if self.hop * 2 != self.frame_len {
            return Err(Error::invalid(format!(
                "hop must be half the frame length ({} != {}/2)",
                self.hop, self.frame_len
            )));
        }
        if self.fft_size < self.frame_len {
            return Err(Error::invalid(format!(
                "fft size {} shorter than frame length {}",
                self.fft_size, self.frame_len
            )));
        }
        Ok(())
    }

    /// Number of retained bins, `fft_size / 2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self, signal_len: usize) -> usize {
        if signal_len < self.frame_len {
            0
        } else {
            (signal_len - self.frame_len) / self.hop + 1
        }
    }

    /// Length of the signal produced by overlap-adding `num_frames` frames.
    pub fn signal_len(&self, num_frames: usize) -> usize {
        if num_frames == 0 {
            0
        } else {
            (num_frames - 1) * self.hop + self.frame_len
        }
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Centre frequency of bin `k` in Hz.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Complex spectra indexed `(frame, bin, channel)`, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrameBlock {
    config: StftConfig,
    num_frames: usize,
    num_channels: usize,
    data: Vec<C64>,
}

impl StftFrameBlock {
    pub fn zeros(config: StftConfig, num_frames: usize, num_channels: usize) -> Self {
        let k = config.num_bins();
        StftFrameBlock {
            config,
            num_frames,
            num_channels,
            data: vec![C64::new(0.0, 0.0); num_frames * k * num_channels],
        }
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.config.num_bins()
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    fn offset(&self, frame: usize, bin: usize) -> usize {
        (frame * self.num_bins() + bin) * self.num_channels
    }

    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> C64 {
        self.data[self.offset(frame, bin) + channel]
    }

    pub fn set(&mut self, frame: usize, bin: usize, channel: usize, value: C64) {
        let o = self.offset(frame, bin) + channel;
        self.data[o] = value;
    }

    /// All channels at one time-frequency point.
    pub fn bin_vector(&self, frame: usize, bin: usize) -> &[C64] {
        let o = self.offset(frame, bin);
        &self.data[o..o + self.num_channels]
    }

    /// Whole frame laid out `(bin, channel)`.
    pub fn frame(&self, frame: usize) -> &[C64] {
        let n = self.num_bins() * self.num_channels;
        &self.data[frame * n..(frame + 1) * n]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [C64] {
        let n = self.num_bins() * self.num_channels;
        &mut self.data[frame * n..(frame + 1) * n]
    }

    /// First and last frames only partially overlap their neighbours.
    pub fn is_edge_frame(&self, frame: usize) -> bool {
        frame == 0 || frame + 1 == self.num_frames
    }

    /// Copies a subset of channels into a new block.
    pub fn select_channels(&self, channels: &[usize]) -> Result<StftFrameBlock> {
        if let Some(&bad) = channels.iter().find(|&&c| c >= self.num_channels) {
            return Err(Error::invalid(format!(
                "channel {bad} out of range ({} channels)",
                self.num_channels
            )));
        }
        let mut out = StftFrameBlock::zeros(self.config, self.num_frames, channels.len());
        for l in 0..self.num_frames {
            for k in 0..self.num_bins() {
                for (j, &c) in channels.iter().enumerate() {
                    out.set(l, k, j, self.get(l, k, c));
                }
            }
        }
        Ok(out)
    }
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(n)
}

/// Analyses each channel of `signal` (all channels equal length).
pub fn stft_analyze(signal: &[Vec<f64>], cfg: &StftConfig) -> Result<StftFrameBlock> {
    cfg.validate()?;
    if signal.is_empty() {
        return Err(Error::invalid("signal has no channels"));
    }
    let len = signal[0].len();
    if signal.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("channels differ in length"));
    }
    if len < cfg.frame_len {
        return Err(Error::invalid(format!(
            "signal of {len} samples is shorter than one frame ({})",
            cfg.frame_len
        )));
    }
    let window = make_window(cfg.frame_len, cfg.window)?;
    let fft = forward_plan(cfg.fft_size);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![C64::new(0.0, 0.0); cfg.fft_size];
    let num_frames = cfg.num_frames(len);
    let num_bins = cfg.num_bins();
    let mut block = StftFrameBlock::zeros(*cfg, num_frames, signal.len());
    for (c, channel) in signal.iter().enumerate() {
        for l in 0..num_frames {
            let start = l * cfg.hop;
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for (i, (&x, &w)) in channel[start..start + cfg.frame_len]
                .iter()
                .zip(&window)
                .enumerate()
            {
                buf[i] = C64::new(x * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, &v) in buf.iter().take(num_bins).enumerate() {
                block.set(l, k, c, v);
            }
        }
    }
    Ok(block)
}

/// Weighted overlap-add resynthesis of every channel in `block`.
pub fn stft_synthesize(block: &StftFrameBlock) -> Result<Vec<Vec<f64>>> {
    let cfg = *block.config();
    cfg.validate()?;
    let window = make_window(cfg.frame_len, cfg.window)?;
    let inverse = FftPlanner::new().plan_fft_inverse(cfg.fft_size);
    let mut scratch = vec![C64::new(0.0, 0.0); inverse.get_inplace_scratch_len()];
    let mut buf = vec![C64::new(0.0, 0.0); cfg.fft_size];
    let num_bins = cfg.num_bins();
    let n = cfg.fft_size;
    let scale = 1.0 / n as f64;
    let out_len = cfg.signal_len(block.num_frames());
    let mut out = vec![vec![0.0; out_len]; block.num_channels()];
    for (c, channel) in out.iter_mut().enumerate() {
        for l in 0..block.num_frames() {
            for k in 0..num_bins {
                buf[k] = block.get(l, k, c);
            }
            // Conjugate-symmetric extension of the one-sided spectrum.
            for k in num_bins..n {
                buf[k] = buf[n - k].conj();
            }
            inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = l * cfg.hop;
            for (i, &w) in window.iter().enumerate() {
                channel[start + i] += buf[i].re * scale * w;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn default_config_matches_front_end() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.num_bins(), 257);
        assert_eq!(cfg.hop, 256);
        assert_eq!(cfg.num_frames(16_000 * 30), 1874);
        assert!(StftConfig::new(16_000, 512, 256).is_err());
        assert!(StftConfig::new(0, 512, 512).is_err());
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = StftConfig::default();
        let block = stft_analyze(&[vec![0.0; 4096]], &cfg).unwrap();
        assert!(block.frame(3).iter().all(|v| v.norm() == 0.0));
        let back = stft_synthesize(&block).unwrap();
        assert!(back[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_signal() {
        let cfg = StftConfig::default();
        assert!(matches!(
            stft_analyze(&[vec![0.0; 100]], &cfg),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn integer_bin_sine_peaks_at_bin_32() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..8192)
            .map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / 16_000.0).sin())
            .collect();
        let block = stft_analyze(&[x], &cfg).unwrap();
        for l in 0..block.num_frames() {
            let (peak, _) = (0..block.num_bins())
                .map(|k| (k, block.get(l, k, 0).norm()))
                .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
            assert_eq!(peak, 32);
            // The sqrt-Hann spectrum of an on-bin sine is confined to bins
            // near the tone; nothing beyond +-8 bins carries energy.
            let far: f64 = (0..block.num_bins())
                .filter(|k| (*k as isize - 32).abs() > 8)
                .map(|k| block.get(l, k, 0).norm_sqr())
                .sum();
            let total: f64 = (0..block.num_bins()).map(|k| block.get(l, k, 0).norm_sqr()).sum();
            assert!(far / total < 1e-3, "{}", far / total);
        }
    }

    #[test]
    fn impulse_spectrum_is_flat() {
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 2048];
        x[0] = 1.0;
        let block = stft_analyze(&[x], &cfg).unwrap();
        // w[0] = 0 for a periodic window, so frame 0 is identically w[0].
        for k in 0..block.num_bins() {
            assert!((block.get(0, k, 0) - C64::new(0.0, 0.0)).norm() < 1e-15);
        }
        // An impulse at sample 3 gives magnitude w[3] in every bin.
        let mut x = vec![0.0; 2048];
        x[3] = 1.0;
        let w = make_window(512, WindowKind::SqrtHann).unwrap();
        let block = stft_analyze(&[x], &cfg).unwrap();
        for k in 0..block.num_bins() {
            assert!((block.get(0, k, 0).norm() - w[3]).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(4096, 3);
        let w = make_window(512, WindowKind::SqrtHann).unwrap();
        let block = stft_analyze(&[x.clone()], &cfg).unwrap();
        let n = cfg.fft_size;
        for l in 0..block.num_frames() {
            let time: f64 = (0..512).map(|i| (x[l * 256 + i] * w[i]).powi(2)).sum();
            // Extend to all fft_size bins via conjugate symmetry.
            let mut freq = 0.0;
            for k in 0..n {
                let kk = if k < block.num_bins() { k } else { n - k };
                freq += block.get(l, kk, 0).norm_sqr();
            }
            freq /= n as f64;
            assert!(((time - freq) / time).abs() < 1e-9);
        }
    }

    #[test]
    fn single_frame_is_windowed_twice() {
        let cfg = StftConfig::default();
        let x = noise(512, 5);
        let block = stft_analyze(&[x.clone()], &cfg).unwrap();
        assert_eq!(block.num_frames(), 1);
        let y = stft_synthesize(&block).unwrap();
        let w = make_window(512, WindowKind::SqrtHann).unwrap();
        for i in 0..512 {
            assert!((y[0][i] - w[i] * w[i] * x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_padded_fft_round_trip() {
        let cfg = StftConfig {
            fft_size: 1024,
            ..StftConfig::default()
        };
        let x = noise(8192, 9);
        let block = stft_analyze(&[x.clone()], &cfg).unwrap();
        assert_eq!(block.num_bins(), 513);
        let y = stft_synthesize(&block).unwrap();
        for i in 512..y[0].len() - 512 {
            assert!((y[0][i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn multichannel_round_trip() {
        let cfg = StftConfig::default();
        let x = vec![noise(6000, 1), noise(6000, 2)];
        let block = stft_analyze(&x, &cfg).unwrap();
        assert!(block.is_edge_frame(0));
        assert!(block.is_edge_frame(block.num_frames() - 1));
        assert!(!block.is_edge_frame(1));
        let y = stft_synthesize(&block).unwrap();
        for c in 0..2 {
            for i in 256..y[c].len() - 256 {
                assert!((y[c][i] - x[c][i]).abs() < 1e-10);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn round_trip_relative_error(seed in 0u64..1000, len in 1024usize..6000) {
            let cfg = StftConfig::default();
            let x = noise(len, seed);
            let block = stft_analyze(&[x.clone()], &cfg).unwrap();
            let y = stft_synthesize(&block).unwrap();
            let end = y[0].len() - cfg.hop;
            let (mut err, mut sig) = (0.0, 0.0);
            for i in cfg.hop..end {
                err += (x[i] - y[0][i]).powi(2);
                sig += x[i].powi(2);
            }
            proptest::prop_assert!((err / sig).sqrt() <= 1e-6);
        }
    }
}
