//! Beamformer output plus remote-channel spectra in, per-frame decisions out.

use crate::beamforming::BeamformerOutput;
use crate::covariance::{Cpsdm, DEFAULT_SMOOTHING};
use crate::selector::{Decision, SelectorConfig, SelectorState, WeightingMode};
use crate::stft::StftFrameBlock;
use crate::{Error, Result};

/// Lower bound on the weighting PSD, so all-zero stretches stay finite.
pub const SIGMA2_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrack {
    pub decisions: Vec<Decision>,
    /// First frame whose decision is past covariance warm-up and has a full
    /// integration window behind it.
    pub first_reliable_frame: usize,
}

impl SelectionTrack {
    pub fn reliable(&self) -> &[Decision] {
        &self.decisions[self.first_reliable_frame.min(self.decisions.len())..]
    }
}

/// First reliable frame for a window of `window_frames` and the given
/// covariance smoothing.
pub fn first_reliable_frame(window_frames: usize, smoothing: f64) -> usize {
    Cpsdm::warmup_frames(smoothing).max(window_frames.saturating_sub(1))
}

/// Runs the selector over every frame. `remotes` holds one channel per
/// candidate. The output PSDs are re-windowed to the selector's `D` if needed.
pub fn run_selector(
    beam: &BeamformerOutput,
    remotes: &StftFrameBlock,
    config: &SelectorConfig,
) -> Result<SelectionTrack> {
    if remotes.num_frames() != beam.num_frames || remotes.num_bins() != beam.num_bins {
        return Err(Error::invalid(format!(
            "remote block is {} frames x {} bins, beamformer output is {} x {}",
            remotes.num_frames(),
            remotes.num_bins(),
            beam.num_frames,
            beam.num_bins
        )));
    }
    if config.bin_mask.len() != beam.num_bins {
        return Err(Error::invalid("bin mask length differs from the bin count"));
    }
    let rewindowed;
    let beam = if beam.psd_window == config.window_frames {
        beam
    } else {
        rewindowed = beam.with_psd_window(config.window_frames)?;
        &rewindowed
    };
    let mut state = SelectorState::new(config.clone(), remotes.num_channels())?;
    let cfg = remotes.config();
    let mut sigma = vec![0.0; beam.num_bins];
    let mut decisions = Vec::with_capacity(beam.num_frames);
    for l in 0..beam.num_frames {
        let psd = match config.weighting_mode {
            WeightingMode::Approximation => beam.noisy_psd_frame(l),
            WeightingMode::Oracle => beam.noise_psd_frame(l)?,
        };
        for (s, &p) in sigma.iter_mut().zip(psd) {
            *s = p.max(SIGMA2_FLOOR);
        }
        state.push_frame(beam.frame(l), remotes.frame(l), &sigma)?;
        let sel = state.select();
        decisions.push(Decision {
            frame_index: l,
            time_s: (l * cfg.hop + cfg.frame_len) as f64 / cfg.sample_rate as f64,
            selected_channel: sel.channel,
            scores: sel.scores,
        });
    }
    Ok(SelectionTrack {
        decisions,
        first_reliable_frame: first_reliable_frame(config.window_frames, DEFAULT_SMOOTHING),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::SteeringVector;
    use crate::beamforming::{run_mpdr, MpdrBeamformer};
    use crate::stft::{stft_analyze, StftConfig};
    use crate::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reliable_frame_bounds() {
        assert_eq!(first_reliable_frame(31, DEFAULT_SMOOTHING), 30);
        assert_eq!(first_reliable_frame(5, DEFAULT_SMOOTHING), 20);
    }

    #[test]
    fn matched_remote_wins_in_a_toy_scene() {
        // Two mics with an exactly known target RATF; remote 1 carries the
        // target, remote 0 an unrelated interferer.
        let cfg = StftConfig { frame_len: 128, hop: 64, fft_size: 128, ..StftConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 16_000 * 4;
        let target: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let interferer: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Target reaches mic 1 three samples late; interferer five samples early.
        let delayed = |x: &[f64], d: isize| -> Vec<f64> {
            (0..n as isize).map(|i| {
                let j = i - d;
                if j >= 0 && (j as usize) < n { x[j as usize] } else { 0.0 }
            }).collect()
        };
        let m0: Vec<f64> = target.iter().zip(&interferer).map(|(a, b)| a + b).collect();
        let t1 = delayed(&target, 3);
        let i1 = delayed(&interferer, -5);
        let m1: Vec<f64> = t1.iter().zip(&i1).map(|(a, b)| a + b).collect();
        let ha = stft_analyze(&[m0, m1], &cfg).unwrap();
        let per_bin: Vec<Vec<C64>> = (0..cfg.num_bins())
            .map(|k| {
                let ph = -2.0 * std::f64::consts::PI * k as f64 * 3.0 / cfg.fft_size as f64;
                vec![C64::new(1.0, 0.0), C64::from_polar(1.0, ph)]
            })
            .collect();
        let d = SteeringVector::from_bins(&per_bin, 0).unwrap();
        let mut bf = MpdrBeamformer::with_defaults(d).unwrap();
        let sel_cfg = SelectorConfig::new(0.5, &cfg, WeightingMode::Approximation).unwrap();
        let beam = run_mpdr(&ha, &mut bf, None, sel_cfg.window_frames).unwrap();
        let remotes = stft_analyze(&[interferer.clone(), target.clone()], &cfg).unwrap();
        let track = run_selector(&beam, &remotes, &sel_cfg).unwrap();
        let reliable = track.reliable();
        let correct = reliable.iter().filter(|d| d.selected_channel == 1).count();
        assert!(correct as f64 / reliable.len() as f64 > 0.95);
        // Oracle mode needs isolated noise.
        let oracle = SelectorConfig { weighting_mode: WeightingMode::Oracle, ..sel_cfg };
        assert!(matches!(run_selector(&beam, &remotes, &oracle), Err(Error::UnsupportedInLiveMode)));
    }
}
