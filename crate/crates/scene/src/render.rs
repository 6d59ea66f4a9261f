//! Scene rendering. Every source is convolved with every sensor's room
//! response; mixtures are sums of the isolated stems in a fixed order, so
//! `mixture == sum of stems + noise` holds sample for sample.

use headsteer_core::array::{
    free_field_steering, perturb_steering, ratf_from_atf, Perturbation, Position, SteeringVector,
    TransferFunctionSet,
};
use headsteer_core::beamforming::mpdr_weights_factored;
use headsteer_core::covariance::{Cpsdm, HermitianFactor, DEFAULT_LOADING, DEFAULT_SMOOTHING};
use headsteer_core::irset::load_ir_set;
use headsteer_core::stft::{stft_analyze, stft_synthesize, StftConfig, StftFrameBlock};
use headsteer_core::C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::conversation::synth_conversation;
use crate::convolve::SpectralSource;
use crate::error::{invalid, Result};
use crate::layout::SceneLayout;
use crate::noise::{calibrate_snr, energy, isotropic_noise, long_term_spectrum, synth_ssn};
use crate::room::{image_rir, RoomSpec};
use crate::scenario::{SceneMode, Scenario, SteeringConfig};
use crate::seeds;
use crate::speech::{SyntheticSpeech, UtteranceSource, WavCorpus};

/// Stems of one set of sources at one set of sensors, `[source][sensor]`.
pub type Stems = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone)]
pub struct RenderedScene {
    pub sample_rate: u32,
    pub reference_mic: usize,
    pub layout: SceneLayout,
    /// Hearing-aid mixture, one signal per mic.
    pub ha: Vec<Vec<f64>>,
    /// Remote channels in `layout.remote_order`.
    pub remotes: Vec<Vec<f64>>,
    /// Talker stems at the hearing-aid mics, target first.
    pub ha_stems: Stems,
    pub ha_noise: Vec<Vec<f64>>,
    /// Talker stems per remote channel.
    pub remote_stems: Stems,
    pub remote_noise: Vec<Vec<f64>>,
    /// Dry wearer speech; feeds the wearer's VAD only.
    pub own_voice: Vec<f64>,
    /// Dry talker signals, target first.
    pub dry: Vec<Vec<f64>>,
    /// Target-to-hearing-aid impulse responses.
    pub target_irs: Vec<Vec<f64>>,
    /// Gain applied to the unit isotropic field to reach the configured SNR.
    pub noise_gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Truth<'a> {
    pub sample_rate: u32,
    pub num_samples: usize,
    pub reference_mic: usize,
    pub target_channel: usize,
    pub noise_gain: f64,
    #[serde(flatten)]
    pub layout: &'a SceneLayout,
}

impl RenderedScene {
    pub fn num_samples(&self) -> usize {
        self.own_voice.len()
    }

    pub fn num_remotes(&self) -> usize {
        self.remotes.len()
    }

    pub fn target_channel(&self) -> usize {
        self.layout.target_channel
    }

    pub fn truth(&self) -> Truth<'_> {
        Truth {
            sample_rate: self.sample_rate,
            num_samples: self.num_samples(),
            reference_mic: self.reference_mic,
            target_channel: self.layout.target_channel,
            noise_gain: self.noise_gain,
            layout: &self.layout,
        }
    }

    /// Dry signal carried by remote channel `r`: the talker for close-talking
    /// mics, the talker in the beam's seat (or silence) for a beam bank.
    pub fn channel_dry(&self, r: usize) -> Vec<f64> {
        match self.layout.mode {
            SceneMode::CloseTalkingRms => self.dry[self.layout.remote_order[r]].clone(),
            SceneMode::TableBeamBank => {
                let seat = self.layout.beams[self.layout.remote_order[r]].seat;
                self.layout
                    .talkers
                    .iter()
                    .position(|t| t.slot == seat)
                    .map_or_else(|| vec![0.0; self.num_samples()], |i| self.dry[i].clone())
            }
        }
    }

    /// Steering vector handed to the hearing-aid beamformer and selector.
    pub fn steering(&self, scenario: &Scenario, stft: &StftConfig) -> Result<SteeringVector> {
        let matched = || -> Result<SteeringVector> {
            let atf = TransferFunctionSet::from_impulse_responses(vec![self.target_irs.clone()], stft.fft_size)?;
            Ok(ratf_from_atf(&atf, 0, self.reference_mic)?)
        };
        Ok(match &scenario.steering {
            SteeringConfig::Matched => matched()?,
            SteeringConfig::FreeField => free_field_steering(
                &self.layout.talkers[0].position,
                &self.layout.ha_mics,
                self.reference_mic,
                self.sample_rate as f64,
                stft.fft_size,
                self.layout.room.speed_of_sound,
            )?,
            SteeringConfig::Jitter {
                phase_rad,
                magnitude_db,
                seed,
            } => perturb_steering(
                &matched()?,
                Perturbation::Jitter {
                    phase_rad: *phase_rad,
                    magnitude_db: *magnitude_db,
                    seed: *seed,
                },
            )?,
            SteeringConfig::IrSet {
                path,
                azimuth_deg,
                tolerance_deg,
            } => {
                let set = load_ir_set(&scenario.resolve(path), self.sample_rate, stft.fft_size)?;
                let bank = set.steering_bank(self.reference_mic)?;
                let d = bank.nearest(*azimuth_deg, *tolerance_deg)?.clone();
                if d.num_mics() != self.ha.len() {
                    return Err(invalid(format!(
                        "IR set has {} mics, the hearing aid has {}",
                        d.num_mics(),
                        self.ha.len()
                    )));
                }
                d
            }
        })
    }
}

/// `sum_t stems[t][c] + noise[c]`, accumulated in talker order.
pub fn mix(stems: &[Vec<Vec<f64>>], noise: &[Vec<f64>]) -> Vec<Vec<f64>> {
    noise
        .iter()
        .enumerate()
        .map(|(c, n)| {
            let mut out = vec![0.0; n.len()];
            for s in stems {
                for (o, v) in out.iter_mut().zip(&s[c]) {
                    *o += v;
                }
            }
            for (o, v) in out.iter_mut().zip(n) {
                *o += v;
            }
            out
        })
        .collect()
}

/// Speech source for one combination: the scenario's corpus if any, else
/// synthetic talkers seeded by the combination.
pub fn speech_source(corpus: Option<&WavCorpus>, sample_rate: u32, combo_seed: u64) -> Box<dyn UtteranceSource> {
    match corpus {
        Some(c) => Box::new(c.clone()),
        None => Box::new(SyntheticSpeech::new(sample_rate, seeds::derive_named(combo_seed, "speech"))),
    }
}

/// Impulse responses `[source][mic]`.
pub fn room_responses(room: &RoomSpec, sources: &[Position], mics: &[Position], fs: f64, len: usize) -> Result<Stems> {
    let pairs: Vec<(usize, usize)> = (0..sources.len()).flat_map(|s| (0..mics.len()).map(move |m| (s, m))).collect();
    let flat: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(s, m)| image_rir(room, &sources[s], &mics[m], fs, len))
        .collect::<Result<_>>()?;
    let mut it = flat.into_iter();
    Ok(sources.iter().map(|_| it.by_ref().take(mics.len()).collect()).collect())
}

/// `signals[s]` convolved with each of `irs[s][..]`.
pub fn convolve_sources(signals: &[Vec<f64>], irs: &[Vec<Vec<f64>>]) -> Stems {
    signals
        .par_iter()
        .zip(irs)
        .map(|(x, hs)| {
            let max = hs.iter().map(Vec::len).max().unwrap_or(0);
            let src = SpectralSource::new(x, max);
            hs.iter().map(|h| src.convolve(h)).collect()
        })
        .collect()
}

fn rir_len(scenario: &Scenario) -> usize {
    (scenario.room.rir_length_s() * scenario.sample_rate as f64).ceil() as usize
}

/// Renders `layout` with speech from `source`.
pub fn render_scene(scenario: &Scenario, layout: &SceneLayout, source: &mut dyn UtteranceSource) -> Result<RenderedScene> {
    if source.sample_rate() != scenario.sample_rate {
        return Err(invalid(format!(
            "speech source runs at {} Hz, scenario at {} Hz",
            source.sample_rate(),
            scenario.sample_rate
        )));
    }
    let fs = scenario.sample_rate as f64;
    let len = scenario.num_samples();
    let stft = StftConfig {
        sample_rate: scenario.sample_rate,
        ..StftConfig::default()
    };
    let stimuli = synth_conversation(
        source,
        &layout.voices,
        len,
        &scenario.conversation,
        seeds::derive_named(layout.combo_seed, "turns"),
    )?;
    let mut dry = Vec::with_capacity(layout.talkers.len());
    dry.push(stimuli.target);
    dry.extend(stimuli.competing);

    let num_ha = layout.ha_mics.len();
    let sensors: Vec<Position> = layout.ha_mics.iter().chain(&layout.sensors).copied().collect();
    let talker_pos: Vec<Position> = layout.talkers.iter().map(|t| t.position).collect();
    let irs = room_responses(&layout.room, &talker_pos, &sensors, fs, rir_len(scenario))?;
    let target_irs = irs[0][..num_ha].to_vec();
    let mut wet = convolve_sources(&dry, &irs);
    drop(irs);
    let far: Stems = wet.iter_mut().map(|s| s.split_off(num_ha)).collect();
    let ha_stems = wet;

    let mut speech: Vec<&[f64]> = vec![&stimuli.own_voice];
    speech.extend(dry.iter().map(Vec::as_slice));
    let template = long_term_spectrum(&speech, stft.fft_size)?;

    // One isotropic field reaches the hearing aid and (in beam-bank mode)
    // the table array.
    let field_mics: &[Position] = match layout.mode {
        SceneMode::CloseTalkingRms => &layout.ha_mics,
        SceneMode::TableBeamBank => &sensors,
    };
    let noise_irs = room_responses(&layout.room, &layout.noise_sources, field_mics, fs, rir_len(scenario))?;
    let mut field = isotropic_noise(&noise_irs, &template, len, seeds::derive_named(layout.combo_seed, "noise"))?;
    drop(noise_irs);
    let r = scenario.reference_mic;
    let g = calibrate_snr(&ha_stems[0][r], &field[r], scenario.noise.ssn_snr_db)?;
    field.iter_mut().flatten().for_each(|v| *v *= g);
    let far_noise = field.split_off(num_ha);
    let ha_noise = field;

    let (remote_stems, remote_noise): (Stems, Vec<Vec<f64>>) = match layout.mode {
        SceneMode::CloseTalkingRms => {
            let level = (energy(&ha_noise[r]) / len as f64).sqrt();
            let base = seeds::derive_named(layout.combo_seed, "rm-noise");
            let rm_noise: Vec<Vec<f64>> = (0..layout.sensors.len())
                .map(|i| Ok(synth_ssn(&template, len, seeds::derive(base, i as u64))?.into_iter().map(|v| v * level).collect()))
                .collect::<Result<_>>()?;
            let order = &layout.remote_order;
            let stems = far.iter().map(|s| order.iter().map(|&i| s[i].clone()).collect()).collect();
            (stems, order.iter().map(|&i| rm_noise[i].clone()).collect())
        }
        SceneMode::TableBeamBank => {
            let beam_pos: Vec<Position> = layout.beams.iter().map(|b| b.position).collect();
            let beam_irs = room_responses(&layout.room, &beam_pos, &layout.sensors, fs, stft.fft_size)?;
            let atf = TransferFunctionSet::from_impulse_responses(beam_irs, stft.fft_size)?;
            let steering = (0..beam_pos.len())
                .map(|b| Ok(ratf_from_atf(&atf, b, 0)?))
                .collect::<Result<Vec<_>>>()?;
            let mut inputs: Vec<&[Vec<f64>]> = far.iter().map(Vec::as_slice).collect();
            inputs.push(&far_noise);
            let mut out = beam_bank(&inputs, &steering, &stft, len)?;
            let noise_out = out.pop().expect("noise stem");
            let order = &layout.remote_order;
            let stems = out.iter().map(|s| order.iter().map(|&b| s[b].clone()).collect()).collect();
            (stems, order.iter().map(|&b| noise_out[b].clone()).collect())
        }
    };

    Ok(RenderedScene {
        sample_rate: scenario.sample_rate,
        reference_mic: r,
        layout: layout.clone(),
        ha: mix(&ha_stems, &ha_noise),
        remotes: mix(&remote_stems, &remote_noise),
        ha_stems,
        ha_noise,
        remote_stems,
        remote_noise,
        own_voice: stimuli.own_voice,
        dry,
        target_irs,
        noise_gain: g,
    })
}

/// Fixed-steering MPDR beams of an array. Weights follow the covariance of
/// the summed inputs; each input is filtered with the same weights, so the
/// beam outputs of the inputs add up to the beam output of the mixture.
/// Returns `[input][beam]` signals of `len` samples.
pub fn beam_bank(inputs: &[&[Vec<f64>]], steering: &[SteeringVector], stft: &StftConfig, len: usize) -> Result<Stems> {
    let blocks: Vec<StftFrameBlock> = inputs.iter().map(|x| stft_analyze(x, stft)).collect::<headsteer_core::Result<_>>()?;
    let first = blocks.first().ok_or_else(|| invalid("beam bank needs at least one input"))?;
    let (nf, nb, m) = (first.num_frames(), first.num_bins(), first.num_channels());
    if steering.iter().any(|d| d.num_mics() != m || d.num_bins() != nb) {
        return Err(invalid("beam steering does not match the array"));
    }
    let mut cov = Cpsdm::new(nb, m, DEFAULT_SMOOTHING)?;
    let mut outs: Vec<StftFrameBlock> = blocks.iter().map(|_| StftFrameBlock::zeros(*stft, nf, steering.len())).collect();
    let mut mixture = vec![C64::new(0.0, 0.0); nb * m];
    for l in 0..nf {
        mixture.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        for b in &blocks {
            for (a, v) in mixture.iter_mut().zip(b.frame(l)) {
                *a += v;
            }
        }
        cov.update(&mixture)?;
        for k in 0..nb {
            let factor = HermitianFactor::new(cov.matrix(k), m, DEFAULT_LOADING)?;
            for (j, d) in steering.iter().enumerate() {
                let w = mpdr_weights_factored(&factor, d.bin(k))?;
                for (blk, out) in blocks.iter().zip(outs.iter_mut()) {
                    let y = blk.bin_vector(l, k);
                    let v: C64 = w.iter().zip(y).map(|(a, b)| a.conj() * b).sum();
                    out.set(l, k, j, v);
                }
            }
        }
    }
    drop(blocks);
    outs.iter()
        .map(|o| {
            let mut sig = stft_synthesize(o)?;
            sig.iter_mut().for_each(|s| s.resize(len, 0.0));
            Ok(sig)
        })
        .collect()
}
