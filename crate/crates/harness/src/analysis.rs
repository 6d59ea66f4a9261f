//! One rendered combination, ready for every selector.
//!
//! The hearing-aid MPDR runs once; its output feeds both weighting modes of
//! the proposed selector, and the baselines read oracle VADs of the same
//! audio, so all methods see identical input and the same scored frames.

use headsteer_core::baselines::{oracle_vad, RandomSelector, VadScoreTracker, DEFAULT_LAG_RANGE_S, DEFAULT_VAD_THRESHOLD_DB};
use headsteer_core::beamforming::{run_mpdr, BeamformerOutput, MpdrBeamformer};
use headsteer_core::covariance::DEFAULT_SMOOTHING;
use headsteer_core::pipeline::{first_reliable_frame, run_selector, SIGMA2_FLOOR};
use headsteer_core::selector::{argmax_lowest, SelectorConfig, SelectorState, WeightingMode};
use headsteer_core::stft::{stft_analyze, StftConfig, StftFrameBlock};
use headsteer_scene::render::{mix, render_scene, speech_source, RenderedScene};
use headsteer_scene::layout::build_scene;
use headsteer_scene::scenario::{Method, Scenario};
use headsteer_scene::seeds;
use headsteer_scene::speech::{UtteranceSource, WavCorpus};

use crate::error::{invalid, Result};

/// Renders combination `combo` with `n` competitors.
pub fn render_combo(scenario: &Scenario, corpus: Option<&WavCorpus>, n: usize, combo: u64) -> Result<RenderedScene> {
    let layout = build_scene(scenario, n, combo, corpus.and_then(|c| c.num_talkers()))?;
    let mut source = speech_source(corpus, scenario.sample_rate, layout.combo_seed);
    Ok(render_scene(scenario, &layout, source.as_mut())?)
}

/// Loads the scenario's corpus, if it names one.
pub fn load_corpus(scenario: &Scenario) -> Result<Option<WavCorpus>> {
    scenario
        .corpus
        .as_ref()
        .map(|c| WavCorpus::load(&scenario.resolve(&c.manifest), scenario.sample_rate))
        .transpose()
        .map_err(Into::into)
}

/// Range of the squared correlation over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationRange {
    /// As reported by the selector's diagnostics.
    pub reported_min: f64,
    pub reported_max: f64,
    /// Recomputed from the window sums without clamping.
    pub raw_min: f64,
    pub raw_max: f64,
    /// Number of (frame, channel, bin) values with nonzero sums.
    pub count: usize,
}

pub struct ComboAnalysis {
    pub stft: StftConfig,
    pub n_competing: usize,
    pub combo_seed: u64,
    pub target_channel: usize,
    /// Remote channel `r` carries source `remote_order[r]`; source 0 is the
    /// target.
    pub remote_order: Vec<usize>,
    beam: BeamformerOutput,
    remotes: StftFrameBlock,
    tracker: VadScoreTracker,
}

impl ComboAnalysis {
    pub fn new(scenario: &Scenario, scene: &RenderedScene) -> Result<Self> {
        let stft = StftConfig {
            sample_rate: scene.sample_rate,
            ..StftConfig::default()
        };
        let steering = scene.steering(scenario, &stft)?;
        let ha = stft_analyze(&scene.ha, &stft)?;
        let noise = stft_analyze(&mix(&scene.ha_stems[1..], &scene.ha_noise), &stft)?;
        let mut bf = MpdrBeamformer::with_defaults(steering)?;
        let beam = run_mpdr(&ha, &mut bf, Some(&noise), 1)?;
        let remotes = stft_analyze(&scene.remotes, &stft)?;
        let own = oracle_vad(&scene.own_voice, &stft, DEFAULT_VAD_THRESHOLD_DB)?;
        let channels = (0..scene.num_remotes())
            .map(|r| oracle_vad(&scene.channel_dry(r), &stft, DEFAULT_VAD_THRESHOLD_DB))
            .collect::<headsteer_core::Result<Vec<_>>>()?;
        let max_lag = (DEFAULT_LAG_RANGE_S * stft.frames_per_second()).round() as usize;
        let tracker = VadScoreTracker::new(&own, &channels, max_lag)?;
        Ok(ComboAnalysis {
            stft,
            n_competing: scene.layout.num_competing,
            combo_seed: scene.layout.combo_seed,
            target_channel: scene.target_channel(),
            remote_order: scene.layout.remote_order.clone(),
            beam,
            remotes,
            tracker,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.beam.num_frames
    }

    pub fn num_channels(&self) -> usize {
        self.remotes.num_channels()
    }

    /// `D` for an integration time.
    pub fn window_frames(&self, t_int_s: f64) -> usize {
        headsteer_core::selector::window_frames(t_int_s, &self.stft)
    }

    /// First scored frame for an integration time; identical for every
    /// method.
    pub fn first_scored_frame(&self, t_int_s: f64) -> usize {
        first_reliable_frame(self.window_frames(t_int_s), DEFAULT_SMOOTHING)
    }

    /// Per-frame decisions of `method` over the scored frames.
    pub fn decisions(&self, method: Method, t_int_s: f64) -> Result<Vec<usize>> {
        let d = self.window_frames(t_int_s);
        let first = self.first_scored_frame(t_int_s);
        let nf = self.num_frames();
        if first >= nf {
            return Err(invalid(format!(
                "integration time {t_int_s} s leaves no scored frames in a {nf}-frame scene"
            )));
        }
        Ok(match method {
            Method::Proposed | Method::Optimal => {
                let mode = if method == Method::Proposed {
                    WeightingMode::Approximation
                } else {
                    WeightingMode::Oracle
                };
                let cfg = SelectorConfig::new(t_int_s, &self.stft, mode)?;
                let track = run_selector(&self.beam, &self.remotes, &cfg)?;
                track.decisions[first..].iter().map(|x| x.selected_channel).collect()
            }
            Method::Ncc => (first..nf)
                .map(|l| Ok(argmax_lowest(&self.tracker.ncc_scores(l, d)?)))
                .collect::<headsteer_core::Result<_>>()?,
            Method::Mog => (first..nf)
                .map(|l| Ok(argmax_lowest(&self.tracker.mog_scores(l, d)?)))
                .collect::<headsteer_core::Result<_>>()?,
            Method::Random => {
                let seed = seeds::derive(seeds::derive_named(self.combo_seed, "random"), t_int_s.to_bits());
                let mut rng = RandomSelector::new(seed);
                (first..nf)
                    .map(|_| rng.select(self.num_channels()))
                    .collect::<headsteer_core::Result<_>>()?
            }
        })
    }

    /// Smallest and largest `|S_cross|^2 / (S_rr S_bb)` over every frame,
    /// channel and bin with nonzero sums.
    pub fn correlation_range(&self, t_int_s: f64, mode: WeightingMode) -> Result<CorrelationRange> {
        let cfg = SelectorConfig::new(t_int_s, &self.stft, mode)?;
        let beam = self.beam.with_psd_window(cfg.window_frames)?;
        let r = self.num_channels();
        let kn = beam.num_bins;
        let mut state = SelectorState::new(cfg, r)?;
        let mut sigma = vec![0.0; kn];
        let mut out = CorrelationRange {
            reported_min: f64::INFINITY,
            reported_max: f64::NEG_INFINITY,
            raw_min: f64::INFINITY,
            raw_max: f64::NEG_INFINITY,
            count: 0,
        };
        for l in 0..beam.num_frames {
            let psd = match mode {
                WeightingMode::Approximation => beam.noisy_psd_frame(l),
                WeightingMode::Oracle => beam.noise_psd_frame(l)?,
            };
            for (s, &p) in sigma.iter_mut().zip(psd) {
                *s = p.max(SIGMA2_FLOOR);
            }
            state.push_frame(beam.frame(l), self.remotes.frame(l), &sigma)?;
            for ch in 0..r {
                let reported = state.diagnostics(ch).squared_correlation;
                for k in 0..kn {
                    let rr = state.remote_sum(ch, k);
                    let bb = state.beam_sum(k);
                    if rr > 0.0 && bb > 0.0 {
                        let rho2 = state.cross_sum(ch, k).norm_sqr() / (rr * bb);
                        out.raw_min = out.raw_min.min(rho2);
                        out.raw_max = out.raw_max.max(rho2);
                        out.reported_min = out.reported_min.min(reported[k]);
                        out.reported_max = out.reported_max.max(reported[k]);
                        out.count += 1;
                    }
                }
            }
        }
        Ok(out)
    }
}
