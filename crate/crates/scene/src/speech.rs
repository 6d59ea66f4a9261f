//! Speech stimuli: a synthetic talker model and a WAV corpus reader.
//!
//! The synthetic talker is a source-filter model: a jittered glottal pulse
//! train through three formant resonators for vowels, shaped noise for
//! fricative onsets, syllabic envelopes and short pauses between words. Each
//! talker has its own pitch, vocal-tract scale and speaking rate.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use headsteer_core::wav::read_wav_at_rate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Result, SceneError};
use crate::seeds;

/// RMS every generated segment is scaled to.
pub const SPEECH_RMS: f64 = 0.05;

pub trait UtteranceSource {
    /// Talkers available; `None` for an unbounded generator.
    fn num_talkers(&self) -> Option<usize>;
    fn sample_rate(&self) -> u32;
    /// `len` samples of continuous speech from `talker`. Successive calls
    /// return fresh material.
    fn speech(&mut self, talker: usize, len: usize) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceParams {
    pub f0_hz: f64,
    pub formant_scale: f64,
    /// Syllables per second.
    pub syllable_rate: f64,
}

impl VoiceParams {
    pub fn for_talker(seed: u64, talker: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, talker as u64));
        let high = rng.random_bool(0.5);
        VoiceParams {
            f0_hz: if high { rng.random_range(170.0..240.0) } else { rng.random_range(90.0..140.0) },
            formant_scale: if high { rng.random_range(1.08..1.2) } else { rng.random_range(0.92..1.04) },
            syllable_rate: rng.random_range(3.5..5.5),
        }
    }
}

const VOWELS: [[f64; 3]; 8] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
    [440.0, 1020.0, 2240.0],
    [490.0, 1350.0, 1690.0],
];

/// Two-pole resonator with unit DC gain.
struct Resonator {
    a: f64,
    b1: f64,
    b2: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bandwidth: f64, fs: f64) -> Self {
        let r = (-PI * bandwidth / fs).exp();
        let b1 = 2.0 * r * (2.0 * PI * freq / fs).cos();
        let b2 = -r * r;
        Resonator {
            a: 1.0 - b1 - b2,
            b1,
            b2,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b1 * self.y1 + self.b2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn hann_envelope(n: usize, i: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(n / 2).max(1);
    if i < ramp {
        0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
    } else if i >= n - ramp {
        0.5 - 0.5 * (PI * (n - 1 - i) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

fn vowel(voice: &VoiceParams, rng: &mut ChaCha8Rng, fs: f64, n: usize, f0_start: f64) -> (Vec<f64>, f64) {
    let v = VOWELS[rng.random_range(0..VOWELS.len())];
    let bw = [80.0, 100.0, 150.0];
    let mut res: Vec<Resonator> = v
        .iter()
        .zip(bw)
        .map(|(&f, b)| Resonator::new((f * voice.formant_scale).min(0.45 * fs), b, fs))
        .collect();
    // Pitch glides towards a random nearby target over the vowel.
    let f0_end = (f0_start * rng.random_range(0.88..1.12)).clamp(0.7 * voice.f0_hz, 1.4 * voice.f0_hz);
    let mut out = vec![0.0; n];
    let mut phase = rng.random_range(0.0..1.0);
    let mut prev = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / n.max(1) as f64;
        let f0 = (f0_start + (f0_end - f0_start) * t) * (1.0 + 0.01 * rng.random_range(-1.0..1.0));
        phase += f0 / fs;
        // Glottal flow: a smooth pulse over the open 60% of each period.
        let p = phase.fract();
        let flow = if p < 0.6 { 0.5 - 0.5 * (2.0 * PI * p / 0.6).cos() } else { 0.0 };
        let excitation = flow + 0.02 * rng.random_range(-1.0..1.0);
        let mut y = excitation;
        for r in res.iter_mut() {
            y = r.tick(y);
        }
        // Lip radiation.
        *o = y - prev;
        prev = y;
    }
    (out, f0_end)
}

fn fricative(rng: &mut ChaCha8Rng, fs: f64, n: usize) -> Vec<f64> {
    let mut r = Resonator::new(rng.random_range(2500.0f64..5500.0).min(0.45 * fs), 1500.0, fs);
    let mut prev = 0.0;
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let hp = x - prev;
            prev = x;
            r.tick(hp)
        })
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }
}

/// Synthesises `len` samples of running speech for one voice.
pub fn synth_speech(voice: &VoiceParams, fs: f64, len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len + fs as usize);
    let mut f0 = voice.f0_hz * rng.random_range(0.9..1.1);
    let syl = 1.0 / voice.syllable_rate;
    while out.len() < len {
        let syllables = rng.random_range(1..=4);
        for _ in 0..syllables {
            if rng.random_bool(0.45) {
                let n = (fs * rng.random_range(0.03..0.08)) as usize;
                let mut seg = fricative(&mut rng, fs, n);
                let level = rng.random_range(0.1..0.3);
                let peak = rms(&seg).max(1e-12);
                for (i, s) in seg.iter_mut().enumerate() {
                    *s *= level / peak * hann_envelope(n, i, n / 4);
                }
                out.extend(seg);
            }
            let n = (fs * syl * rng.random_range(0.5..1.0)) as usize;
            let (mut seg, f_end) = vowel(voice, &mut rng, fs, n, f0);
            f0 = f_end;
            let level = rng.random_range(0.6..1.0);
            let peak = rms(&seg).max(1e-12);
            for (i, s) in seg.iter_mut().enumerate() {
                *s *= level / peak * hann_envelope(n, i, n / 3);
            }
            out.extend(seg);
        }
        // Word boundary; phrase boundaries are longer and reset the pitch.
        let pause = if rng.random_bool(0.2) {
            f0 = voice.f0_hz * rng.random_range(0.95..1.15);
            rng.random_range(0.15..0.3)
        } else {
            rng.random_range(0.04..0.12)
        };
        out.extend(std::iter::repeat_n(0.0, (fs * pause) as usize));
    }
    out.truncate(len);
    let ramp = ((0.005 * fs) as usize).max(1);
    for i in 0..ramp.min(len) {
        let g = i as f64 / ramp as f64;
        out[i] *= g;
        out[len - 1 - i] *= g;
    }
    let r = rms(&out);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v *= SPEECH_RMS / r);
    }
    out
}

/// Unbounded synthetic talkers. Talker `t` always has the same voice; each
/// call returns new material.
#[derive(Debug, Clone)]
pub struct SyntheticSpeech {
    sample_rate: u32,
    seed: u64,
    calls: HashMap<usize, u64>,
}

impl SyntheticSpeech {
    pub fn new(sample_rate: u32, seed: u64) -> Self {
        SyntheticSpeech {
            sample_rate,
            seed,
            calls: HashMap::new(),
        }
    }
}

impl UtteranceSource for SyntheticSpeech {
    fn num_talkers(&self) -> Option<usize> {
        None
    }

    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn speech(&mut self, talker: usize, len: usize) -> Result<Vec<f64>> {
        let call = self.calls.entry(talker).or_insert(0);
        let seed = seeds::derive(seeds::derive(self.seed, talker as u64), *call);
        *call += 1;
        let voice = VoiceParams::for_talker(self.seed, talker);
        Ok(synth_speech(&voice, self.sample_rate as f64, len, seed))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusManifest {
    schema_version: u32,
    #[serde(rename = "utterance")]
    utterances: Vec<CorpusEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusEntry {
    talker: usize,
    path: PathBuf,
}

/// Mono WAV utterances grouped by talker, consumed in manifest order.
///
/// ```toml
/// schema_version = 1
/// [[utterance]]
/// talker = 0
/// path = "spk0/u001.wav"
/// ```
#[derive(Debug, Clone)]
pub struct WavCorpus {
    sample_rate: u32,
    talkers: Vec<Vec<Vec<f64>>>,
    next: Vec<usize>,
}

impl WavCorpus {
    pub fn load(manifest: &Path, sample_rate: u32) -> Result<Self> {
        let err = |message: String| SceneError::Scenario {
            path: manifest.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(manifest)
            .map_err(|e| err(format!("cannot read corpus manifest: {e}")))?;
        let m: CorpusManifest = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        if m.schema_version != 1 {
            return Err(err(format!("unsupported schema_version {}", m.schema_version)));
        }
        if m.utterances.is_empty() {
            return Err(SceneError::EmptyCorpus);
        }
        let base = manifest.parent().unwrap_or(Path::new("."));
        let n = m.utterances.iter().map(|u| u.talker + 1).max().unwrap_or(0);
        let mut talkers = vec![Vec::new(); n];
        for u in &m.utterances {
            let audio = read_wav_at_rate(&base.join(&u.path), sample_rate)?;
            if audio.channels.len() != 1 {
                return Err(err(format!("{} is not mono", u.path.display())));
            }
            talkers[u.talker].push(audio.channels.into_iter().next().unwrap_or_default());
        }
        Ok(WavCorpus {
            sample_rate,
            next: vec![0; n],
            talkers,
        })
    }

    /// All samples of one talker, for spectrum estimation.
    pub fn talker_samples(&self, talker: usize) -> impl Iterator<Item = &[f64]> {
        self.talkers.get(talker).into_iter().flatten().map(Vec::as_slice)
    }
}

impl UtteranceSource for WavCorpus {
    fn num_talkers(&self) -> Option<usize> {
        Some(self.talkers.len())
    }

    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn speech(&mut self, talker: usize, len: usize) -> Result<Vec<f64>> {
        let utts = self.talkers.get(talker).ok_or(SceneError::EmptyCorpus)?;
        let fs = self.sample_rate as f64;
        let available: usize = utts[self.next[talker]..].iter().map(Vec::len).sum();
        if available < len {
            return Err(SceneError::CorpusTooShort {
                talker,
                needed_s: len as f64 / fs,
                available_s: available as f64 / fs,
            });
        }
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            let u = &utts[self.next[talker]];
            self.next[talker] += 1;
            out.extend_from_slice(&u[..u.len().min(len - out.len())]);
        }
        Ok(out)
    }
}
