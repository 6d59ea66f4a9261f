//! Turn-taking baselines on oracle voice activity: normalised
//! cross-correlation (NCC) and maximum own-voice/talker disagreement (MOG),
//! plus a uniform random floor.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::stft::StftConfig;
use crate::{Error, Result};

/// Default activity threshold relative to the signal's global RMS.
pub const DEFAULT_VAD_THRESHOLD_DB: f64 = -40.0;
/// Default NCC lag range, seconds either side.
pub const DEFAULT_LAG_RANGE_S: f64 = 2.0;

/// Binary activity per STFT frame.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VadSequence {
    pub values: Vec<bool>,
}

impl VadSequence {
    pub fn new(values: Vec<bool>) -> Self {
        VadSequence { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duty_cycle(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v).count() as f64 / self.values.len() as f64
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["vad"])?;
        for &v in &self.values {
            w.write_record([if v { "1" } else { "0" }])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: &mut dyn Read) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            match rec.get(0).map(str::trim) {
                Some("0") => values.push(false),
                Some("1") => values.push(true),
                other => {
                    return Err(Error::invalid(format!(
                        "VAD row {} is {:?}, expected 0 or 1",
                        i + 1,
                        other
                    )))
                }
            }
        }
        Ok(VadSequence { values })
    }
}

fn db(power: f64) -> f64 {
    10.0 * power.log10()
}

/// Frame `l` (STFT framing) is active when its RMS exceeds the global RMS of
/// the whole signal plus `threshold_db`. A silent signal is all inactive.
pub fn oracle_vad(signal: &[f64], cfg: &StftConfig, threshold_db: f64) -> Result<VadSequence> {
    cfg.validate()?;
    let n = cfg.num_frames(signal.len());
    if signal.is_empty() {
        return Ok(VadSequence::default());
    }
    let global = signal.iter().map(|x| x * x).sum::<f64>() / signal.len() as f64;
    if global <= 0.0 {
        return Ok(VadSequence::new(vec![false; n]));
    }
    let level = db(global) + threshold_db;
    let values = (0..n)
        .map(|l| {
            let frame = &signal[l * cfg.hop..l * cfg.hop + cfg.frame_len];
            let p = frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64;
            p > 0.0 && db(p) > level
        })
        .collect();
    Ok(VadSequence::new(values))
}

/// Lag bound for a window of `window` frames: the configured range, but never
/// more than half the window so every lag keeps at least half the pairs.
pub fn ncc_max_lag(lag_range_frames: usize, window: usize) -> usize {
    lag_range_frames.min(window / 2)
}

/// Pearson correlation from pair counts; `0/0` is defined as 0.
fn pearson(n: u64, s0: u64, sr: u64, sx: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let (s0, sr, sx) = (s0 as f64, sr as f64, sx as f64);
    let var0 = n * s0 - s0 * s0;
    let varr = n * sr - sr * sr;
    if var0 <= 0.0 || varr <= 0.0 {
        return 0.0;
    }
    (n * sx - s0 * sr) / (var0 * varr).sqrt()
}

/// Normalised cross-correlation of two equal-length windows at lag `p`,
/// pairing `v0[j]` with `vr[j + p]` for indices inside the window.
pub fn window_correlation(v0: &[bool], vr: &[bool], p: i64) -> f64 {
    let len = v0.len().min(vr.len()) as i64;
    let (mut n, mut s0, mut sr, mut sx) = (0u64, 0u64, 0u64, 0u64);
    for j in 0..len {
        let q = j + p;
        if q < 0 || q >= len {
            continue;
        }
        let a = v0[j as usize] as u64;
        let b = vr[q as usize] as u64;
        n += 1;
        s0 += a;
        sr += b;
        sx += a * b;
    }
    pearson(n, s0, sr, sx)
}

/// `(1 - min_p R(p)) / 2` over lags `-max_lag..=max_lag`, computed directly.
pub fn ncc_score(v0: &[bool], vr: &[bool], max_lag: usize) -> f64 {
    let m = max_lag as i64;
    let min = (-m..=m)
        .map(|p| window_correlation(v0, vr, p))
        .fold(f64::INFINITY, f64::min);
    (1.0 - min) / 2.0
}

/// Mean squared difference of two binary windows (normalised Hamming distance).
pub fn mog_score(v0: &[bool], vr: &[bool]) -> f64 {
    let n = v0.len().min(vr.len());
    if n == 0 {
        return 0.0;
    }
    v0.iter().zip(vr).filter(|(a, b)| a != b).count() as f64 / n as f64
}

fn window_bounds(len: usize, end_frame: usize, window: usize) -> Result<(usize, usize)> {
    if window == 0 {
        return Err(Error::EmptyWindow);
    }
    if end_frame >= len {
        return Err(Error::invalid(format!(
            "frame {end_frame} beyond sequence of {len} frames"
        )));
    }
    Ok(((end_frame + 1).saturating_sub(window), end_frame + 1))
}

fn check_aligned(v0: &VadSequence, candidates: &[VadSequence]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate channels"));
    }
    if candidates.iter().any(|c| c.len() != v0.len()) {
        return Err(Error::invalid("VAD sequences are not aligned"));
    }
    Ok(())
}

/// NCC decision for the window of `window` frames ending at `end_frame`.
pub fn ncc_select(
    v0: &VadSequence,
    candidates: &[VadSequence],
    end_frame: usize,
    window: usize,
    lag_range_frames: usize,
) -> Result<usize> {
    check_aligned(v0, candidates)?;
    let (lo, hi) = window_bounds(v0.len(), end_frame, window)?;
    let max_lag = ncc_max_lag(lag_range_frames, hi - lo);
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| ncc_score(&v0.values[lo..hi], &c.values[lo..hi], max_lag))
        .collect();
    Ok(crate::selector::argmax_lowest(&scores))
}

/// MOG decision for the window of `window` frames ending at `end_frame`.
pub fn mog_select(
    v0: &VadSequence,
    candidates: &[VadSequence],
    end_frame: usize,
    window: usize,
) -> Result<usize> {
    check_aligned(v0, candidates)?;
    let (lo, hi) = window_bounds(v0.len(), end_frame, window)?;
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| mog_score(&v0.values[lo..hi], &c.values[lo..hi]))
        .collect();
    Ok(crate::selector::argmax_lowest(&scores))
}

fn prefix(v: impl Iterator<Item = bool>) -> Vec<u64> {
    let mut out = vec![0];
    let mut acc = 0;
    for b in v {
        acc += b as u64;
        out.push(acc);
    }
    out
}

/// Prefix-sum evaluation of NCC and MOG scores for every window position,
/// giving the same values as [`ncc_score`] and [`mog_score`].
#[derive(Debug, Clone)]
pub struct VadScoreTracker {
    len: usize,
    max_lag: usize,
    p0: Vec<u64>,
    /// Per candidate: prefix of activity.
    pr: Vec<Vec<u64>>,
    /// Per candidate and lag offset `p + max_lag`: prefix over `j` of
    /// `v0[j] & vr[j + p]` (zero where `j + p` is out of range).
    px: Vec<Vec<Vec<u64>>>,
    /// Per candidate: prefix of disagreements.
    pd: Vec<Vec<u64>>,
}

impl VadScoreTracker {
    pub fn new(v0: &VadSequence, candidates: &[VadSequence], max_lag: usize) -> Result<Self> {
        check_aligned(v0, candidates)?;
        let len = v0.len();
        let v = &v0.values;
        let p0 = prefix(v.iter().copied());
        let pr = candidates.iter().map(|c| prefix(c.values.iter().copied())).collect();
        let pd = candidates
            .iter()
            .map(|c| prefix(v.iter().zip(&c.values).map(|(a, b)| a != b)))
            .collect();
        let m = max_lag as i64;
        let px = candidates
            .iter()
            .map(|c| {
                (-m..=m)
                    .map(|p| {
                        prefix((0..len as i64).map(|j| {
                            let q = j + p;
                            q >= 0 && (q as usize) < len && v[j as usize] && c.values[q as usize]
                        }))
                    })
                    .collect()
            })
            .collect();
        Ok(VadScoreTracker {
            len,
            max_lag,
            p0,
            pr,
            px,
            pd,
        })
    }

    pub fn num_candidates(&self) -> usize {
        self.pr.len()
    }

    /// NCC scores for the window ending at `end_frame`; lags are limited to
    /// `min(max_lag, window / 2)` as in [`ncc_select`].
    pub fn ncc_scores(&self, end_frame: usize, window: usize) -> Result<Vec<f64>> {
        let (lo, hi) = window_bounds(self.len, end_frame, window)?;
        let lag = ncc_max_lag(self.max_lag, hi - lo) as i64;
        let sum = |p: &[u64], a: usize, b: usize| p[b] - p[a];
        Ok((0..self.num_candidates())
            .map(|r| {
                let mut min = f64::INFINITY;
                for p in -lag..=lag {
                    // j ranges over [a, b) with j and j + p both in [lo, hi).
                    let a = (lo as i64).max(lo as i64 - p) as usize;
                    let b = (hi as i64).min(hi as i64 - p) as usize;
                    let (n, s0, sr, sx) = if b > a {
                        let ar = (a as i64 + p) as usize;
                        let br = (b as i64 + p) as usize;
                        (
                            (b - a) as u64,
                            sum(&self.p0, a, b),
                            sum(&self.pr[r], ar, br),
                            sum(&self.px[r][(p + self.max_lag as i64) as usize], a, b),
                        )
                    } else {
                        (0, 0, 0, 0)
                    };
                    min = min.min(pearson(n, s0, sr, sx));
                }
                (1.0 - min) / 2.0
            })
            .collect())
    }

    pub fn mog_scores(&self, end_frame: usize, window: usize) -> Result<Vec<f64>> {
        let (lo, hi) = window_bounds(self.len, end_frame, window)?;
        Ok(self
            .pd
            .iter()
            .map(|p| (p[hi] - p[lo]) as f64 / (hi - lo) as f64)
            .collect())
    }
}

/// Uniformly random channel choice; the chance-level floor `P_C = 1/R`.
#[derive(Debug, Clone)]
pub struct RandomSelector {
    rng: ChaCha8Rng,
}

impl RandomSelector {
    pub fn new(seed: u64) -> Self {
        RandomSelector {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn select(&mut self, num_channels: usize) -> Result<usize> {
        if num_channels == 0 {
            return Err(Error::invalid("no candidate channels"));
        }
        Ok(self.rng.random_range(0..num_channels))
    }
}

pub fn random_select(num_channels: usize, seed: u64) -> Result<usize> {
    RandomSelector::new(seed).select(num_channels)
}
