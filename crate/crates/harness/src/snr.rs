//! Input and output SNRs from isolated stems.

use headsteer_core::beamforming::MpdrBeamformer;
use headsteer_core::covariance::{Cpsdm, DEFAULT_SMOOTHING};
use headsteer_core::stft::{stft_analyze, StftConfig};
use headsteer_core::C64;
use headsteer_scene::render::{mix, RenderedScene};
use headsteer_scene::scenario::Scenario;
use serde::Serialize;

use crate::error::{invalid, Result};

/// SNRs are capped here so noise-free signals stay finite.
pub const SNR_CAP_DB: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    HaMic,
    Remote,
    HaMpdr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrRow {
    pub kind: SensorKind,
    /// Mic or remote channel index; 0 for the beamformer.
    pub index: usize,
    /// Whether this channel carries the target.
    pub target: bool,
    pub snr_db: f64,
}

/// `10 log10(es / ev)`, capped at [`SNR_CAP_DB`].
pub fn capped_snr_db(es: f64, ev: f64) -> f64 {
    if ev <= 0.0 {
        return if es > 0.0 { SNR_CAP_DB } else { f64::NAN };
    }
    (10.0 * (es / ev).log10()).min(SNR_CAP_DB)
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Target-to-rest SNR at every hearing-aid mic and remote channel, and at
/// the hearing-aid MPDR output (frames after covariance warm-up). In the
/// beam-bank scene the remote channels are the table beams.
pub fn snr_report(scenario: &Scenario, scene: &RenderedScene) -> Result<Vec<SnrRow>> {
    if scene.ha_stems.is_empty() || scene.remote_stems.is_empty() {
        return Err(invalid("scene has no stems"));
    }
    let mut rows = Vec::new();
    let ha_rest = mix(&scene.ha_stems[1..], &scene.ha_noise);
    for (m, rest) in ha_rest.iter().enumerate() {
        rows.push(SnrRow {
            kind: SensorKind::HaMic,
            index: m,
            target: false,
            snr_db: capped_snr_db(energy(&scene.ha_stems[0][m]), energy(rest)),
        });
    }
    let remote_rest = mix(&scene.remote_stems[1..], &scene.remote_noise);
    for (r, rest) in remote_rest.iter().enumerate() {
        rows.push(SnrRow {
            kind: SensorKind::Remote,
            index: r,
            target: r == scene.target_channel(),
            snr_db: capped_snr_db(energy(&scene.remote_stems[0][r]), energy(rest)),
        });
    }
    let stft = StftConfig {
        sample_rate: scene.sample_rate,
        ..StftConfig::default()
    };
    let mixture = stft_analyze(&scene.ha, &stft)?;
    let target = stft_analyze(&scene.ha_stems[0], &stft)?;
    let rest = stft_analyze(&ha_rest, &stft)?;
    let mut bf = MpdrBeamformer::with_defaults(scene.steering(scenario, &stft)?)?;
    let m = mixture.num_channels();
    let warmup = Cpsdm::warmup_frames(DEFAULT_SMOOTHING);
    let (mut es, mut ev) = (0.0, 0.0);
    let out = |w: &[C64], y: &[C64]| w.iter().zip(y).map(|(a, b)| a.conj() * b).sum::<C64>().norm_sqr();
    for l in 0..mixture.num_frames() {
        let w = bf.process_frame(mixture.frame(l))?;
        if l < warmup {
            continue;
        }
        let (s, v) = (target.frame(l), rest.frame(l));
        for k in 0..stft.num_bins() {
            let wk = &w[k * m..(k + 1) * m];
            es += out(wk, &s[k * m..(k + 1) * m]);
            ev += out(wk, &v[k * m..(k + 1) * m]);
        }
    }
    rows.push(SnrRow {
        kind: SensorKind::HaMpdr,
        index: 0,
        target: false,
        snr_db: capped_snr_db(es, ev),
    });
    Ok(rows)
}
