//! Impulse-response set files: a TOML manifest next to mono WAV responses.
//!
//! ```toml
//! schema_version = 1
//! sample_rate = 16000
//!
//! [[entry]]
//! source_id = 0
//! mic_id = 0
//! wav_path = "s0_m0.wav"   # relative to the manifest
//! distance_m = 1.9
//! azimuth_deg = 0.0
//! ```
//!
//! Every `(source_id, mic_id)` pair in the dense grid must be present exactly
//! once; source and mic ids are contiguous from zero.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array::{ratf_from_atf, SteeringBank, TransferFunctionSet};
use crate::wav::{read_wav_at_rate, write_wav, WavAudio, WavFormat};
use crate::{Error, Result};

pub const IR_SET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrEntry {
    pub source_id: usize,
    pub mic_id: usize,
    pub wav_path: PathBuf,
    pub distance_m: f64,
    pub azimuth_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrManifest {
    pub schema_version: u32,
    pub sample_rate: u32,
    #[serde(rename = "entry")]
    pub entries: Vec<IrEntry>,
}

#[derive(Debug, Clone)]
pub struct ImportedIrSet {
    /// Azimuth of each source, degrees.
    pub azimuths_deg: Vec<f64>,
    pub distances_m: Vec<f64>,
    pub transfer: TransferFunctionSet,
}

impl ImportedIrSet {
    pub fn steering_bank(&self, reference_mic: usize) -> Result<SteeringBank> {
        let mut bank = SteeringBank::new();
        for (s, &az) in self.azimuths_deg.iter().enumerate() {
            bank.insert(az, ratf_from_atf(&self.transfer, s, reference_mic)?);
        }
        Ok(bank)
    }
}

fn manifest_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn load_ir_set(manifest_path: &Path, sample_rate: u32, fft_size: usize) -> Result<ImportedIrSet> {
    let text = std::fs::read_to_string(manifest_path)?;
    let manifest: IrManifest =
        toml::from_str(&text).map_err(|e| manifest_err(manifest_path, e.to_string()))?;
    if manifest.schema_version != IR_SET_SCHEMA_VERSION {
        return Err(manifest_err(
            manifest_path,
            format!("unsupported schema_version {}", manifest.schema_version),
        ));
    }
    if manifest.sample_rate != sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: sample_rate,
            found: manifest.sample_rate,
            path: manifest_path.to_path_buf(),
        });
    }
    let num_sources = manifest.entries.iter().map(|e| e.source_id + 1).max().unwrap_or(0);
    let num_mics = manifest.entries.iter().map(|e| e.mic_id + 1).max().unwrap_or(0);
    if num_sources == 0 || manifest.entries.len() != num_sources * num_mics {
        return Err(manifest_err(
            manifest_path,
            format!(
                "expected a dense {num_sources}x{num_mics} grid, found {} entries",
                manifest.entries.len()
            ),
        ));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut irs: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; num_mics]; num_sources];
    let mut azimuths = vec![f64::NAN; num_sources];
    let mut distances = vec![f64::NAN; num_sources];
    for e in &manifest.entries {
        let slot = &mut irs[e.source_id][e.mic_id];
        if slot.is_some() {
            return Err(manifest_err(
                manifest_path,
                format!("duplicate entry source {} mic {}", e.source_id, e.mic_id),
            ));
        }
        let audio = read_wav_at_rate(&base.join(&e.wav_path), sample_rate)?;
        if audio.channels.len() != 1 {
            return Err(manifest_err(
                manifest_path,
                format!("{} is not mono", e.wav_path.display()),
            ));
        }
        *slot = audio.channels.into_iter().next();
        azimuths[e.source_id] = e.azimuth_deg;
        distances[e.source_id] = e.distance_m;
    }
    let irs = irs
        .into_iter()
        .map(|s| s.into_iter().map(Option::unwrap).collect())
        .collect();
    Ok(ImportedIrSet {
        azimuths_deg: azimuths,
        distances_m: distances,
        transfer: TransferFunctionSet::from_impulse_responses(irs, fft_size)?,
    })
}

/// Writes `irs[source][mic]` as WAVs plus a manifest into `dir`.
pub fn write_ir_set(
    dir: &Path,
    sample_rate: u32,
    irs: &[Vec<Vec<f64>>],
    azimuths_deg: &[f64],
    distances_m: &[f64],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (s, source) in irs.iter().enumerate() {
        for (m, ir) in source.iter().enumerate() {
            let name = PathBuf::from(format!("s{s}_m{m}.wav"));
            write_wav(
                &dir.join(&name),
                &WavAudio {
                    sample_rate,
                    channels: vec![ir.clone()],
                },
                WavFormat::Float32,
            )?;
            entries.push(IrEntry {
                source_id: s,
                mic_id: m,
                wav_path: name,
                distance_m: distances_m[s],
                azimuth_deg: azimuths_deg[s],
            });
        }
    }
    let manifest = IrManifest {
        schema_version: IR_SET_SCHEMA_VERSION,
        sample_rate,
        entries,
    };
    let path = dir.join("irset.toml");
    let text = toml::to_string(&manifest).map_err(|e| manifest_err(&path, e.to_string()))?;
    std::fs::write(&path, text)?;
    Ok(path)
}
