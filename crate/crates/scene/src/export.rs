//! Writes a rendered scene to a directory:
//!
//! ```text
//! ha.wav              hearing-aid mixture (M channels)
//! remotes.wav         remote channels (R channels)
//! own_voice.wav       dry wearer speech
//! dry.wav             dry talkers, target first
//! stems/ha_talker{i}.wav, stems/ha_noise.wav
//! stems/remote_talker{i}.wav, stems/remote_noise.wav
//! target_irs/irset.toml  target-to-hearing-aid responses
//! truth.json          layout and target channel
//! manifest.json       SHA-256 of every file above
//! ```

use std::path::{Path, PathBuf};

use headsteer_core::irset::write_ir_set;
use headsteer_core::wav::{read_wav, write_wav, WavAudio, WavFormat};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::render::RenderedScene;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderManifest {
    pub files: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn wav(dir: &Path, name: &str, fs: u32, channels: Vec<Vec<f64>>, files: &mut Vec<PathBuf>) -> Result<()> {
    let rel = PathBuf::from(name);
    let path = dir.join(&rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_wav(&path, &WavAudio { sample_rate: fs, channels }, WavFormat::Float32)?;
    files.push(rel);
    Ok(())
}

/// Writes all files and returns the manifest (also written to
/// `manifest.json`).
pub fn export_scene(scene: &RenderedScene, dir: &Path) -> Result<RenderManifest> {
    std::fs::create_dir_all(dir)?;
    let fs = scene.sample_rate;
    let mut files = Vec::new();
    wav(dir, "ha.wav", fs, scene.ha.clone(), &mut files)?;
    wav(dir, "remotes.wav", fs, scene.remotes.clone(), &mut files)?;
    wav(dir, "own_voice.wav", fs, vec![scene.own_voice.clone()], &mut files)?;
    wav(dir, "dry.wav", fs, scene.dry.clone(), &mut files)?;
    for (i, s) in scene.ha_stems.iter().enumerate() {
        wav(dir, &format!("stems/ha_talker{i}.wav"), fs, s.clone(), &mut files)?;
    }
    wav(dir, "stems/ha_noise.wav", fs, scene.ha_noise.clone(), &mut files)?;
    for (i, s) in scene.remote_stems.iter().enumerate() {
        wav(dir, &format!("stems/remote_talker{i}.wav"), fs, s.clone(), &mut files)?;
    }
    wav(dir, "stems/remote_noise.wav", fs, scene.remote_noise.clone(), &mut files)?;
    let t = &scene.layout.talkers[0];
    let d = headsteer_core::array::distance(&t.position, &scene.layout.head);
    let ir = write_ir_set(&dir.join("target_irs"), fs, &[scene.target_irs.clone()], &[t.azimuth_deg], &[d])?;
    let ir_dir = ir.parent().expect("ir set directory").to_path_buf();
    for entry in std::fs::read_dir(&ir_dir)? {
        let name = entry?.file_name();
        files.push(PathBuf::from("target_irs").join(name));
    }
    let truth = serde_json::to_string_pretty(&scene.truth())?;
    std::fs::write(dir.join("truth.json"), truth)?;
    files.push(PathBuf::from("truth.json"));
    files.sort();
    let manifest = RenderManifest {
        files: files
            .iter()
            .map(|p| {
                Ok(FileHash {
                    path: p.to_string_lossy().replace('\\', "/"),
                    sha256: sha256_file(&dir.join(p))?,
                })
            })
            .collect::<Result<_>>()?,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Largest deviation between each exported mixture and the sum of its
/// exported stems, after re-reading the files.
pub fn stem_sum_error(dir: &Path) -> Result<f64> {
    let read = |name: &str| -> Result<Vec<Vec<f64>>> { Ok(read_wav(&dir.join(name))?.channels) };
    let mut worst: f64 = 0.0;
    for (mixture, prefix, noise) in [
        ("ha.wav", "stems/ha_talker", "stems/ha_noise.wav"),
        ("remotes.wav", "stems/remote_talker", "stems/remote_noise.wav"),
    ] {
        let mix = read(mixture)?;
        let mut sum = read(noise)?;
        let mut i = 0;
        while dir.join(format!("{prefix}{i}.wav")).exists() {
            let stem = read(&format!("{prefix}{i}.wav"))?;
            if stem.len() != sum.len() {
                return Err(invalid(format!("{prefix}{i}.wav has the wrong channel count")));
            }
            for (s, c) in sum.iter_mut().zip(&stem) {
                for (a, b) in s.iter_mut().zip(c) {
                    *a += b;
                }
            }
            i += 1;
        }
        if i == 0 || mix.len() != sum.len() {
            return Err(invalid(format!("stems for {mixture} are missing")));
        }
        for (m, s) in mix.iter().zip(&sum) {
            for (a, b) in m.iter().zip(s) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}
