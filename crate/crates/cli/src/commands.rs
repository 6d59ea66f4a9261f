use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use headsteer_core::array::distance;
use headsteer_core::beamforming::{run_mpdr, MpdrBeamformer};
use headsteer_core::irset::load_ir_set;
use headsteer_core::pipeline::run_selector;
use headsteer_core::selector::{write_decision_log, SelectorConfig, WeightingMode};
use headsteer_core::stft::{stft_analyze, StftConfig};
use headsteer_core::wav::{read_wav, read_wav_at_rate, write_wav, WavAudio, WavFormat};
use headsteer_harness::analysis::{load_corpus, render_combo};
use headsteer_harness::sweep::{run_sweep, write_results, SweepOptions};
use headsteer_scene::export::export_scene;
use headsteer_scene::room::{image_rir, peak_index, schroeder_t60};
use headsteer_scene::scenario::{RoomConfig, Scenario, SceneMode, SteeringConfig, SweepConfig};

use crate::error::{data, usage, Result};
use crate::{ExperimentArgs, RenderArgs, RirArgs, SelectArgs, ValidateArgs};

fn position(v: &[f64], name: &str) -> Result<[f64; 3]> {
    <[f64; 3]>::try_from(v).map_err(|_| usage(format!("--{name} needs three comma-separated values")))
}

pub fn rir(a: &RirArgs) -> Result<()> {
    let dims = position(&a.dims, "dims")?;
    let src = position(&a.src, "src")?;
    let mic = position(&a.mic, "mic")?;
    let room = RoomConfig {
        dims,
        t60: Some(a.t60),
        absorption: None,
        max_image_order: a.max_order,
        speed_of_sound: a.speed_of_sound,
        rir_length_s: a.length_s,
    };
    let spec = room.spec()?;
    let fs = a.fs as f64;
    let len = (room.rir_length_s() * fs).ceil() as usize;
    let ir = image_rir(&spec, &src, &mic, fs, len)?;
    write_wav(&a.out, &WavAudio { sample_rate: a.fs, channels: vec![ir.clone()] }, WavFormat::Float32)?;
    let delay_s = distance(&src, &mic) / a.speed_of_sound;
    println!("direct_path_delay_s={delay_s:.6}");
    println!("direct_path_delay_samples={:.2}", delay_s * fs);
    println!("peak_sample={}", peak_index(&ir));
    match schroeder_t60(&ir, fs) {
        Ok(t) => println!("t60_s={t:.3}"),
        Err(_) => println!("t60_s=none"),
    }
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Ok(Scenario::load(path)?)
}

/// Files a scenario refers to must exist before anything is computed.
fn check_referenced_files(s: &Scenario) -> Result<()> {
    if let Some(c) = &s.corpus {
        let p = s.resolve(&c.manifest);
        if !p.is_file() {
            return Err(data(format!(
                "corpus manifest {} not found (corpus.manifest resolves against the scenario's directory)",
                p.display()
            )));
        }
    }
    if let SteeringConfig::IrSet { path, .. } = &s.steering {
        let p = s.resolve(path);
        if !p.is_file() {
            return Err(data(format!(
                "IR set manifest {} not found (steering.path resolves against the scenario's directory)",
                p.display()
            )));
        }
    }
    Ok(())
}

pub fn render(a: &RenderArgs, verbose: u8) -> Result<()> {
    let mut s = load_scenario(&a.scenario)?;
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    check_referenced_files(&s)?;
    let n = a.n.unwrap_or(s.sweep.n_competing[0]);
    let corpus = load_corpus(&s)?;
    if verbose > 0 {
        eprintln!("rendering N={n} combo={} seed={}", a.combo, s.seed);
    }
    let scene = render_combo(&s, corpus.as_ref(), n, a.combo)?;
    let manifest = export_scene(&scene, &a.out)?;
    println!("files={}", manifest.files.len());
    println!("target_channel={}", scene.target_channel());
    println!("out={}", a.out.display());
    Ok(())
}

fn read_truth(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    v.get("target_channel")
        .and_then(|t| t.as_u64())
        .map(|t| t as usize)
        .ok_or_else(|| data(format!("{}: no target_channel", path.display())))
}

pub fn select(a: &SelectArgs, verbose: u8) -> Result<()> {
    let ir_set = a
        .ir_set
        .as_ref()
        .ok_or_else(|| data("missing steering: pass --ir-set with the target direction's impulse responses"))?;
    if !(a.t_int > 0.0) || !a.t_int.is_finite() {
        return Err(usage("--t-int must be positive"));
    }
    let ha = read_wav(&a.ha)?;
    let fs = ha.sample_rate;
    let mut remote_channels = Vec::new();
    for p in &a.remotes {
        remote_channels.extend(read_wav_at_rate(p, fs)?.channels);
    }
    let len = ha.num_samples();
    if remote_channels.iter().any(|c| c.len() != len) {
        return Err(data(format!("remote files must have the hearing-aid file's length ({len} samples)")));
    }
    let stft = StftConfig { sample_rate: fs, ..StftConfig::default() };
    let set = load_ir_set(ir_set, fs, stft.fft_size)?;
    let steering = set
        .steering_bank(a.reference_mic)?
        .nearest(a.azimuth, a.tolerance)?
        .clone();
    if steering.num_mics() != ha.channels.len() {
        return Err(data(format!(
            "IR set has {} mics, {} has {}",
            steering.num_mics(),
            a.ha.display(),
            ha.channels.len()
        )));
    }
    if verbose > 0 {
        eprintln!("{} hearing-aid mics, {} remote channels, {fs} Hz", ha.channels.len(), remote_channels.len());
    }
    let ha_block = stft_analyze(&ha.channels, &stft)?;
    let remotes = stft_analyze(&remote_channels, &stft)?;
    let mut bf = MpdrBeamformer::with_defaults(steering)?;
    let beam = run_mpdr(&ha_block, &mut bf, None, 1)?;
    let cfg = SelectorConfig::new(a.t_int, &stft, WeightingMode::Approximation)?;
    let track = run_selector(&beam, &remotes, &cfg)?;
    let reliable = track.reliable();
    if reliable.is_empty() {
        return Err(data(format!(
            "recording is too short for --t-int {} s: no frame has a full window",
            a.t_int
        )));
    }
    let mut out = BufWriter::new(File::create(&a.out).map_err(|e| data(format!("{}: {e}", a.out.display())))?);
    write_decision_log(&mut out, reliable)?;
    let mut counts = BTreeMap::new();
    for d in reliable {
        *counts.entry(d.selected_channel).or_insert(0usize) += 1;
    }
    // Ties go to the lower channel.
    let modal = counts.iter().max_by(|x, y| x.1.cmp(y.1).then(y.0.cmp(x.0))).map(|(c, _)| *c).unwrap_or(0);
    println!("frames={}", reliable.len());
    println!("excluded_warmup_frames={}", track.first_reliable_frame);
    println!("modal_channel={modal}");
    let truth = a.truth.clone().or_else(|| {
        let p = a.ha.parent().unwrap_or(Path::new(".")).join("truth.json");
        p.is_file().then_some(p)
    });
    if let Some(p) = truth {
        let target = read_truth(&p)?;
        let correct = reliable.iter().filter(|d| d.selected_channel == target).count();
        println!("target_channel={target}");
        println!("p_c={:.6}", correct as f64 / reliable.len() as f64);
    }
    Ok(())
}

fn apply_overrides(s: &mut Scenario, a: &ExperimentArgs) {
    if a.paper_scale {
        let methods = s.sweep.methods.clone();
        s.sweep = SweepConfig { methods, ..SweepConfig::paper_scale() };
        let max = s.max_competing();
        s.sweep.n_competing.retain(|&n| n <= max);
    }
    if let Some(seed) = a.seed {
        s.seed = seed;
    }
    if let Some(t) = &a.t_int {
        s.sweep.t_int_s = t.clone();
    }
    if let Some(m) = &a.methods {
        s.sweep.methods = m.clone();
    }
    if let Some(n) = &a.n_competing {
        s.sweep.n_competing = n.clone();
    }
    if let Some(c) = a.combos {
        s.sweep.combos = c;
    }
}

pub fn experiment(a: &ExperimentArgs, verbose: u8) -> Result<()> {
    let mut s = load_scenario(&a.scenario)?;
    apply_overrides(&mut s, a);
    s.validate()?;
    check_referenced_files(&s)?;
    if a.workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }
    let corpus = load_corpus(&s)?;
    if verbose > 0 {
        eprintln!(
            "sweep: N {:?}, T_int {:?} s, {} combos, seed {}",
            s.sweep.n_competing, s.sweep.t_int_s, s.sweep.combos, s.seed
        );
    }
    let result = run_sweep(&s, corpus.as_ref(), &SweepOptions { workers: a.workers })?;
    let manifest = write_results(&result, &s, &a.out)?;
    if a.decision_logs {
        result.write_decision_logs(&a.out.join("decisions"))?;
    }
    println!("method,n_competing,t_int_s,p_c_mean,p_c_std");
    for r in &result.summaries {
        println!("{},{},{},{:.4},{:.4}", r.method.name(), r.n_competing, r.t_int_s, r.p_c_mean, r.p_c_std);
    }
    if verbose > 0 {
        eprintln!("results sha256 {}", manifest.results_sha256);
    }
    Ok(())
}

pub fn validate(a: &ValidateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    check_referenced_files(&s)?;
    let mode = match s.mode {
        SceneMode::CloseTalkingRms => "close_talking_rms",
        SceneMode::TableBeamBank => "table_beam_bank",
    };
    let methods: Vec<&str> = s.sweep.methods.iter().map(|m| m.name()).collect();
    println!("{}: valid", a.scenario.display());
    println!("mode={mode} seed={} duration_s={} max_competing={}", s.seed, s.duration_s, s.max_competing());
    println!(
        "sweep: n_competing={:?} t_int_s={:?} combos={} methods={}",
        s.sweep.n_competing,
        s.sweep.t_int_s,
        s.sweep.combos,
        methods.join(",")
    );
    Ok(())
}
