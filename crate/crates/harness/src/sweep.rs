//! Sweeps over (N, T_int, combination) and the results table.
//!
//! Each (N, combination) is rendered once and every enabled method is scored
//! on it for every integration time. Combinations run in parallel; rows are
//! assembled in grid order so the CSV is identical for any worker count.

use std::io::Write;
use std::path::Path;

use headsteer_scene::scenario::{Method, Scenario};
use headsteer_scene::speech::WavCorpus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{render_combo, ComboAnalysis};
use crate::error::{invalid, Result};
use crate::metrics::{compute_pc, compute_psr, mean_std};

/// Results CSV columns, in order.
pub const CSV_COLUMNS: [&str; 15] = [
    "kind",
    "method",
    "n_competing",
    "t_int_s",
    "combo",
    "combo_seed",
    "num_channels",
    "target_channel",
    "frames_counted",
    "excluded_warmup_frames",
    "p_c",
    "p_c_std",
    "p_s",
    "p_s_source",
    "ps_max_other",
];

/// One method on one rendered combination at one integration time.
#[derive(Debug, Clone, PartialEq)]
pub struct ComboRow {
    pub method: Method,
    pub n_competing: usize,
    pub t_int_s: f64,
    pub combo: u64,
    pub combo_seed: u64,
    pub num_channels: usize,
    pub target_channel: usize,
    pub frames_counted: usize,
    pub excluded_warmup_frames: usize,
    pub p_c: f64,
    /// Selection probability per remote channel.
    pub p_s: Vec<f64>,
    /// Selection probability per source (target first), independent of the
    /// per-combination channel shuffle.
    pub p_s_source: Vec<f64>,
    /// Largest selection probability among the non-target channels.
    pub ps_max_other: f64,
    /// Selected channel per scored frame, starting at
    /// `excluded_warmup_frames`.
    pub decisions: Vec<usize>,
}

/// Mean and spread of one (method, N, T_int) cell across combinations.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub n_competing: usize,
    pub t_int_s: f64,
    pub combos: usize,
    pub num_channels: usize,
    pub frames_counted: usize,
    pub excluded_warmup_frames: usize,
    pub p_c_mean: f64,
    pub p_c_std: f64,
    pub p_s_source_mean: Vec<f64>,
    pub ps_max_other_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub combos: Vec<ComboRow>,
    pub summaries: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

pub fn score_combo(analysis: &ComboAnalysis, combo: u64, method: Method, t_int_s: f64) -> Result<ComboRow> {
    let decisions = analysis.decisions(method, t_int_s)?;
    let r = analysis.num_channels();
    let truth = analysis.target_channel;
    let p_s = compute_psr(&decisions, r)?;
    let mut p_s_source = vec![0.0; r];
    for (ch, &src) in analysis.remote_order.iter().enumerate() {
        p_s_source[src] = p_s[ch];
    }
    let ps_max_other = p_s
        .iter()
        .enumerate()
        .filter(|&(ch, _)| ch != truth)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    Ok(ComboRow {
        method,
        n_competing: analysis.n_competing,
        t_int_s,
        combo,
        combo_seed: analysis.combo_seed,
        num_channels: r,
        target_channel: truth,
        frames_counted: decisions.len(),
        excluded_warmup_frames: analysis.first_scored_frame(t_int_s),
        p_c: compute_pc(&decisions, truth)?,
        p_s,
        p_s_source,
        ps_max_other,
        decisions,
    })
}

/// Called once per rendered combination with `(n, combo, analysis)`.
pub type Inspector<'a> = &'a (dyn Fn(usize, u64, &ComboAnalysis) -> Result<()> + Sync);

/// Renders and scores one (N, combination) for every T_int and method.
pub fn evaluate_combo(
    scenario: &Scenario,
    corpus: Option<&WavCorpus>,
    n: usize,
    combo: u64,
    inspect: Option<Inspector<'_>>,
) -> Result<Vec<ComboRow>> {
    let scene = render_combo(scenario, corpus, n, combo)?;
    let analysis = ComboAnalysis::new(scenario, &scene)?;
    drop(scene);
    if let Some(f) = inspect {
        f(n, combo, &analysis)?;
    }
    let mut rows = Vec::new();
    for &t in &scenario.sweep.t_int_s {
        for &m in &scenario.sweep.methods {
            rows.push(score_combo(&analysis, combo, m, t)?);
        }
    }
    Ok(rows)
}

/// Aggregates combination rows that share (method, N, T_int).
pub fn summarize(rows: &[&ComboRow]) -> Result<SummaryRow> {
    let first = rows.first().ok_or_else(|| invalid("no rows to summarise"))?;
    if rows
        .iter()
        .any(|r| r.method != first.method || r.n_competing != first.n_competing || r.t_int_s != first.t_int_s)
    {
        return Err(invalid("rows belong to different cells"));
    }
    let pc: Vec<f64> = rows.iter().map(|r| r.p_c).collect();
    let (p_c_mean, p_c_std) = mean_std(&pc);
    let p_s_source_mean = (0..first.num_channels)
        .map(|s| mean_std(&rows.iter().map(|r| r.p_s_source[s]).collect::<Vec<_>>()).0)
        .collect();
    let other: Vec<f64> = rows.iter().map(|r| r.ps_max_other).collect();
    Ok(SummaryRow {
        method: first.method,
        n_competing: first.n_competing,
        t_int_s: first.t_int_s,
        combos: rows.len(),
        num_channels: first.num_channels,
        frames_counted: first.frames_counted,
        excluded_warmup_frames: first.excluded_warmup_frames,
        p_c_mean,
        p_c_std,
        p_s_source_mean,
        ps_max_other_mean: mean_std(&other).0,
    })
}

/// Runs the scenario's sweep grid.
pub fn run_sweep(scenario: &Scenario, corpus: Option<&WavCorpus>, options: &SweepOptions) -> Result<ExperimentResult> {
    run_sweep_with(scenario, corpus, options, None)
}

/// [`run_sweep`], handing every combination's analysis to `inspect` too.
pub fn run_sweep_with(
    scenario: &Scenario,
    corpus: Option<&WavCorpus>,
    options: &SweepOptions,
    inspect: Option<Inspector<'_>>,
) -> Result<ExperimentResult> {
    scenario.validate()?;
    let sweep = &scenario.sweep;
    let dup = |n: usize, uniq: usize| n != uniq;
    let mut t = sweep.t_int_s.clone();
    t.sort_by(f64::total_cmp);
    t.dedup();
    let mut ns = sweep.n_competing.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut ms: Vec<&str> = sweep.methods.iter().map(|m| m.name()).collect();
    ms.sort_unstable();
    ms.dedup();
    if dup(sweep.t_int_s.len(), t.len()) || dup(sweep.n_competing.len(), ns.len()) || dup(sweep.methods.len(), ms.len()) {
        return Err(invalid("sweep lists a value of N, T_int or method more than once"));
    }
    let jobs: Vec<(usize, u64)> = sweep
        .n_competing
        .iter()
        .flat_map(|&n| (0..sweep.combos as u64).map(move |c| (n, c)))
        .collect();
    let run = || -> Result<Vec<Vec<ComboRow>>> {
        jobs.par_iter()
            .map(|&(n, c)| evaluate_combo(scenario, corpus, n, c, inspect))
            .collect()
    };
    let per_job = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let all: Vec<ComboRow> = per_job.into_iter().flatten().collect();
    let mut result = ExperimentResult::default();
    for &n in &sweep.n_competing {
        for &t in &sweep.t_int_s {
            for &m in &sweep.methods {
                let cell: Vec<&ComboRow> = all
                    .iter()
                    .filter(|r| r.n_competing == n && r.t_int_s == t && r.method == m)
                    .collect();
                result.summaries.push(summarize(&cell)?);
                result.combos.extend(cell.into_iter().cloned());
            }
        }
    }
    Ok(result)
}

impl ExperimentResult {
    pub fn summary(&self, method: Method, n: usize, t_int_s: f64) -> Option<&SummaryRow> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.n_competing == n && s.t_int_s == t_int_s)
    }

    pub fn cell(&self, method: Method, n: usize, t_int_s: f64) -> Vec<&ComboRow> {
        self.combos
            .iter()
            .filter(|r| r.method == method && r.n_competing == n && r.t_int_s == t_int_s)
            .collect()
    }

    /// Writes the results table: per cell, the combination rows followed by
    /// the summary row.
    pub fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_COLUMNS)?;
        for s in &self.summaries {
            for r in self.cell(s.method, s.n_competing, s.t_int_s) {
                w.write_record([
                    "combo".to_string(),
                    r.method.name().into(),
                    r.n_competing.to_string(),
                    r.t_int_s.to_string(),
                    r.combo.to_string(),
                    r.combo_seed.to_string(),
                    r.num_channels.to_string(),
                    r.target_channel.to_string(),
                    r.frames_counted.to_string(),
                    r.excluded_warmup_frames.to_string(),
                    r.p_c.to_string(),
                    String::new(),
                    join(&r.p_s),
                    join(&r.p_s_source),
                    r.ps_max_other.to_string(),
                ])?;
            }
            w.write_record([
                "summary".to_string(),
                s.method.name().into(),
                s.n_competing.to_string(),
                s.t_int_s.to_string(),
                String::new(),
                String::new(),
                s.num_channels.to_string(),
                String::new(),
                s.frames_counted.to_string(),
                s.excluded_warmup_frames.to_string(),
                s.p_c_mean.to_string(),
                s.p_c_std.to_string(),
                String::new(),
                join(&s.p_s_source_mean),
                s.ps_max_other_mean.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
    }

    /// One `frame_index,selected_channel` file per combination row.
    pub fn write_decision_logs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for r in &self.combos {
            let name = format!("{}_n{}_t{}_c{}.csv", r.method.name(), r.n_competing, r.t_int_s, r.combo);
            let mut w = csv::Writer::from_path(dir.join(name))?;
            w.write_record(["frame_index", "selected_channel"])?;
            for (i, c) in r.decisions.iter().enumerate() {
                w.write_record([(r.excluded_warmup_frames + i).to_string(), c.to_string()])?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Provenance of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub seed: u64,
    pub scenario_sha256: String,
    pub results_sha256: String,
    pub n_competing: Vec<usize>,
    pub t_int_s: Vec<f64>,
    pub combos: usize,
    pub methods: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(scenario: &Scenario, csv: &str) -> Self {
        RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: scenario.seed,
            scenario_sha256: sha256_hex(scenario.to_toml().as_bytes()),
            results_sha256: sha256_hex(csv.as_bytes()),
            n_competing: scenario.sweep.n_competing.clone(),
            t_int_s: scenario.sweep.t_int_s.clone(),
            combos: scenario.sweep.combos,
            methods: scenario.sweep.methods.iter().map(|m| m.name().to_string()).collect(),
        }
    }
}

/// Writes `results.csv` and `manifest.json` into `dir`.
pub fn write_results(result: &ExperimentResult, scenario: &Scenario, dir: &Path) -> Result<RunManifest> {
    std::fs::create_dir_all(dir)?;
    let csv = result.to_csv_string()?;
    std::fs::write(dir.join("results.csv"), &csv)?;
    let manifest = RunManifest::new(scenario, &csv);
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
