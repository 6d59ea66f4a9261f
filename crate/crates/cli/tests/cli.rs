use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use headsteer_core::wav::{read_wav, write_wav, WavAudio, WavFormat};
use headsteer_scene::export::stem_sum_error;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_headsteer"));
    for var in ["SEED", "T_INT", "METHODS", "N_COMPETING", "COMBOS", "WORKERS", "PAPER_SCALE"] {
        c.env_remove(format!("HEADSTEER_{var}"));
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// `key=value` from the command's stdout.
fn value(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} in {}", stdout(o)))
}

const DESK: &str = r#"
schema_version = 1
mode = "close_talking_rms"
seed = 3
duration_s = DURATION
[room]
dims = [7.0, 6.0, 3.0]
t60 = 0.25
[sweep]
n_competing = [2]
t_int_s = [0.5]
combos = 2
methods = ["proposed", "ncc", "mog", "random"]
"#;

fn scenario(dir: &Path, name: &str, duration_s: f64, extra: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, DESK.replace("DURATION", &format!("{duration_s:.1}")) + extra).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// One 30 s render shared by the select tests.
fn rendered() -> &'static Path {
    static DIR: OnceLock<TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let sc = scenario(dir.path(), "scene.toml", 30.0, "");
        let out = dir.path().join("render");
        let o = run(&["render", "--scenario", s(&sc), "--n", "2", "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        dir
    })
    .path()
    .join("render")
    .leak()
}

#[test]
fn help_succeeds_and_bad_usage_exits_one() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["validate"]).status.code(), Some(1));
    assert_eq!(run(&["rir", "--dims", "5,4", "--src", "1,1,1", "--mic", "2,2,1", "--out", "x.wav"]).status.code(), Some(1));
}

#[test]
fn validate_reports_schema_problems() {
    let dir = tempfile::tempdir().unwrap();
    let good = scenario(dir.path(), "good.toml", 30.0, "");
    let o = run(&["validate", "--scenario", s(&good)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("valid"));

    let unknown = scenario(dir.path(), "unknown.toml", 30.0, "\n[noise]\nsnr = 3.0\n");
    let o = run(&["validate", "--scenario", s(&unknown)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown field `snr`"), "{}", stderr(&o));

    let too_many = dir.path().join("range.toml");
    let text = std::fs::read_to_string(&good).unwrap().replace("n_competing = [2]", "n_competing = [16]");
    std::fs::write(&too_many, text).unwrap();
    let o = run(&["validate", "--scenario", s(&too_many)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("1..=15") && err.contains("16 positions"), "{err}");

    let missing = run(&["validate", "--scenario", s(&dir.path().join("nope.toml"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn rir_reports_delay_and_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.wav");
    let o = run(&["rir", "--dims", "10,10,5", "--src", "3,5,1.5", "--mic", "5,5,1.5", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let delay: f64 = value(&o, "direct_path_delay_s").parse().unwrap();
    assert!((delay - 2.0 / 343.0).abs() < 1.0 / 16_000.0);
    let peak: f64 = value(&o, "peak_sample").parse().unwrap();
    assert!((peak - (16_000.0 * 2.0 / 343.0_f64).round()).abs() <= 1.0);
    let ir = read_wav(&out).unwrap();
    assert_eq!(ir.channels.len(), 1);
    assert_eq!(ir.channels[0].iter().cloned().fold(0.0, f64::max), ir.channels[0][peak as usize]);

    let out = dir.path().join("b.wav");
    let o = run(&["rir", "--dims", "10,8,5", "--t60", "0.4", "--src", "2,5,1.5", "--mic", "6,3,1.2", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t60: f64 = value(&o, "t60_s").parse().unwrap();
    assert!((t60 - 0.4).abs() <= 0.08, "{t60}");

    let o = run(&["rir", "--dims", "10,10,5", "--src", "3,5,1.5", "--mic", "12,5,1.5", "--out", s(&dir.path().join("c.wav"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("inside the room"), "{}", stderr(&o));
}

#[test]
fn render_is_reproducible_and_stems_sum() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "scene.toml", 5.0, "");
    let render = |out: &str, seed: &str| {
        let out = dir.path().join(out);
        let o = run(&["render", "--scenario", s(&sc), "--seed", seed, "--out", s(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out.join("manifest.json")).unwrap()
    };
    let a = render("a", "7");
    let b = render("b", "7");
    let c = render("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(stem_sum_error(&dir.path().join("a")).unwrap() < 1e-5);
    let truth: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/truth.json")).unwrap()).unwrap();
    assert!(truth["target_channel"].as_u64().unwrap() < 3);
}

#[test]
fn render_names_a_missing_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "scene.toml", 5.0, "\n[corpus]\nmanifest = \"speech/corpus.toml\"\n");
    let o = run(&["render", "--scenario", s(&sc), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("corpus manifest") && err.contains("speech/corpus.toml"), "{err}");
}

#[test]
fn select_finds_the_target_in_a_rendered_scene() {
    let r = rendered();
    let out = r.parent().unwrap().join("decisions.csv");
    let o = run(&[
        "select",
        "--ha",
        s(&r.join("ha.wav")),
        "--remote",
        s(&r.join("remotes.wav")),
        "--ir-set",
        s(&r.join("target_irs/irset.toml")),
        "--t-int",
        "15",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p_c: f64 = value(&o, "p_c").parse().unwrap();
    assert!(p_c >= 0.95, "{p_c}");
    assert_eq!(value(&o, "modal_channel"), value(&o, "target_channel"));

    // Recompute P_C from the written log.
    let target: usize = value(&o, "target_channel").parse().unwrap();
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "selected_channel").unwrap();
    let sel: Vec<usize> = rdr.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(sel.len().to_string(), value(&o, "frames"));
    let recomputed = sel.iter().filter(|&&c| c == target).count() as f64 / sel.len() as f64;
    assert!((recomputed - p_c).abs() < 1e-6);
}

#[test]
fn select_with_one_remote_is_constant() {
    let r = rendered();
    let dir = tempfile::tempdir().unwrap();
    let remotes = read_wav(&r.join("remotes.wav")).unwrap();
    let one = dir.path().join("one.wav");
    let audio = WavAudio { sample_rate: remotes.sample_rate, channels: vec![remotes.channels[1].clone()] };
    write_wav(&one, &audio, WavFormat::Float32).unwrap();
    let out = dir.path().join("d.csv");
    let o = run(&[
        "select", "--ha", s(&r.join("ha.wav")), "--remote", s(&one),
        "--ir-set", s(&r.join("target_irs/irset.toml")), "--t-int", "0.5",
        "--truth", s(&dir.path().join("absent.json")), "--out", s(&out),
    ]);
    // The explicit truth file does not exist.
    assert_eq!(o.status.code(), Some(2));
    let o = run(&[
        "select", "--ha", s(&r.join("ha.wav")), "--remote", s(&one),
        "--ir-set", s(&r.join("target_irs/irset.toml")), "--t-int", "0.5", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&o, "modal_channel"), "0");
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert!(rdr.records().all(|r| &r.unwrap()[2] == "0"));
}

#[test]
fn select_rejects_bad_inputs() {
    let r = rendered();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let ir = r.join("target_irs/irset.toml");
    let select = |ha: &Path, remote: &Path, ir: Option<&Path>| {
        let mut args = vec!["select", "--ha", s(ha), "--remote", s(remote), "--out", s(&out)];
        if let Some(p) = ir {
            args.extend(["--ir-set", s(p)]);
        }
        run(&args)
    };

    let corrupt = dir.path().join("corrupt.wav");
    std::fs::write(&corrupt, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
    let o = select(&r.join("ha.wav"), &corrupt, Some(&ir));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corrupt.wav"), "{}", stderr(&o));

    let remotes = read_wav(&r.join("remotes.wav")).unwrap();
    let resampled = dir.path().join("8k.wav");
    let audio = WavAudio { sample_rate: 8_000, channels: remotes.channels.clone() };
    write_wav(&resampled, &audio, WavFormat::Float32).unwrap();
    let o = select(&r.join("ha.wav"), &resampled, Some(&ir));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sample rate mismatch"), "{}", stderr(&o));

    let o = select(&r.join("ha.wav"), &r.join("remotes.wav"), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing steering"), "{}", stderr(&o));
}

fn experiment(sc: &Path, out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let mut c = bin();
    c.args(["experiment", "--scenario", s(sc), "--out", s(out)]).args(extra);
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().unwrap()
}

fn methods_in(csv_path: &Path) -> Vec<String> {
    let mut rdr = csv::Reader::from_path(csv_path).unwrap();
    let col = rdr.headers().unwrap().iter().position(|h| h == "method").unwrap();
    let mut m: Vec<String> = rdr.records().map(|r| r.unwrap()[col].to_string()).collect();
    m.sort();
    m.dedup();
    m
}

#[test]
fn experiment_is_deterministic_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "quick.toml", 6.0, "");
    let a = experiment(&sc, &dir.path().join("a"), &["--seed", "5", "--workers", "1"], &[]);
    let b = experiment(&sc, &dir.path().join("b"), &["--seed", "5", "--workers", "2"], &[]);
    let c = experiment(&sc, &dir.path().join("c"), &["--seed", "6"], &[]);
    for o in [&a, &b, &c] {
        assert!(o.status.success(), "{}", stderr(o));
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("results.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn experiment_methods_flag_env_and_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "quick.toml", 6.0, "");
    let o = experiment(&sc, &dir.path().join("flag"), &["--methods", "ncc,mog,proposed,random"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(methods_in(&dir.path().join("flag/results.csv")), ["mog", "ncc", "proposed", "random"]);

    let o = experiment(&sc, &dir.path().join("both"), &["--methods", "ncc"], &[("HEADSTEER_METHODS", "random")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(methods_in(&dir.path().join("both/results.csv")), ["ncc"]);

    let o = experiment(&sc, &dir.path().join("env"), &[], &[("HEADSTEER_METHODS", "random")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(methods_in(&dir.path().join("env/results.csv")), ["random"]);

    let o = experiment(&sc, &dir.path().join("file"), &[], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(methods_in(&dir.path().join("file/results.csv")), ["mog", "ncc", "proposed", "random"]);

    let o = experiment(&sc, &dir.path().join("bad"), &["--methods", "oracle"], &[]);
    assert_eq!(o.status.code(), Some(1));
    let o = experiment(&sc, &dir.path().join("range"), &["--n-competing", "20"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn experiment_longer_integration_helps() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path(), "trend.toml", 30.0, "");
    let o = experiment(
        &sc,
        &dir.path().join("out"),
        &["--t-int", "0.5,15", "--combos", "3", "--methods", "proposed", "--decision-logs"],
        &[],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let p_c = |t: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("proposed,2,{t},"))).unwrap();
        line.split(',').nth(3).unwrap().parse().unwrap()
    };
    let (short, long) = (p_c("0.5"), p_c("15"));
    assert!(long >= short, "{short} -> {long}");
    assert!(short > 1.0 / 3.0 && long >= 0.9, "{short} {long}");
    assert!(dir.path().join("out/decisions").read_dir().unwrap().count() >= 6);
}
